"""Idle-time exploitation step by step on a three-vertex network.

Two idle vehicles compete for a single charger.  The controller predicts
idle windows, scores every pair with the potential effective charging
time, assigns the winner, then re-evaluates the queue and stops.

Run:  python3 demos/04_charging_control.py
"""

from evpool import (ChargingController, ChargingPolicyConfig, PredictorContext,
                    SimClock, TablePredictor, Vehicle, pect)
from evpool.ev import DEFAULT_TYPES
from evpool.network import RoadNetwork, TravelTimeProvider
from evpool.stations import ChargingStation, expected_wait

net = RoadNetwork([40.0, 40.001, 40.002], [-74.0] * 3,
                  [0, 1, 1, 2], [1, 0, 2, 1], [600.0] * 4,
                  TravelTimeProvider(speed_mps=10.0))
station = ChargingStation(id=0, vertex=2, charger_count=1)
spec = DEFAULT_TYPES["leaf"]
fleet = [Vehicle(id=0, spec=spec, energy_kwh=0.5 * spec.battery_kwh, location=1),
         Vehicle(id=1, spec=spec, energy_kwh=0.5 * spec.battery_kwh, location=0)]

predictor = TablePredictor.from_vertex_means({0: 1800.0, 1: 1500.0, 2: 300.0}, 300.0)
print("predicted idle seconds: vertex 0 -> 1800, vertex 1 -> 1500, station -> 300")
print("\nscores before any assignment (travel 60 s and 120 s, empty queue):")
print(f"  vehicle 0: pect = {pect(1500, 60, 0, 300):7.1f} s")
print(f"  vehicle 1: pect = {pect(1800, 120, 0, 300):7.1f} s")

controller = ChargingController(ChargingPolicyConfig(kind="itx"), predictor)
assignments = controller.itx_step(fleet, [station], net, 0,
                                  PredictorContext(clock=SimClock(0)))
for a in assignments:
    print(f"\ncommitted: vehicle {a.vehicle_id} -> station {a.station_id} "
          f"for {a.pect_s:.0f} s")

wait = expected_wait(station, 0, {v.id: v for v in fleet})
print(f"\nqueue wait after the reservation: {wait:.0f} s")
print(f"loser's re-scored pect: {pect(1500, 60, wait, 300):.1f} s "
      f"(below the 300 s minimum, so it keeps driving)")

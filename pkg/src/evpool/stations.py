"""Charging stations: placement, FIFO queues, sessions, grid accounting.

A station anchors one or more chargers at a vertex.  Vehicles reserve a
station (inbound), join its queue on arrival, and plug in strictly in
arrival order as chargers free up.  Sessions end when the requested time
elapses, a target state of charge is reached, a hard end time passes, or
the battery hits the 99% cutoff.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .ev import (FULL_SOC, Vehicle, VehicleState, apply_charging_step,
                 charge_power_kw, estimate_charge_seconds)
from .network import RoadNetwork

DEFAULT_SUPPLY_KW = 72.0


class StationError(Exception):
    pass


@dataclass
class Session:
    vehicle_id: int
    started_minute: int
    remaining_requested_s: float | None  # None = run until target/cutoff
    target_soc: float
    end_minute: int | None


@dataclass
class ChargingStation:
    id: int
    vertex: int
    charger_count: int
    supply_limit_kw: float = DEFAULT_SUPPLY_KW
    queue: list = field(default_factory=list)      # vehicle ids, arrival order
    inbound: dict = field(default_factory=dict)    # vehicle id -> eta minute
    active: list = field(default_factory=list)     # Session list

    def occupancy(self) -> int:
        return len(self.active)

    def has_free_charger(self) -> bool:
        return len(self.active) < self.charger_count


def place_chargers(net: RoadNetwork, parking_vertices, k: int, seed: int = 0,
                   supply_limit_kw: float = DEFAULT_SUPPLY_KW) -> list[ChargingStation]:
    """Sample k charger locations weighted by closeness centrality.

    Draws are with replacement over the parking vertices; repeated draws
    on one vertex merge into a single station with that many chargers.
    """
    parking = np.asarray(sorted(set(int(v) for v in parking_vertices)), dtype=np.int64)
    if parking.size == 0:
        raise StationError("no parking vertices to place chargers on")
    if k <= 0:
        raise StationError("charger count must be positive")
    centrality = net.closeness_centrality()[parking]
    probs = centrality / centrality.sum()
    rng = np.random.default_rng(seed)
    draws = rng.choice(parking, size=k, replace=True, p=probs)
    counts: dict[int, int] = {}
    for v in draws:
        counts[int(v)] = counts.get(int(v), 0) + 1
    stations = []
    for sid, vertex in enumerate(sorted(counts)):
        stations.append(ChargingStation(id=sid, vertex=vertex,
                                        charger_count=counts[vertex],
                                        supply_limit_kw=supply_limit_kw))
    return stations


def request_charge(station: ChargingStation, vehicle: Vehicle, eta_minute: int) -> None:
    """Register an inbound reservation; the charge plan lives on the vehicle."""
    if vehicle.charge_plan is None:
        raise StationError(f"vehicle {vehicle.id} has no charge plan")
    if vehicle.charge_plan.station_id != station.id:
        raise StationError("charge plan does not name this station")
    if vehicle.id in station.inbound or vehicle.id in station.queue or any(
            s.vehicle_id == vehicle.id for s in station.active):
        raise StationError(f"vehicle {vehicle.id} already reserved at station {station.id}")
    station.inbound[vehicle.id] = int(eta_minute)


def arrive(station: ChargingStation, vehicle: Vehicle) -> None:
    """Move a reserved vehicle from inbound into the FIFO queue."""
    station.inbound.pop(vehicle.id, None)
    station.queue.append(vehicle.id)
    vehicle.state = VehicleState.QUEUED
    vehicle.path.clear()


def cancel_inbound(station: ChargingStation, vehicle_id: int) -> None:
    station.inbound.pop(vehicle_id, None)


def _session_done(session: Session, vehicle: Vehicle, now: int) -> bool:
    if vehicle.uncouple or vehicle.soc >= session.target_soc - 1e-12:
        return True
    if session.remaining_requested_s is not None and session.remaining_requested_s <= 0:
        return True
    if session.end_minute is not None and now + 1 >= session.end_minute:
        return True
    return False


def station_step(station: ChargingStation, now: int, fleet: dict[int, Vehicle],
                 dt_s: float = 60.0):
    """One simulation minute: charge, end due sessions, promote the queue.

    Returns (delivered kWh per vehicle id, list of event dicts).
    """
    delivered: dict[int, float] = {}
    events = []
    still_active = []
    for session in station.active:
        vehicle = fleet[session.vehicle_id]
        kwh = apply_charging_step(vehicle, station.supply_limit_kw, dt_s)
        if kwh > 0:
            delivered[vehicle.id] = delivered.get(vehicle.id, 0.0) + kwh
        if session.remaining_requested_s is not None:
            session.remaining_requested_s -= dt_s
        if _session_done(session, vehicle, now):
            vehicle.charge_plan = None
            vehicle.uncouple = False
            vehicle.state = VehicleState.IDLE
            vehicle.idle_since_minute = None
            events.append({"kind": "session_end", "vehicle": vehicle.id,
                           "station": station.id, "soc": round(vehicle.soc, 6)})
        else:
            still_active.append(session)
    station.active = still_active
    while station.queue and station.has_free_charger():
        vid = station.queue.pop(0)
        vehicle = fleet[vid]
        plan = vehicle.charge_plan
        if plan is None:
            continue
        vehicle.state = VehicleState.CHARGING
        vehicle.uncouple = False
        station.active.append(Session(
            vehicle_id=vid, started_minute=now,
            remaining_requested_s=plan.requested_s,
            target_soc=plan.target_soc if plan.target_soc is not None else FULL_SOC,
            end_minute=plan.end_minute))
        events.append({"kind": "session_start", "vehicle": vid,
                       "station": station.id, "soc": round(vehicle.soc, 6)})
    return delivered, events


def _remaining_estimate(session: Session, vehicle: Vehicle, now: int,
                        limit_kw: float) -> float:
    """Seconds until this active session frees its charger."""
    t = estimate_charge_seconds(vehicle.spec, vehicle.soc, session.target_soc, limit_kw)
    if session.remaining_requested_s is not None:
        t = min(t, max(session.remaining_requested_s, 0.0))
    if session.end_minute is not None:
        t = min(t, max((session.end_minute - now) * 60.0, 0.0))
    return t


def _planned_estimate(vehicle: Vehicle, now: int, limit_kw: float) -> float:
    """Seconds a queued or inbound vehicle will hold a charger once plugged."""
    plan = vehicle.charge_plan
    if plan is None:
        return 0.0
    target = plan.target_soc if plan.target_soc is not None else FULL_SOC
    t = estimate_charge_seconds(vehicle.spec, vehicle.soc, target, limit_kw)
    if plan.requested_s is not None:
        t = min(t, plan.requested_s)
    if plan.end_minute is not None:
        t = min(t, max((plan.end_minute - now) * 60.0, 0.0))
    return t


def expected_wait(station: ChargingStation, now: int, fleet: dict[int, Vehicle]) -> float:
    """Seconds until a vehicle arriving now would plug in.

    Deterministic FIFO forward simulation over active sessions, the
    queue, and inbound reservations ordered by their arrival estimate.
    """
    free_at = [0.0] * station.charger_count
    for i, session in enumerate(station.active):
        free_at[i] = _remaining_estimate(session, fleet[session.vehicle_id], now,
                                         station.supply_limit_kw)
    free_at.sort()
    pending = [(0.0, vid) for vid in station.queue]
    pending += sorted(((max(eta - now, 0) * 60.0, vid)
                       for vid, eta in station.inbound.items()),
                      key=lambda p: (p[0], p[1]))
    for arrival_s, vid in pending:
        start = max(free_at[0], arrival_s)
        free_at[0] = start + _planned_estimate(fleet[vid], now, station.supply_limit_kw)
        free_at.sort()
    return free_at[0]


def grid_power_kw(stations, fleet: dict[int, Vehicle]):
    """Instantaneous draw: total kW and per-station kW at current SoCs."""
    per_station = {}
    total = 0.0
    for st in stations:
        kw = sum(charge_power_kw(fleet[s.vehicle_id].spec, fleet[s.vehicle_id].soc,
                                 st.supply_limit_kw)
                 for s in st.active)
        per_station[st.id] = kw
        total += kw
    return total, per_station


def save_station_layout(stations, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station_id", "vertex", "charger_count"])
        for st in stations:
            w.writerow([st.id, st.vertex, st.charger_count])


def load_station_layout(path, supply_limit_kw: float = DEFAULT_SUPPLY_KW):
    stations = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            stations.append(ChargingStation(
                id=int(row["station_id"]), vertex=int(row["vertex"]),
                charger_count=int(row["charger_count"]),
                supply_limit_kw=supply_limit_kw))
    if not stations:
        raise StationError(f"no stations in {path}")
    return stations

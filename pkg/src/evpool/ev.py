"""Vehicle state, drive/idle energy physics and the tapered charge curve.

Drive power is aerodynamic drag plus rolling resistance,
``P = 0.5 * 1.225 * C_d * A * v^3 + 9.81 * C_r * m * v`` watts with the
mass including 80 kg per passenger; traversal energy is ``P * t`` joules
converted to kWh.  Charging supplies the lesser of vehicle and station
limits up to 70% state of charge, then falls off linearly to zero at
full; vehicles uncouple at 99%.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

AIR_DENSITY = 1.225          # kg/m^3
GRAVITY = 9.81               # m/s^2
PASSENGER_MASS_KG = 80.0
TAPER_SOC = 0.7              # charge power starts declining here
FULL_SOC = 0.99              # uncouple threshold
IDLE_POWER_W = 1500.0
_TAPER_SUBSTEP_SOC = 0.95    # finer Euler steps above this
_TAPER_SUBSTEP_S = 1.0


@dataclass(frozen=True)
class VehicleTypeSpec:
    name: str
    curb_mass_kg: float
    drag_coeff: float
    frontal_area_m2: float
    rolling_coeff: float
    battery_kwh: float
    max_charge_kw: float
    seats: int
    op_cost_per_km: float
    idle_power_w: float = IDLE_POWER_W

    def __post_init__(self):
        for name in ("curb_mass_kg", "drag_coeff", "frontal_area_m2", "rolling_coeff",
                     "battery_kwh", "max_charge_kw", "op_cost_per_km", "idle_power_w"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.seats < 1:
            raise ValueError("seats must be >= 1")


# Manufacturer-style defaults; every run config may override these.
DEFAULT_TYPES = {
    "leaf": VehicleTypeSpec("leaf", curb_mass_kg=1580.0, drag_coeff=0.28,
                            frontal_area_m2=2.27, rolling_coeff=0.010,
                            battery_kwh=39.0, max_charge_kw=50.0, seats=5,
                            op_cost_per_km=0.12),
    "model3": VehicleTypeSpec("model3", curb_mass_kg=1844.0, drag_coeff=0.23,
                              frontal_area_m2=2.22, rolling_coeff=0.009,
                              battery_kwh=75.0, max_charge_kw=72.0, seats=5,
                              op_cost_per_km=0.14),
    "env200": VehicleTypeSpec("env200", curb_mass_kg=1698.0, drag_coeff=0.32,
                              frontal_area_m2=2.80, rolling_coeff=0.011,
                              battery_kwh=40.0, max_charge_kw=46.0, seats=7,
                              op_cost_per_km=0.16),
}


def drive_power_w(spec: VehicleTypeSpec, speed_mps, passengers: int):
    """Mechanical power demand at constant speed, watts. Array-friendly."""
    if isinstance(speed_mps, (int, float)) and speed_mps < 0:
        raise ValueError("speed must be >= 0")
    mass = spec.curb_mass_kg + PASSENGER_MASS_KG * passengers
    drag = 0.5 * AIR_DENSITY * spec.drag_coeff * spec.frontal_area_m2 * speed_mps ** 3
    rolling = GRAVITY * spec.rolling_coeff * mass * speed_mps
    return drag + rolling


def traversal_energy_kwh(spec: VehicleTypeSpec, length_m: float, seconds: float,
                         passengers: int) -> float:
    """Energy to traverse an edge at its implied constant speed."""
    if seconds <= 0:
        raise ValueError("travel time must be positive")
    speed = length_m / seconds
    return drive_power_w(spec, speed, passengers) * seconds / 3.6e6


def charge_power_kw(spec: VehicleTypeSpec, soc: float, station_limit_kw: float) -> float:
    """Supplied power at a given state of charge: flat then linear taper."""
    base = min(spec.max_charge_kw, station_limit_kw)
    if soc <= TAPER_SOC:
        return base
    return max(base * (1.0 - soc) / (1.0 - TAPER_SOC), 0.0)


def estimate_charge_seconds(spec: VehicleTypeSpec, soc_from: float, soc_to: float,
                            station_limit_kw: float) -> float:
    """Closed-form time to charge between two SoC levels.

    Used only for queue-wait estimates; actual charging integrates the
    Euler step so delivered energy stays exactly accounted.
    """
    soc_to = min(soc_to, FULL_SOC)
    if soc_to <= soc_from:
        return 0.0
    base = min(spec.max_charge_kw, station_limit_kw)
    cap = spec.battery_kwh
    t = 0.0
    if soc_from < TAPER_SOC:
        t += (min(soc_to, TAPER_SOC) - soc_from) * cap / base * 3600.0
        soc_from = TAPER_SOC
    if soc_to > TAPER_SOC:
        # dE/dt = base * (1 - soc) / 0.3 -> exponential approach to full
        tau = (1.0 - TAPER_SOC) * cap / base * 3600.0
        t += tau * math.log((1.0 - soc_from) / (1.0 - soc_to))
    return t


class VehicleState(Enum):
    IDLE = "idle"
    REPOSITIONING = "repositioning"
    DISPATCHING = "dispatching"
    SERVING = "serving"
    TO_CHARGER = "enroute_to_charger"
    QUEUED = "queued"
    CHARGING = "charging"
    STRANDED = "stranded"


# states in which a vehicle is tied up with charging and is not a dispatch
# or repositioning candidate
CHARGING_STATES = (VehicleState.TO_CHARGER, VehicleState.QUEUED, VehicleState.CHARGING)


@dataclass
class ChargePlan:
    station_id: int
    requested_s: float | None = None   # duration-style request (ITX)
    target_soc: float | None = None    # level-style request (baselines)
    end_minute: int | None = None      # hard stop (overnight window)


@dataclass
class Vehicle:
    id: int
    spec: VehicleTypeSpec
    energy_kwh: float
    location: int
    state: VehicleState = VehicleState.IDLE
    seconds_at_vertex: float = 0.0
    path: deque = field(default_factory=deque)
    planned_stops: deque = field(default_factory=deque)
    onboard: list = field(default_factory=list)            # TripRequest refs
    assigned: list = field(default_factory=list)           # not yet picked up
    charge_plan: ChargePlan | None = None
    stranded_since: int | None = None
    uncouple: bool = False
    idle_since_minute: int | None = None
    idle_snapshot: object | None = None
    # conservation counters
    consumed_kwh: float = 0.0
    charged_kwh: float = 0.0
    km_driven: float = 0.0
    initial_kwh: float = 0.0

    def __post_init__(self):
        self.initial_kwh = self.energy_kwh

    @property
    def soc(self) -> float:
        return self.energy_kwh / self.spec.battery_kwh

    @property
    def onboard_passengers(self) -> int:
        return sum(r.passengers for r in self.onboard)

    @property
    def vacant_seats(self) -> int:
        return self.spec.seats - self.onboard_passengers

    def is_idle(self) -> bool:
        return self.state == VehicleState.IDLE

    def check_invariants(self):
        assert 0.0 <= self.energy_kwh <= self.spec.battery_kwh + 1e-9
        assert self.onboard_passengers <= self.spec.seats
        if self.state == VehicleState.IDLE:
            assert not self.onboard and not self.path and self.charge_plan is None

    def drain(self, kwh: float) -> float:
        """Consume up to kwh; returns the amount actually drawn."""
        actual = min(kwh, self.energy_kwh)
        self.energy_kwh -= actual
        self.consumed_kwh += actual
        return actual


def apply_charging_step(vehicle: Vehicle, station_limit_kw: float, dt_s: float) -> float:
    """Forward-Euler charge over dt_s; returns delivered kWh.

    Power is held at the step-start SoC; above 95% SoC the step is split
    into 1 s sub-steps to bound the clip error at the 99% cutoff.  Sets
    the uncouple flag once the cutoff is reached.
    """
    cap = vehicle.spec.battery_kwh
    delivered = 0.0
    remaining = dt_s
    while remaining > 0 and not vehicle.uncouple:
        soc = vehicle.energy_kwh / cap
        if soc >= FULL_SOC:
            vehicle.uncouple = True
            break
        h = min(remaining, _TAPER_SUBSTEP_S) if soc > _TAPER_SUBSTEP_SOC else remaining
        de = charge_power_kw(vehicle.spec, soc, station_limit_kw) * h / 3600.0
        room = FULL_SOC * cap - vehicle.energy_kwh
        if de >= room:
            de = room
            vehicle.uncouple = True
        vehicle.energy_kwh += de
        delivered += de
        remaining -= h
    vehicle.charged_kwh += delivered
    return delivered


def apply_idle_draw(vehicle: Vehicle, dt_s: float, strand_minute: int | None = None) -> float:
    """Stationary parasitic draw, floored at an empty battery.

    When ``strand_minute`` is given and the battery empties, the vehicle
    transitions to STRANDED (queued vehicles pass None: they are already
    at a station and simply wait for their charger).
    """
    if vehicle.state == VehicleState.STRANDED:
        return 0.0
    drawn = vehicle.drain(vehicle.spec.idle_power_w * dt_s / 3.6e6)
    if vehicle.energy_kwh <= 0.0 and strand_minute is not None:
        vehicle.state = VehicleState.STRANDED
        vehicle.stranded_since = strand_minute
        vehicle.path.clear()
    return drawn

"""Charging control: idle-time exploitation plus six reference policies.

The exploitation controller scores every idle-vehicle/station pair with
the potential effective charging time

    pect = t_idle - t_wait - max(0, t_wait + t_idle_after - t_idle)
    t_wait = max(t_travel, t_queue)

then repeatedly solves a maximum-value assignment over the pairs whose
score clears the minimum charging time, committing winners and
re-evaluating queue waits, until no positive pair or no idle vehicle
remains.  Reference policies trigger on a low state of charge or an
overnight window and pick stations by distance or by distance plus
expected queue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .ev import (CHARGING_STATES, FULL_SOC, ChargePlan, Vehicle, VehicleState,
                 drive_power_w)
from .stations import arrive, expected_wait, request_charge

T_MIN_S = 300.0
SOC_THRESHOLD = 0.10
QUICK_TARGET = 0.70
FULL_TARGET = 0.99
OVERNIGHT_START_MIN = 90    # 01:30
OVERNIGHT_END_MIN = 390     # 06:30
REACH_MARGIN = 0.95
STRANDED_HOLD_MINUTES = 60
CANONICAL_CELL_LIMIT = 2048

BASELINE_KINDS = ("qn", "qa", "fn", "fa", "oq", "of")
POLICY_KINDS = ("itx",) + BASELINE_KINDS + ("none",)


def pect(t_idle: float, t_travel: float, t_queue: float, t_idle_after: float) -> float:
    """Exploitable charging seconds for one vehicle-station pair."""
    t_wait = max(t_travel, t_queue)
    return t_idle - t_wait - max(0.0, t_wait + t_idle_after - t_idle)


# -- maximum-value bipartite matching ---------------------------------------


def hungarian(values, maximize: bool = True):
    """Optimal matching over a rectangular value matrix.

    Rows and columns may stay unmatched; pairs that do not improve the
    total (value <= 0 under maximize) are never taken, and forbidden
    pairs are encoded as -inf.  Returns a list of (row, col) pairs.  On
    small instances the result is canonical: the lexicographically
    smallest pair list among all optimal matchings.
    """
    w = np.asarray(values, dtype=float)
    if w.ndim != 2 or w.size == 0:
        return []
    if not maximize:
        w = -w
    w = np.where(np.isneginf(w), -np.inf, w)
    if np.isnan(w).any() or np.isposinf(w).any():
        raise ValueError("matrix entries must be finite or -inf")
    clamped = np.where(np.isfinite(w) & (w > 0.0), w, 0.0)
    if clamped.max(initial=0.0) <= 0.0:
        return []
    rows, cols = linear_sum_assignment(clamped, maximize=True)
    pairs = [(int(i), int(j)) for i, j in zip(rows, cols) if w[i, j] > 0.0]
    if w.size <= CANONICAL_CELL_LIMIT:
        pairs = _canonical_matching(w, clamped)
    return sorted(pairs)


def matching_value(values, pairs) -> float:
    w = np.asarray(values, dtype=float)
    return float(sum(w[i, j] for i, j in pairs))


def _opt_value(clamped) -> float:
    if clamped.size == 0 or clamped.max(initial=0.0) <= 0.0:
        return 0.0
    rows, cols = linear_sum_assignment(clamped, maximize=True)
    return float(clamped[rows, cols].sum())


def _canonical_matching(w, clamped):
    """Lexicographically smallest optimal matching via sequential fixing."""
    total = _opt_value(clamped)
    tol = 1e-9 * max(1.0, abs(total))
    nr, nc = w.shape
    rows = list(range(nr))
    cols = list(range(nc))
    fixed = 0.0
    pairs = []
    for i in range(nr):
        rows.remove(i)
        rest_rows = np.array(rows, dtype=int)
        chosen = None
        for j in cols:
            if not (w[i, j] > 0.0):
                continue
            sub = clamped[np.ix_(rest_rows, [c for c in cols if c != j])]
            if fixed + w[i, j] + _opt_value(sub) >= total - tol:
                chosen = j
                break
        if chosen is not None:
            pairs.append((i, chosen))
            fixed += w[i, chosen]
            cols.remove(chosen)
        # row i stays unmatched only when no optimal completion uses it
    return pairs


# -- controller --------------------------------------------------------------


@dataclass
class ChargingPolicyConfig:
    kind: str = "itx"
    soc_threshold: float = SOC_THRESHOLD
    quick_target: float = QUICK_TARGET
    full_target: float = FULL_TARGET
    overnight_start_min: int = OVERNIGHT_START_MIN
    overnight_end_min: int = OVERNIGHT_END_MIN
    t_min_s: float = T_MIN_S
    reach_margin: float = REACH_MARGIN

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown charging policy {self.kind!r}")
        for p in (self.soc_threshold, self.quick_target, self.full_target):
            if not 0.0 < p <= 1.0:
                raise ValueError("SoC parameters must lie in (0, 1]")
        if not 0 <= self.overnight_start_min < self.overnight_end_min <= 1440:
            raise ValueError("invalid overnight window")


@dataclass
class ChargeAssignment:
    vehicle_id: int
    station_id: int
    decided_at: int
    pect_s: float | None = None
    target_soc: float | None = None
    audit: dict = field(default_factory=dict)


def _reach_energy_kwh(spec, travel_s, meters):
    """Energy to cover a path summarized by total time and length, empty."""
    travel_s = np.maximum(np.asarray(travel_s, dtype=float), 1e-9)
    speed = np.asarray(meters, dtype=float) / travel_s
    return drive_power_w(spec, speed, 0) * travel_s / 3.6e6


def _commit(vehicle: Vehicle, station, net, minute: int, plan: ChargePlan):
    vehicle.charge_plan = plan
    eta_s = net.travel_time(vehicle.location, station.vertex, minute)
    request_charge(station, vehicle, minute + math.ceil(eta_s / 60.0))
    if vehicle.location == station.vertex:
        arrive(station, vehicle)
        vehicle.planned_stops.clear()
        vehicle.seconds_at_vertex = 0.0
    else:
        leg, _ = net.shortest_path(vehicle.location, station.vertex, minute)
        vehicle.path.clear()
        vehicle.path.extend(leg[1:])
        vehicle.planned_stops.clear()
        vehicle.seconds_at_vertex = 0.0
        vehicle.state = VehicleState.TO_CHARGER
    vehicle.idle_since_minute = None


class ChargingController:
    """Per-run charging policy with its window bookkeeping."""

    def __init__(self, config: ChargingPolicyConfig, predictor=None):
        self.config = config
        self.predictor = predictor
        self._overnight_served: set[int] = set()
        self._window_day: int | None = None

    def step(self, fleet, stations, net, minute: int, ctx):
        kind = self.config.kind
        if kind == "none":
            return []
        if kind == "itx":
            return self.itx_step(fleet, stations, net, minute, ctx)
        return self.baseline_step(fleet, stations, net, minute, ctx)

    # -- idle time exploitation ------------------------------------------

    def itx_step(self, fleet, stations, net, minute: int, ctx):
        cfg = self.config
        if self.predictor is None:
            raise ValueError("itx policy needs an idle-time predictor")
        idle = sorted((v for v in fleet if v.state == VehicleState.IDLE),
                      key=lambda v: v.id)
        if not idle or not stations:
            return []
        fleet_by_id = {v.id: v for v in fleet}
        station_vertices = np.array([s.vertex for s in stations], dtype=np.int64)
        t_idle = np.array([self.predictor.predict(v.location, minute, ctx)
                           for v in idle])
        # travel seconds / meters / reach feasibility, one row per idle vehicle
        travel = np.empty((len(idle), len(stations)))
        reachable = np.empty_like(travel, dtype=bool)
        for i, v in enumerate(idle):
            row_s = net.dist_row(v.location, minute)[station_vertices]
            row_m = net.meters_row(v.location, minute)[station_vertices]
            travel[i] = row_s
            need = _reach_energy_kwh(v.spec, row_s, row_m)
            reachable[i] = np.isfinite(row_s) & (need <= v.energy_kwh * cfg.reach_margin)
        after_cache: dict[tuple[int, int], float] = {}

        def idle_after(si: int, at: int) -> float:
            key = (si, at)
            if key not in after_cache:
                after_cache[key] = self.predictor.predict(
                    stations[si].vertex, at, ctx)
            return after_cache[key]

        remaining = list(range(len(idle)))
        assignments = []
        while remaining:
            queue_s = np.array([expected_wait(s, minute, fleet_by_id) for s in stations])
            sub_travel = travel[remaining]
            t_wait = np.maximum(sub_travel, queue_s[None, :])
            arrive_at = (minute + np.rint(sub_travel / 60.0)).astype(np.int64)
            after = np.empty_like(sub_travel)
            for si in range(len(stations)):
                uniq, inv = np.unique(arrive_at[:, si], return_inverse=True)
                vals = np.array([idle_after(si, int(at)) for at in uniq])
                after[:, si] = vals[inv]
            ti = t_idle[remaining][:, None]
            scores = ti - t_wait - np.maximum(0.0, t_wait + after - ti)
            scores = np.where(reachable[remaining], scores, -np.inf)
            scores = np.where(scores > cfg.t_min_s, scores, -np.inf)
            if not np.isfinite(scores).any():
                break
            pairs = hungarian(scores, maximize=True)
            if not pairs:
                break
            taken = []
            for a, si in pairs:
                v = idle[remaining[a]]
                station = stations[si]
                value = float(scores[a, si])
                plan = ChargePlan(station_id=station.id, requested_s=value)
                _commit(v, station, net, minute, plan)
                assignments.append(ChargeAssignment(
                    vehicle_id=v.id, station_id=station.id, decided_at=minute,
                    pect_s=value,
                    audit={"t_idle": float(ti[a, 0]),
                           "t_travel": float(sub_travel[a, si]),
                           "t_queue": float(queue_s[si]),
                           "t_idle_after": float(after[a, si]),
                           "soc": v.soc}))
                taken.append(remaining[a])
            remaining = [i for i in remaining if i not in taken]
        return assignments

    # -- reference policies ------------------------------------------------

    def baseline_step(self, fleet, stations, net, minute: int, ctx):
        cfg = self.config
        kind = cfg.kind
        if kind in ("qn", "qa", "fn", "fa"):
            return self._low_soc_step(fleet, stations, net, minute,
                                      target=cfg.quick_target if kind[0] == "q"
                                      else cfg.full_target,
                                      availability=kind[1] == "a")
        return self._overnight_step(fleet, stations, net, minute, ctx)

    def _station_rows(self, vehicle, stations, net, minute):
        verts = np.array([s.vertex for s in stations], dtype=np.int64)
        row_s = net.dist_row(vehicle.location, minute)[verts]
        row_m = net.meters_row(vehicle.location, minute)[verts]
        return row_s, row_m

    def _low_soc_step(self, fleet, stations, net, minute, target, availability):
        cfg = self.config
        fleet_by_id = {v.id: v for v in fleet}
        assignments = []
        for v in sorted(fleet, key=lambda x: x.id):
            if v.state != VehicleState.IDLE or v.soc >= cfg.soc_threshold:
                continue
            row_s, row_m = self._station_rows(v, stations, net, minute)
            if availability:
                need = _reach_energy_kwh(v.spec, row_s, row_m)
                ok = np.isfinite(row_s) & (need <= v.energy_kwh * cfg.reach_margin)
                if not ok.any():
                    continue
                waits = np.array([expected_wait(s, minute, fleet_by_id)
                                  for s in stations])
                score = np.where(ok, row_s + waits, np.inf)
            else:
                score = np.where(np.isfinite(row_s), row_s, np.inf)
            si = int(np.argmin(score))
            if not np.isfinite(score[si]):
                continue
            station = stations[si]
            plan = ChargePlan(station_id=station.id, target_soc=target)
            _commit(v, station, net, minute, plan)
            assignments.append(ChargeAssignment(
                vehicle_id=v.id, station_id=station.id, decided_at=minute,
                target_soc=target,
                audit={"soc": v.soc, "travel_s": float(row_s[si])}))
        return assignments

    def _overnight_step(self, fleet, stations, net, minute, ctx):
        cfg = self.config
        mod = minute % 1440
        if not (cfg.overnight_start_min <= mod < cfg.overnight_end_min):
            return []
        day = minute // 1440
        if self._window_day != day:
            self._window_day = day
            self._overnight_served.clear()
        target = cfg.quick_target if cfg.kind == "oq" else cfg.full_target
        fleet_by_id = {v.id: v for v in fleet}
        capacity = sum(s.charger_count for s in stations)
        committed = sum(1 for v in fleet if v.state in CHARGING_STATES)
        open_slots = capacity - committed
        if open_slots <= 0:
            return []
        end_minute = minute - mod + cfg.overnight_end_min
        candidates = sorted(
            (v for v in fleet
             if v.state == VehicleState.IDLE and v.id not in self._overnight_served
             and v.soc < target),
            key=lambda v: (v.soc, v.id))
        assignments = []
        for v in candidates[:open_slots]:
            row_s, row_m = self._station_rows(v, stations, net, minute)
            need = _reach_energy_kwh(v.spec, row_s, row_m)
            ok = np.isfinite(row_s) & (need <= v.energy_kwh * cfg.reach_margin)
            if not ok.any():
                continue
            waits = np.array([expected_wait(s, minute, fleet_by_id) for s in stations])
            score = np.where(ok, row_s + waits, np.inf)
            si = int(np.argmin(score))
            station = stations[si]
            plan = ChargePlan(station_id=station.id, target_soc=target,
                              end_minute=end_minute)
            _commit(v, station, net, minute, plan)
            self._overnight_served.add(v.id)
            assignments.append(ChargeAssignment(
                vehicle_id=v.id, station_id=station.id, decided_at=minute,
                target_soc=target,
                audit={"soc": v.soc, "travel_s": float(row_s[si]),
                       "wait_s": float(waits[si])}))
        return assignments


def stranded_step(fleet, stations, net, minute: int,
                  hold_minutes: int = STRANDED_HOLD_MINUTES):
    """Tow vehicles stranded past the hold time to their nearest station.

    The vehicle teleports into the station queue with a full-charge plan.
    Returns tow records; the caller books costs and settles any customers
    that were aboard.
    """
    tows = []
    if not stations:
        return tows
    verts = np.array([s.vertex for s in stations], dtype=np.int64)
    for v in sorted(fleet, key=lambda x: x.id):
        if v.state != VehicleState.STRANDED or v.stranded_since is None:
            continue
        if minute - v.stranded_since < hold_minutes:
            continue
        row_s = net.dist_row(v.location, minute)[verts]
        si = int(np.argmin(row_s))
        station = stations[si]
        km = net.network_distance_m(v.location, station.vertex, minute) / 1000.0
        onboard = list(v.onboard)
        assigned = list(v.assigned)
        v.onboard.clear()
        v.assigned.clear()
        v.planned_stops.clear()
        v.path.clear()
        v.stranded_since = None
        v.location = station.vertex
        v.charge_plan = ChargePlan(station_id=station.id, target_soc=FULL_TARGET)
        station.inbound.pop(v.id, None)
        station.queue.append(v.id)
        v.state = VehicleState.QUEUED
        tows.append({"vehicle": v.id, "station": station.id, "km": km,
                     "onboard": onboard, "assigned": assigned})
    return tows

"""Per-minute simulation: request flow, dispatch, charging, motion, ledger.

Each simulated minute executes, in strict order: (1) retrieve new
requests and merge them with the still-pending pool, (2) expire requests
pending longer than five minutes, (3) dispatch, (4) charging control and
stranded handling, (5) repositioning of the remaining idle vehicles,
(6) vehicle motion with energy accounting, pickups/dropoffs and station
queues, (7) ledger write.  A warmup phase runs dispatch and
repositioning only, with no energy accounting and no metrics.

Money is integer cents throughout so the episode ledger reconciles
exactly against the raw event log.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import dispatch as dp
from .charging import (ChargingController, ChargingPolicyConfig, POLICY_KINDS,
                       stranded_step)
from .ev import (CHARGING_STATES, DEFAULT_TYPES, Vehicle, VehicleState,
                 VehicleTypeSpec, apply_idle_draw, traversal_energy_kwh)
from .network import RoadNetwork, TravelTimeProvider, build_grid, load_network
from .predictor import (ConstantPredictor, GcnPredictor, PredictorContext,
                        PredictorWeights, SampleWriter, SimClock, TablePredictor,
                        build_features, fleet_capacity_array)
from .repositioning import DemandWindow, reposition
from .stations import load_station_layout, place_chargers, station_step
from .trips import (MAX_PENDING_MINUTES, RequestState, RequestStream, TripRequest,
                    load_request_csv, synthesize_demand)

MOVING_STATES = (VehicleState.DISPATCHING, VehicleState.SERVING,
                 VehicleState.REPOSITIONING, VehicleState.TO_CHARGER)


class SimInvariantError(Exception):
    """Internal consistency violation; carries a diagnostic dump."""


def cents(amount_dollars_x100: float) -> int:
    """Round a cent amount half-up to an integer."""
    return int(math.floor(amount_dollars_x100 + 0.5))


def fare_cents(direct_travel_min: float, direct_km: float,
               base=2.55, per_min=0.35, per_km=1.09, floor=7.00) -> int:
    """Trip fare in cents: base + time + distance, floored at the minimum."""
    if direct_travel_min < 0 or direct_km < 0:
        raise ValueError("fare inputs must be >= 0")
    raw = cents((base + per_min * direct_travel_min + per_km * direct_km) * 100.0)
    return max(raw, cents(floor * 100.0))


@dataclass
class SimParams:
    max_delay_s: float = 300.0
    c_ko_s: float = 3600.0
    t_min_s: float = 300.0
    horizon_s: float = 1800.0
    rtv_timeout_s: float = 5.0
    assign_budget_s: float = 10.0
    assign_exact_limit: int = 5000
    rv_candidates: int = 30
    rr_candidates: int = 16
    max_trip_size: int = 4
    soc_threshold: float = 0.10
    quick_target: float = 0.70
    full_target: float = 0.99
    overnight_start_min: int = 90
    overnight_end_min: int = 390
    reach_margin: float = 0.95
    charge_cost_per_kwh: float = 0.40
    tow_base: float = 125.0
    tow_per_km: float = 2.50
    fare_base: float = 2.55
    fare_per_min: float = 0.35
    fare_per_km: float = 1.09
    fare_floor: float = 7.00
    stranded_hold_min: int = 60


@dataclass
class SimConfig:
    network: dict = field(default_factory=lambda: {
        "kind": "grid", "rows": 15, "cols": 15, "spacing_m": 300.0})
    travel_time: dict = field(default_factory=lambda: {"mode": "constant"})
    demand: dict = field(default_factory=lambda: {
        "kind": "synthetic", "base_rate": 1.0})
    fleet: dict = field(default_factory=lambda: {"leaf": 30, "model3": 20, "env200": 10})
    vehicle_types: dict = field(default_factory=dict)
    chargers: dict = field(default_factory=lambda: {
        "count": 10, "parking_fraction": 0.2, "supply_limit_kw": 72.0})
    policy: str = "none"
    predictor: dict | None = None
    warmup_days: float = 3.0
    run_days: float = 1.0
    seed: int = 0
    start_weekday: int = 0
    initial_soc: tuple = (0.5, 1.0)
    charging_free: bool = False
    log_samples_path: str | None = None
    params: SimParams = field(default_factory=SimParams)

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        doc = dict(doc)
        params = SimParams(**doc.pop("params", {}))
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "initial_soc" in doc:
            doc["initial_soc"] = tuple(doc["initial_soc"])
        cfg = cls(**doc, params=params)
        cfg.validate()
        return cfg

    def validate(self):
        if self.policy not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.run_days < 0 or self.warmup_days < 0:
            raise ValueError("day counts must be >= 0")
        if not self.fleet or any(c < 0 for c in self.fleet.values()):
            raise ValueError("fleet must name at least one vehicle type")
        lo, hi = self.initial_soc
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError("initial_soc must be an ascending pair in [0, 1]")
        if self.policy == "itx" and self.predictor is None and not self.charging_free:
            raise ValueError("itx policy requires a predictor")

    def as_dict(self) -> dict:
        doc = asdict(self)
        doc["initial_soc"] = list(self.initial_soc)
        return doc


def _vehicle_types(config: SimConfig) -> dict:
    types = dict(DEFAULT_TYPES)
    for name, override in config.vehicle_types.items():
        base = {f: getattr(types[name], f) for f in types[name].__dataclass_fields__} \
            if name in types else {"name": name}
        base.update(override)
        types[name] = VehicleTypeSpec(**base)
    return types


def build_network(config: SimConfig) -> RoadNetwork:
    tdoc = dict(config.travel_time)
    mode = tdoc.pop("mode", "constant")
    if "multipliers" in tdoc:
        tdoc["hourly_multipliers"] = tuple(tdoc.pop("multipliers"))
    provider = TravelTimeProvider(mode=mode, **tdoc)
    ndoc = config.network
    if ndoc.get("kind") == "grid":
        return build_grid(ndoc.get("rows", 15), ndoc.get("cols", 15),
                          ndoc.get("spacing_m", 300.0), provider=provider)
    return load_network(ndoc["path"], provider=provider)


def build_predictor(config: SimConfig, net: RoadNetwork):
    doc = config.predictor
    if doc is None:
        return None
    kind = doc.get("kind")
    if kind == "table":
        return TablePredictor.load(doc["path"])
    if kind == "gcn":
        weights = PredictorWeights.load(doc["path"])
        return GcnPredictor(weights, net.normalized_adjacency())
    if kind == "constant":
        return ConstantPredictor(doc.get("seconds", 600.0))
    raise ValueError(f"unknown predictor kind {kind!r}")


class Simulation:
    def __init__(self, config: SimConfig, net: RoadNetwork | None = None,
                 stream: RequestStream | None = None,
                 stations: list | None = None, predictor=None):
        config.validate()
        self.config = config
        self.params = config.params
        self.net = net if net is not None else build_network(config)
        self.clock = SimClock(config.start_weekday)
        self.warmup_minutes = int(round(config.warmup_days * 1440))
        self.run_minutes = int(round(config.run_days * 1440))
        self.end_minute = self.warmup_minutes + self.run_minutes
        seeds = np.random.SeedSequence(config.seed).spawn(4)
        rng_fleet = np.random.default_rng(seeds[0])
        rng_park = np.random.default_rng(seeds[1])
        demand_seed = int(seeds[2].generate_state(1)[0])
        station_seed = int(seeds[3].generate_state(1)[0])

        if stream is not None:
            self.stream = stream
        else:
            ddoc = config.demand
            if ddoc.get("kind") == "csv":
                self.stream = load_request_csv(ddoc["path"])
            else:
                self.stream = synthesize_demand(
                    self.net,
                    days=math.ceil((self.end_minute) / 1440.0),
                    base_rate=ddoc.get("base_rate", 1.0),
                    rush_profile=ddoc.get("rush_profile"),
                    hotspot_vertices=[tuple(h) for h in ddoc["hotspots"]]
                    if ddoc.get("hotspots") else None,
                    seed=ddoc.get("seed", demand_seed))

        types = _vehicle_types(config)
        self.fleet: list[Vehicle] = []
        lo, hi = config.initial_soc
        for name in sorted(config.fleet):
            spec = types[name]
            for _ in range(config.fleet[name]):
                soc = 1.0 if config.charging_free else float(rng_fleet.uniform(lo, hi))
                self.fleet.append(Vehicle(
                    id=len(self.fleet), spec=spec,
                    energy_kwh=soc * spec.battery_kwh,
                    location=int(rng_fleet.integers(0, self.net.n))))
        self.fleet_by_id = {v.id: v for v in self.fleet}

        if stations is not None:
            self.stations = stations
        else:
            cdoc = config.chargers
            if cdoc.get("layout_path"):
                self.stations = load_station_layout(
                    cdoc["layout_path"], cdoc.get("supply_limit_kw", 72.0))
            else:
                frac = cdoc.get("parking_fraction", 0.2)
                n_park = max(1, int(round(frac * self.net.n)))
                parking = sorted(rng_park.choice(self.net.n, size=n_park,
                                                 replace=False).tolist())
                self.stations = place_chargers(
                    self.net, parking, cdoc.get("count", 10),
                    seed=cdoc.get("seed", station_seed),
                    supply_limit_kw=cdoc.get("supply_limit_kw", 72.0))

        self.stations_by_id = {st.id: st for st in self.stations}
        self._types = _vehicle_types(config)
        self.predictor = predictor if predictor is not None else build_predictor(config, self.net)
        pol = ChargingPolicyConfig(
            kind=config.policy, soc_threshold=self.params.soc_threshold,
            quick_target=self.params.quick_target, full_target=self.params.full_target,
            overnight_start_min=self.params.overnight_start_min,
            overnight_end_min=self.params.overnight_end_min,
            t_min_s=self.params.t_min_s, reach_margin=self.params.reach_margin)
        self.controller = ChargingController(pol, self.predictor)

        self.window = DemandWindow(self.net.n)
        self.minute = 0
        self.pending: list[TripRequest] = []
        self.requests_seen: list[TripRequest] = []
        self.events: list[dict] = []
        self._event_fh = None
        self.ledger_rows: list[dict] = []
        self._ledger_written = 0
        self._ledger_fh = None
        self.runtime_rows: list[tuple] = []
        self.cum_reward_cents = 0
        self.totals = {"served": 0, "rejected": 0, "ontime": 0,
                       "delay_sum_s": 0.0, "energy_kwh": 0.0,
                       "fare_credit_cents": 0, "op_cents": 0,
                       "charge_cents": 0, "tow_cents": 0, "tows": 0}
        self.sample_writer = None
        if config.log_samples_path:
            if not config.charging_free:
                raise ValueError("sample logging requires charging-free mode")
            self.sample_writer = SampleWriter(config.log_samples_path, self.net.n)

    # -- event plumbing ------------------------------------------------------

    @property
    def measured(self) -> bool:
        return self.minute >= self.warmup_minutes

    def _emit(self, kind: str, **payload):
        if not self.measured:
            return
        rec = {"m": self.minute - self.warmup_minutes, "k": kind}
        rec.update(payload)
        self.events.append(rec)
        if self._event_fh is not None:
            self._event_fh.write(json.dumps(rec, sort_keys=True) + "\n")

    # -- one simulated minute -------------------------------------------------

    def step(self):
        m = self.minute
        row = {"served": 0, "rejected": 0, "ontime": 0, "delays": [],
               "fare_credit_cents": 0, "op_cents": 0, "charge_cents": 0,
               "tow_cents": 0, "energy_kwh": 0.0, "charge_kwh": 0.0}
        self._row = row

        # (1) new requests join the pending pool
        arrivals = self.stream.requests_at(m)
        minute_counts = np.zeros(self.net.n)
        for r in arrivals:
            minute_counts[r.origin] += 1
            self.pending.append(r)
            self.requests_seen.append(r)
            self._emit("request", rid=r.id, o=r.origin, d=r.destination,
                       pax=r.passengers)

        # (2) expiry of stale requests
        for r in list(self.pending):
            if m - r.request_minute > MAX_PENDING_MINUTES:
                r.transition(RequestState.REJECTED)
                self.pending.remove(r)
                row["rejected"] += 1
                if self.measured:
                    self.totals["rejected"] += 1
                self._emit("reject", rid=r.id)

        # (3) dispatch
        if self.pending:
            self._dispatch_step(m)

        # (4) charging control and stranded handling (measured phase only)
        if self.measured and not self.config.charging_free:
            self._charging_step(m)

        # (5) reposition the remaining idle vehicles
        idle = [v for v in self.fleet if v.state == VehicleState.IDLE]
        moves = reposition(idle, self.window, self.net, m, self.params.horizon_s)
        for vid in sorted(moves):
            v = self.fleet_by_id[vid]
            target = moves[vid]
            if target == v.location:
                continue
            leg, _ = self.net.shortest_path(v.location, target, m)
            v.path.clear()
            v.path.extend(leg[1:])
            v.seconds_at_vertex = 0.0
            v.state = VehicleState.REPOSITIONING
            self._emit("reposition", vid=vid, to=target)

        # (6) motion, energy, stops, stations
        self._move_step(m)
        if self.measured and not self.config.charging_free:
            self._station_phase(m)

        # (7) bookkeeping
        self.window.update(m, minute_counts)
        if self.measured:
            self._ledger_row(row)
        self._check_invariants()
        self.minute += 1

    # -- step phases ----------------------------------------------------------

    def _dispatch_step(self, m: int):
        p = self.params
        rv = dp.build_rv(self.pending, self.fleet, self.net, m,
                         max_delay_s=p.max_delay_s, prune=p.rv_candidates,
                         rr_prune=p.rr_candidates)
        rtv = dp.build_rtv(rv, self.pending, self.fleet, self.net, m,
                           timeout_s=p.rtv_timeout_s, max_delay_s=p.max_delay_s,
                           max_trip_size=p.max_trip_size)
        chosen, _, _ = dp.assign_trips(rtv, self.pending, c_ko_s=p.c_ko_s,
                                       exact_limit=p.assign_exact_limit,
                                       budget_s=p.assign_budget_s)
        req_by_id = {r.id: r for r in self.pending}
        for vid in sorted(chosen):
            cand = chosen[vid]
            v = self.fleet_by_id[vid]
            self._log_idle_sample(v, m)
            dp.dispatch_vehicle(v, cand, req_by_id, self.net, m)
            for rid in cand.request_ids:
                r = req_by_id[rid]
                r.fare_cents = fare_cents(
                    r.direct_travel_s / 60.0, r.direct_distance_m / 1000.0,
                    p.fare_base, p.fare_per_min, p.fare_per_km, p.fare_floor)
                self.pending.remove(r)
                self._emit("assign", rid=rid, vid=vid,
                           wait_s=round(r.direct_wait_s, 3),
                           direct_s=round(r.direct_travel_s, 3),
                           fare_cents=r.fare_cents)

    def _log_idle_sample(self, v: Vehicle, m: int):
        """Idle-to-assigned transition closes one training sample."""
        if v.idle_since_minute is not None and v.idle_snapshot is not None:
            label = (m - v.idle_since_minute) * 60.0
            if self.sample_writer is not None:
                self.sample_writer.write(v.idle_snapshot, label)
            self._emit("idle_sample", vid=v.id, label_s=label)
        v.idle_since_minute = None
        v.idle_snapshot = None

    def _charging_step(self, m: int):
        ctx = PredictorContext(
            clock=self.clock,
            fleet_capacity=fleet_capacity_array(self.fleet, self.net.n),
            demand_mean=self.window.mean.copy())
        t0 = time.perf_counter()
        assignments = self.controller.step(self.fleet, self.stations, self.net, m, ctx)
        self.runtime_rows.append((m - self.warmup_minutes, time.perf_counter() - t0))
        for a in assignments:
            v = self.fleet_by_id[a.vehicle_id]
            v.idle_since_minute = None
            v.idle_snapshot = None
            payload = {"vid": a.vehicle_id, "sid": a.station_id,
                       "policy": self.config.policy}
            if a.pect_s is not None:
                payload["pect_s"] = round(a.pect_s, 3)
            if a.target_soc is not None:
                payload["target_soc"] = a.target_soc
            payload.update(a.audit)  # decision-time values, never re-rounded
            self._emit("charge_assign", **payload)
        for tow in stranded_step(self.fleet, self.stations, self.net, m,
                                 self.params.stranded_hold_min):
            cost = cents((self.params.tow_base + self.params.tow_per_km * tow["km"]) * 100.0)
            self._row["tow_cents"] += cost
            self.totals["tow_cents"] += cost
            self.totals["tows"] += 1
            self._emit("tow", vid=tow["vehicle"], sid=tow["station"],
                       km=tow["km"], cents=cost)
            for r in tow["onboard"]:
                self._settle(r, m, towed=True)
            for r in tow["assigned"]:
                r.transition(RequestState.REJECTED)
                self._row["rejected"] += 1
                self.totals["rejected"] += 1
                self._emit("assign_failed", rid=r.id, vid=tow["vehicle"])

    def _settle(self, r: TripRequest, m: int, towed: bool = False):
        r.transition(RequestState.COMPLETED)
        r.completion_minute = m
        # minute-grained motion can nominally beat the continuous-time direct
        # estimate by under a step; a delay cannot be negative
        delay_s = max((m - r.request_minute) * 60.0 - r.direct_total_s(), 0.0)
        r.delay_seconds = delay_s
        ontime = delay_s <= self.params.max_delay_s
        credit = cents(r.fare_cents * 0.25) if ontime else 0
        row = self._row
        row["served"] += 1
        row["delays"].append(delay_s)
        if self.measured:
            self.totals["served"] += 1
            self.totals["delay_sum_s"] += delay_s
        if ontime:
            row["ontime"] += 1
            row["fare_credit_cents"] += credit
            if self.measured:
                self.totals["ontime"] += 1
                self.totals["fare_credit_cents"] += credit
        self._emit("dropoff", rid=r.id, vid=r.assigned_vehicle,
                   delay_s=round(delay_s, 3), fare_cents=r.fare_cents,
                   credit_cents=credit, ontime=ontime, towed=towed)

    def _become_idle(self, v: Vehicle, m: int, after_dropoff: bool):
        v.state = VehicleState.IDLE
        v.seconds_at_vertex = 0.0
        if after_dropoff:
            v.idle_since_minute = m
            if self.sample_writer is not None and self.measured:
                weekday, hour, mom = self.clock.wallclock(m)
                v.idle_snapshot = build_features(
                    v.location, fleet_capacity_array(self.fleet, self.net.n),
                    self.window.mean.astype(np.float32), weekday, hour, mom)
        self._emit("idle", vid=v.id)

    def _process_position(self, v: Vehicle, m: int):
        """Handle whatever is due at the vehicle's current vertex."""
        if (v.state == VehicleState.TO_CHARGER and not v.path
                and v.charge_plan is not None):
            station = self.stations_by_id[v.charge_plan.station_id]
            if station.vertex == v.location:
                from .stations import arrive
                arrive(station, v)
                self._emit("arrive_station", vid=v.id, sid=station.id)
                return
        while v.planned_stops and v.planned_stops[0].vertex == v.location:
            stop = v.planned_stops.popleft()
            r = stop.request
            if stop.kind == "pickup":
                r.transition(RequestState.ONBOARD)
                v.assigned.remove(r)
                v.onboard.append(r)
                self._emit("pickup", rid=r.id, vid=v.id)
            else:
                v.onboard.remove(r)
                self._settle(r, m)
        if not v.path and not v.planned_stops and v.state in (
                VehicleState.DISPATCHING, VehicleState.SERVING,
                VehicleState.REPOSITIONING):
            if v.onboard or v.assigned:
                raise SimInvariantError(self._dump(
                    f"vehicle {v.id} ran out of plan with open commitments"))
            self._become_idle(v, m, after_dropoff=v.state != VehicleState.REPOSITIONING)
        elif v.state == VehicleState.DISPATCHING and v.onboard:
            v.state = VehicleState.SERVING

    def _move_step(self, m: int, dt: float = 60.0):
        energy_on = self.measured and not self.config.charging_free
        row = self._row
        km_by_type = {}
        for v in self.fleet:
            if v.state in (VehicleState.QUEUED,):
                if energy_on:
                    used = apply_idle_draw(v, dt, strand_minute=None)
                    row["energy_kwh"] += used
                continue
            if v.state in (VehicleState.CHARGING, VehicleState.STRANDED):
                continue
            if v.state == VehicleState.IDLE:
                if energy_on:
                    used = apply_idle_draw(v, dt, strand_minute=m)
                    row["energy_kwh"] += used
                    if v.state == VehicleState.STRANDED:
                        v.idle_since_minute = None
                        v.idle_snapshot = None
                        self._emit("strand", vid=v.id, at=v.location)
                continue
            # moving states
            self._process_position(v, m)
            if v.state not in MOVING_STATES:
                continue
            v.seconds_at_vertex += dt
            while v.path:
                nxt = v.path[0]
                et = self.net.edge_seconds(v.location, nxt, m)
                if v.seconds_at_vertex + 1e-9 < et:
                    break
                v.seconds_at_vertex -= et
                length = self.net.edge_len[self.net.edge_index(v.location, nxt)]
                if energy_on:
                    need = traversal_energy_kwh(v.spec, length, et,
                                                v.onboard_passengers)
                    row["energy_kwh"] += v.drain(need)
                km = length / 1000.0
                v.km_driven += km
                km_by_type[v.spec.name] = km_by_type.get(v.spec.name, 0.0) + km
                v.location = int(nxt)
                v.path.popleft()
                self._process_position(v, m)
                if v.state not in MOVING_STATES:
                    break
                if energy_on and v.energy_kwh <= 0.0:
                    # finishes the edge on fumes, then strands at the vertex
                    self._strand(v, m)
                    break
        if km_by_type and self.measured:
            op = sum(km_by_type[name] * self._types[name].op_cost_per_km * 100.0
                     for name in km_by_type)
            row["op_cents"] = cents(op)
            self.totals["op_cents"] += row["op_cents"]
            self._emit("move", km={k: km_by_type[k] for k in sorted(km_by_type)})

    def _strand(self, v: Vehicle, m: int):
        from .stations import cancel_inbound
        if v.charge_plan is not None:
            cancel_inbound(self.stations_by_id[v.charge_plan.station_id], v.id)
            v.charge_plan = None
        v.path.clear()
        v.state = VehicleState.STRANDED
        v.stranded_since = m
        v.idle_since_minute = None
        v.idle_snapshot = None
        self._emit("strand", vid=v.id, at=v.location)

    def _station_phase(self, m: int):
        row = self._row
        kwh_by_station = {}
        for st in self.stations:
            delivered, events = station_step(st, m, self.fleet_by_id)
            total = sum(delivered.values())
            if total > 0:
                kwh_by_station[st.id] = total
                row["charge_kwh"] += total
            for ev in events:
                self._emit(ev.pop("kind"), **ev)
        if kwh_by_station:
            row["charge_cents"] = cents(
                row["charge_kwh"] * self.params.charge_cost_per_kwh * 100.0)
            self.totals["charge_cents"] += row["charge_cents"]
            self._emit("charge", kwh=row["charge_kwh"],
                       by_station={str(k): kwh_by_station[k]
                                   for k in sorted(kwh_by_station)})

    def _ledger_row(self, row: dict):
        reward = (row["fare_credit_cents"] - row["op_cents"]
                  - row["charge_cents"] - row["tow_cents"])
        self.cum_reward_cents += reward
        occupied = sum(len(st.active) for st in self.stations)
        capacity = sum(st.charger_count for st in self.stations)
        non_charging = [v for v in self.fleet if v.state not in CHARGING_STATES]
        self.totals["energy_kwh"] += row["energy_kwh"]
        self.ledger_rows.append({
            "minute": self.minute - self.warmup_minutes,
            "reward_cents": reward,
            "cum_reward_cents": self.cum_reward_cents,
            "served": row["served"],
            "rejected": row["rejected"],
            "ontime": row["ontime"],
            "mean_delay_s": (round(sum(row["delays"]) / len(row["delays"]), 3)
                             if row["delays"] else ""),
            "mean_soc": round(float(np.mean([v.soc for v in self.fleet])), 6),
            "occupancy_rate": round(occupied / capacity, 6) if capacity else 0.0,
            "grid_mw": round(row["charge_kwh"] * 60.0 / 1000.0, 6),
            "energy_kwh": round(row["energy_kwh"], 6),
            "customers_per_vehicle": round(
                sum(len(v.onboard) for v in non_charging) / len(non_charging), 6)
            if non_charging else 0.0,
        })
        if self._ledger_fh is not None and len(self.ledger_rows) - self._ledger_written >= 60:
            self._flush_ledger()

    def _check_invariants(self):
        for v in self.fleet:
            if v.onboard_passengers > v.spec.seats:
                raise SimInvariantError(self._dump(f"vehicle {v.id} over capacity"))
            if v.energy_kwh < -1e-9 or v.energy_kwh > v.spec.battery_kwh + 1e-9:
                raise SimInvariantError(self._dump(f"vehicle {v.id} energy out of range"))

    def _dump(self, message: str) -> str:
        state = {"minute": self.minute,
                 "vehicles": [{"id": v.id, "state": v.state.value,
                               "loc": v.location, "soc": round(v.soc, 4)}
                              for v in self.fleet[:50]]}
        return f"{message}\n{json.dumps(state, indent=2)[:5000]}"

    # -- run loop --------------------------------------------------------------

    def run(self, out_dir=None):
        """Warmup then measured phase; returns a summary dict."""
        import os

        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            self._event_fh = open(os.path.join(out_dir, "events.jsonl"), "w")
            self._ledger_fh = open(os.path.join(out_dir, "metrics.csv"), "w")
            self._ledger_fh.write(",".join(LEDGER_COLUMNS) + "\n")
        try:
            while self.minute < self.end_minute:
                self.step()
        finally:
            if self.sample_writer is not None:
                self.sample_writer.close()
            if out_dir is not None:
                self._flush_ledger()
                self._ledger_fh.close()
                self._event_fh.close()
                with open(os.path.join(out_dir, "runtime.csv"), "w") as fh:
                    fh.write("minute,control_wall_s\n")
                    for minute, wall in self.runtime_rows:
                        fh.write(f"{minute},{wall:.6f}\n")
        return self.summary()

    def _flush_ledger(self):
        for row in self.ledger_rows[self._ledger_written:]:
            self._ledger_fh.write(",".join(str(row[c]) for c in LEDGER_COLUMNS) + "\n")
        self._ledger_written = len(self.ledger_rows)
        self._ledger_fh.flush()

    def summary(self) -> dict:
        t = self.totals
        in_flight = sum(1 for r in self.requests_seen
                        if r.state in (RequestState.PENDING, RequestState.ASSIGNED,
                                       RequestState.ONBOARD))
        peak_mw = max((row["grid_mw"] for row in self.ledger_rows), default=0.0)
        return {
            "policy": self.config.policy,
            "seed": self.config.seed,
            "reward_cents": self.cum_reward_cents,
            "served": t["served"],
            "rejected": t["rejected"],
            "ontime": t["ontime"],
            "mean_delay_min": float(t["delay_sum_s"] / 60.0 / t["served"]) if t["served"] else 0.0,
            "ontime_rate": (t["ontime"] / (t["served"] + t["rejected"])
                            if (t["served"] + t["rejected"]) else 0.0),
            "energy_kwh": float(t["energy_kwh"]),
            "energy_per_ontime_kwh": float(t["energy_kwh"] / t["ontime"]) if t["ontime"] else 0.0,
            "fare_credit_cents": t["fare_credit_cents"],
            "op_cents": t["op_cents"],
            "charge_cents": t["charge_cents"],
            "tow_cents": t["tow_cents"],
            "tows": t["tows"],
            "requests_in_flight_at_end": in_flight,
            "peak_grid_mw": peak_mw,
        }


LEDGER_COLUMNS = ["minute", "reward_cents", "cum_reward_cents", "served", "rejected",
                  "ontime", "mean_delay_s", "mean_soc", "occupancy_rate", "grid_mw",
                  "energy_kwh", "customers_per_vehicle"]

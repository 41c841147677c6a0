"""Request handling: pairwise feasibility, trip enumeration, assignment.

Delays are measured against the solo-service baseline: for a request
assigned to a vehicle, delay = completion - request time - (the
vehicle's travel time to the pickup at assignment + the direct
origin-to-destination travel time).  A plan is feasible only when every
customer it touches stays within the maximum delay (new customers
against the candidate vehicle, already-committed customers against the
baseline frozen at their own assignment).
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

from .ev import CHARGING_STATES, Vehicle, VehicleState
from .trips import RequestState, TripRequest

MAX_DELAY_S = 300.0
REJECTION_PENALTY_S = 3600.0
MAX_TRIP_SIZE = 4
RV_CANDIDATE_VEHICLES = 30

# the six pickup/dropoff orders two requests can share
_PAIR_SEQUENCES = (
    ((0, "pu"), (0, "do"), (1, "pu"), (1, "do")),
    ((1, "pu"), (1, "do"), (0, "pu"), (0, "do")),
    ((0, "pu"), (1, "pu"), (0, "do"), (1, "do")),
    ((0, "pu"), (1, "pu"), (1, "do"), (0, "do")),
    ((1, "pu"), (0, "pu"), (0, "do"), (1, "do")),
    ((1, "pu"), (0, "pu"), (1, "do"), (0, "do")),
)


def pair_feasibility(r1: TripRequest, r2: TripRequest, tt, now_s: float,
                     max_delay_s: float = MAX_DELAY_S):
    """Minimum total delay over the six shared sequences, or None.

    A virtual empty vehicle materializes at the first pickup; each
    customer's delay is measured against immediate direct service.
    """
    reqs = (r1, r2)
    best = None
    for seq in _PAIR_SEQUENCES:
        elapsed = 0.0
        pos = reqs[seq[0][0]].origin
        delays = {}
        ok = True
        for who, what in seq:
            r = reqs[who]
            target = r.origin if what == "pu" else r.destination
            elapsed += tt(pos, target)
            pos = target
            if what == "do":
                direct = tt(r.origin, r.destination)
                delay = (now_s + elapsed) - r.request_minute * 60.0 - direct
                if delay > max_delay_s:
                    ok = False
                    break
                delays[who] = delay
        if ok:
            total = delays[0] + delays[1]
            if best is None or total < best:
                best = total
    return best


@dataclass
class _PlanStop:
    vertex: int
    request: TripRequest
    kind: str            # "pickup" | "dropoff"
    deadline_s: float    # only checked for dropoffs
    passengers: int
    is_new: bool
    direct_s: float = 0.0  # solo baseline used for the new-request cost term


def _stops_for(vehicle: Vehicle, new_requests, tt, now_s: float,
               max_delay_s: float):
    """Stop set: onboard dropoffs, committed pickups/dropoffs, new trip."""
    stops = []
    for r in vehicle.onboard:
        stops.append(_PlanStop(r.destination, r, "dropoff",
                               r.request_minute * 60.0 + r.direct_total_s() + max_delay_s,
                               r.passengers, False))
    for r in vehicle.assigned:
        deadline = r.request_minute * 60.0 + r.direct_total_s() + max_delay_s
        stops.append(_PlanStop(r.origin, r, "pickup", deadline, r.passengers, False))
        stops.append(_PlanStop(r.destination, r, "dropoff", deadline, r.passengers, False))
    for r in new_requests:
        direct = tt(vehicle.location, r.origin) + tt(r.origin, r.destination)
        deadline = r.request_minute * 60.0 + direct + max_delay_s
        stops.append(_PlanStop(r.origin, r, "pickup", deadline, r.passengers, True))
        stops.append(_PlanStop(r.destination, r, "dropoff", deadline, r.passengers, True,
                               direct_s=direct))
    return stops


def vehicle_feasibility(vehicle: Vehicle, new_requests, tt, now_s: float,
                        max_delay_s: float = MAX_DELAY_S):
    """Best stop order serving everything the vehicle owes plus the trip.

    Exhaustive depth-first search over stop interleavings (pickup before
    dropoff, seat capacity at every point, every dropoff inside its
    deadline).  Returns (ordered stop list, total new-request delay,
    per-new-request delay dict) or None.
    """
    stops = _stops_for(vehicle, new_requests, tt, now_s, max_delay_s)
    n = len(stops)
    vertex = [s.vertex for s in stops]
    is_pickup = [s.kind == "pickup" for s in stops]
    deadline = [s.deadline_s - now_s for s in stops]  # relative to elapsed
    pax_of = [s.passengers for s in stops]
    new_cost_base = [(s.request.request_minute * 60.0 - now_s) + s.direct_s
                     if s.is_new and s.kind == "dropoff" else None
                     for s in stops]
    # dropoff allowed once its pickup happened (onboard dropoffs have no pickup stop)
    pickup_of = [-1] * n
    for i, s in enumerate(stops):
        if s.kind == "dropoff":
            for j, o in enumerate(stops):
                if o.request is s.request and o.kind == "pickup":
                    pickup_of[i] = j
    seats = vehicle.spec.seats

    best: list | None = None
    best_cost = float("inf")
    used = [False] * n
    order: list[int] = []

    def dfs(pos, elapsed, pax, cost):
        nonlocal best, best_cost
        if cost >= best_cost:
            return
        if len(order) == n:
            best = list(order)
            best_cost = cost
            return
        for i in range(n):
            if used[i]:
                continue
            if is_pickup[i]:
                if pax + pax_of[i] > seats:
                    continue
            else:
                j = pickup_of[i]
                if j >= 0 and not used[j]:
                    continue
            t = elapsed + tt(pos, vertex[i])
            if t > deadline[i]:
                continue
            used[i] = True
            order.append(i)
            if is_pickup[i]:
                dfs(vertex[i], t, pax + pax_of[i], cost)
            else:
                add = 0.0 if new_cost_base[i] is None \
                    else max(t - new_cost_base[i], 0.0)
                dfs(vertex[i], t, pax - pax_of[i], cost + add)
            order.pop()
            used[i] = False

    dfs(vehicle.location, 0.0, vehicle.onboard_passengers, 0.0)
    if best is None:
        return None
    # replay the winning order for the per-request delay report
    ordered = [stops[i] for i in best]
    delays = {}
    pos, elapsed = vehicle.location, 0.0
    for i in best:
        elapsed += tt(pos, vertex[i])
        pos = vertex[i]
        if new_cost_base[i] is not None:
            delays[stops[i].request.id] = elapsed - new_cost_base[i]
    return ordered, best_cost, delays


DISPATCHABLE_STATES = (VehicleState.IDLE, VehicleState.REPOSITIONING,
                       VehicleState.DISPATCHING, VehicleState.SERVING)


class _RowTT:
    """Per-minute travel-time lookup over cached single-source rows."""

    __slots__ = ("net", "minute", "rows")

    def __init__(self, net, minute: int):
        self.net = net
        self.minute = minute
        self.rows = {}

    def __call__(self, u, v):
        row = self.rows.get(u)
        if row is None:
            row = self.net.dist_row(u, self.minute)
            self.rows[u] = row
        return row[v]


@dataclass
class TripCandidate:
    vehicle_id: int
    request_ids: tuple          # sorted
    cost: float                 # sum of new-request delays (seconds)
    order: list                 # _PlanStop list
    per_request: dict           # request id -> delay seconds


@dataclass
class RVGraph:
    rr: dict = field(default_factory=dict)   # (rid1, rid2) sorted -> cost
    rv: dict = field(default_factory=dict)   # (rid, vid) -> TripCandidate


@dataclass
class RTVGraph:
    by_vehicle: dict = field(default_factory=dict)  # vid -> [TripCandidate]
    trips: list = field(default_factory=list)

    def candidate_count(self):
        return len(self.trips)


RR_CANDIDATE_REQUESTS = 16


def build_rv(pending, vehicles, net, minute: int,
             max_delay_s: float = MAX_DELAY_S,
             prune: int = RV_CANDIDATE_VEHICLES,
             rr_prune: int = RR_CANDIDATE_REQUESTS) -> RVGraph:
    now_s = minute * 60.0
    tt = _RowTT(net, minute)
    graph = RVGraph()
    usable = [v for v in vehicles if v.state in DISPATCHABLE_STATES]
    for r in pending:
        ranked = sorted(usable, key=lambda v: (tt(v.location, r.origin), v.id))
        for v in ranked[:prune]:
            feas = vehicle_feasibility(v, [r], tt, now_s, max_delay_s)
            if feas is not None:
                order, cost, per_req = feas
                graph.rv[(r.id, v.id)] = TripCandidate(v.id, (r.id,), cost, order, per_req)
    ordered = sorted(pending, key=lambda r: r.id)
    for i, r1 in enumerate(ordered):
        others = ordered[i + 1:]
        if len(others) > rr_prune:
            # pairing across distant origins almost never survives the delay
            # cap; spend the sequence enumeration on the nearest co-pending
            others = sorted(others,
                            key=lambda r2: (min(tt(r1.origin, r2.origin),
                                                tt(r2.origin, r1.origin)),
                                            r2.id))[:rr_prune]
            others = sorted(others, key=lambda r2: r2.id)
        for r2 in others:
            cost = pair_feasibility(r1, r2, tt, now_s, max_delay_s)
            if cost is not None:
                graph.rr[(r1.id, r2.id)] = cost
    return graph


def build_rtv(rv: RVGraph, pending, vehicles, net, minute: int,
              timeout_s: float = 5.0, max_delay_s: float = MAX_DELAY_S,
              max_trip_size: int = MAX_TRIP_SIZE) -> RTVGraph:
    """Grow feasible trips per vehicle from the RV graph under a timeout."""
    now_s = minute * 60.0
    tt = _RowTT(net, minute)
    by_req = {r.id: r for r in pending}
    rtv = RTVGraph()
    deadline = time.monotonic() + timeout_s
    vehicle_by_id = {v.id: v for v in vehicles}
    singles: dict[int, list] = {}
    for (rid, vid), cand in sorted(rv.rv.items()):
        rtv.by_vehicle.setdefault(vid, []).append(cand)
        rtv.trips.append(cand)
        singles.setdefault(vid, []).append(rid)
    for vid in sorted(singles):
        vehicle = vehicle_by_id[vid]
        known = {(rid,): rv.rv[(rid, vid)] for rid in singles[vid]}
        frontier = [(rid,) for rid in sorted(singles[vid])]
        for size in range(2, max_trip_size + 1):
            if time.monotonic() > deadline:
                break
            next_frontier = []
            seen = set()
            for base in frontier:
                for rid in singles[vid]:
                    if rid <= base[-1]:
                        continue
                    key = base + (rid,)
                    if key in seen:
                        continue
                    seen.add(key)
                    if time.monotonic() > deadline:
                        break
                    if any((min(a, rid), max(a, rid)) not in rv.rr for a in base):
                        continue
                    # downward closure: every (size-1)-subset must be feasible
                    if size > 2 and any(
                            tuple(s for s in key if s != drop) not in known
                            for drop in key):
                        continue
                    feas = vehicle_feasibility(
                        vehicle, [by_req[i] for i in key], tt, now_s, max_delay_s)
                    if feas is None:
                        continue
                    order, cost, per_req = feas
                    cand = TripCandidate(vid, key, cost, order, per_req)
                    known[key] = cand
                    rtv.by_vehicle[vid].append(cand)
                    rtv.trips.append(cand)
                    next_frontier.append(key)
            frontier = next_frontier
            if not frontier:
                break
    return rtv


def assign_trips(rtv: RTVGraph, pending,
                 c_ko_s: float = REJECTION_PENALTY_S,
                 exact_limit: int = 5000,
                 budget_s: float = 10.0):
    """Choose at most one trip per vehicle, each request in at most one.

    Minimizes total delay plus c_ko per unassigned request.  Exact
    branch-and-bound below ``exact_limit`` decision variables, greedy
    with local improvement above it, both under the time budget.
    Returns (vehicle id -> TripCandidate, unassigned request ids, objective).
    """
    pending_ids = sorted(r.id for r in pending)
    candidates = sorted(rtv.trips, key=lambda c: (c.cost, c.vehicle_id, c.request_ids))
    by_request: dict[int, list] = {rid: [] for rid in pending_ids}
    for cand in candidates:
        for rid in cand.request_ids:
            if rid in by_request:
                by_request[rid].append(cand)

    def objective(chosen):
        served = set()
        total = 0.0
        for cand in chosen.values():
            total += cand.cost
            served.update(cand.request_ids)
        return total + c_ko_s * (len(pending_ids) - len(served))

    greedy = _greedy(candidates, pending_ids, c_ko_s)
    if len(candidates) > exact_limit:
        best = _improve(greedy, candidates, pending_ids, c_ko_s, objective,
                        time.monotonic() + budget_s)
    else:
        best = _branch_and_bound(by_request, pending_ids, c_ko_s, greedy, objective,
                                 time.monotonic() + budget_s)
    served = set()
    for cand in best.values():
        served.update(cand.request_ids)
    unassigned = [rid for rid in pending_ids if rid not in served]
    return best, unassigned, objective(best)


def _greedy(candidates, pending_ids, c_ko_s):
    ranked = sorted(candidates,
                    key=lambda c: (-len(c.request_ids), c.cost, c.vehicle_id, c.request_ids))
    chosen: dict[int, TripCandidate] = {}
    used: set[int] = set()
    for cand in ranked:
        if cand.vehicle_id in chosen or any(r in used for r in cand.request_ids):
            continue
        chosen[cand.vehicle_id] = cand
        used.update(cand.request_ids)
    return chosen


def _improve(chosen, candidates, pending_ids, c_ko_s, objective, deadline):
    """Hill-climb: single replacements and pairwise swaps until stable."""
    best = dict(chosen)
    best_obj = objective(best)
    improved = True
    while improved and time.monotonic() < deadline:
        improved = False
        for cand in candidates:
            trial = dict(best)
            trial[cand.vehicle_id] = cand
            used = {}
            ok = True
            for c in trial.values():
                for rid in c.request_ids:
                    if used.setdefault(rid, c.vehicle_id) != c.vehicle_id:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                continue
            obj = objective(trial)
            if obj < best_obj - 1e-9:
                best, best_obj, improved = trial, obj, True
        for vid in list(best):
            trial = dict(best)
            del trial[vid]
            obj = objective(trial)
            if obj < best_obj - 1e-9:
                best, best_obj, improved = trial, obj, True
    return best


def _branch_and_bound(by_request, pending_ids, c_ko_s, incumbent, objective, deadline):
    """Exact search branching per request: reject it or commit a trip.

    Admissible bound: committed cost plus, for every undecided request,
    the cheapest delay it incurs in any candidate (or the rejection
    penalty), maintained incrementally.
    """
    best = dict(incumbent)
    best_obj = objective(best)
    order = sorted(pending_ids,
                   key=lambda rid: (len(by_request.get(rid, ())), rid))
    d_min = {}
    for rid in pending_ids:
        opts = by_request.get(rid, ())
        floor = min((c.per_request.get(rid, 0.0) for c in opts), default=c_ko_s)
        d_min[rid] = min(max(floor, 0.0), c_ko_s)

    chosen: dict[int, TripCandidate] = {}
    decided: set[int] = set()
    state = {"lb_rest": sum(d_min.values()), "nodes": 0, "aborted": False}
    n_order = len(order)

    def dfs(idx, cost):
        nonlocal best, best_obj
        if state["aborted"]:
            return
        state["nodes"] += 1
        if state["nodes"] % 2048 == 0 and time.monotonic() > deadline:
            state["aborted"] = True
            return
        while idx < n_order and order[idx] in decided:
            idx += 1
        if cost + state["lb_rest"] >= best_obj - 1e-9:
            return
        if idx == n_order:
            best = dict(chosen)
            best_obj = cost
            return
        rid = order[idx]
        for cand in by_request.get(rid, ()):
            if cand.vehicle_id in chosen:
                continue
            if any(r in decided for r in cand.request_ids):
                continue
            chosen[cand.vehicle_id] = cand
            decided.update(cand.request_ids)
            freed = sum(d_min[r] for r in cand.request_ids)
            state["lb_rest"] -= freed
            dfs(idx + 1, cost + cand.cost)
            state["lb_rest"] += freed
            del chosen[cand.vehicle_id]
            decided.difference_update(cand.request_ids)
        decided.add(rid)
        state["lb_rest"] -= d_min[rid]
        dfs(idx + 1, cost + c_ko_s)
        state["lb_rest"] += d_min[rid]
        decided.discard(rid)

    dfs(0, 0.0)
    return best


def dispatch_vehicle(vehicle: Vehicle, candidate: TripCandidate, requests_by_id,
                     net, minute: int) -> None:
    """Commit an assignment: freeze baselines, rebuild path and stop plan."""
    if vehicle.state in CHARGING_STATES or vehicle.state == VehicleState.STRANDED:
        raise ValueError(f"vehicle {vehicle.id} not dispatchable ({vehicle.state.value})")
    for rid in candidate.request_ids:
        r = requests_by_id[rid]
        r.transition(RequestState.ASSIGNED)
        r.assigned_vehicle = vehicle.id
        r.assign_minute = minute
        r.direct_wait_s = net.travel_time(vehicle.location, r.origin, minute)
        r.direct_travel_s = net.travel_time(r.origin, r.destination, minute)
        r.direct_distance_m = net.network_distance_m(r.origin, r.destination, minute)
        vehicle.assigned.append(r)
    set_vehicle_plan(vehicle, candidate.order, net, minute)


def set_vehicle_plan(vehicle: Vehicle, order, net, minute: int) -> None:
    """Rebuild the vehicle's vertex path through an ordered stop list."""
    vehicle.planned_stops.clear()
    vehicle.planned_stops.extend(order)
    vehicle.path.clear()
    vehicle.seconds_at_vertex = 0.0
    pos = vehicle.location
    for stop in order:
        if stop.vertex != pos:
            leg, _ = net.shortest_path(pos, stop.vertex, minute)
            vehicle.path.extend(leg[1:])
            pos = stop.vertex
    vehicle.state = VehicleState.SERVING if vehicle.onboard else VehicleState.DISPATCHING

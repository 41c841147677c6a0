"""Trip-vehicle assignment: pairwise feasibility, trip growth, optimization.

Two overlapping requests and one vehicle: the dispatcher should pool them
into a single two-request trip instead of rejecting one.

Run:  python3 demos/03_dispatch_pooling.py
"""

from evpool import TripRequest, Vehicle, assign_trips, build_rtv, build_rv, build_grid
from evpool.ev import DEFAULT_TYPES

net = build_grid(6, 6, spacing_m=400.0)
vehicle = Vehicle(id=0, spec=DEFAULT_TYPES["leaf"], energy_kwh=30.0, location=0)
requests = [
    TripRequest(id=0, request_minute=0, origin=1, destination=16, passengers=2),
    TripRequest(id=1, request_minute=0, origin=2, destination=17, passengers=1),
]

rv = build_rv(requests, [vehicle], net, minute=0)
print("request-vehicle edges:", sorted(rv.rv))
print("request-request edges:", {k: round(v, 1) for k, v in rv.rr.items()})

rtv = build_rtv(rv, requests, [vehicle], net, minute=0)
print("\ncandidate trips for the vehicle:")
for cand in rtv.trips:
    print(f"  requests {cand.request_ids}: total extra delay {cand.cost:.1f} s, "
          f"stops {[(s.kind, s.vertex) for s in cand.order]}")

chosen, unassigned, objective = assign_trips(rtv, requests)
best = chosen[0]
print(f"\nassignment: vehicle 0 serves {best.request_ids} "
      f"(objective {objective:.1f} s, {len(unassigned)} rejected)")
assert len(best.request_ids) == 2, "pooling expected here"

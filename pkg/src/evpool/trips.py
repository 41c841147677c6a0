"""Trip demand: CSV ingestion, cleaning, vertex matching, synthesis.

Raw trip rows carry coordinates and timestamps; ingestion maps endpoints
to the nearest network vertex, applies the validity filters (implied
average speed outside [1, 100] km/h, endpoints collapsing to one vertex,
region clipping) and emits an immutable, minute-indexed request stream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

import numpy as np

from .network import RoadNetwork, haversine

MAX_PENDING_MINUTES = 5  # requests older than this are rejected

DEFAULT_COLUMNS = {
    "pickup_datetime": "pickup_datetime",
    "dropoff_datetime": "dropoff_datetime",
    "pickup_lat": "pickup_lat",
    "pickup_lon": "pickup_lon",
    "dropoff_lat": "dropoff_lat",
    "dropoff_lon": "dropoff_lon",
    "passengers": "passengers",
}


class RequestState(Enum):
    PENDING = "pending"
    ASSIGNED = "assigned"
    ONBOARD = "onboard"
    COMPLETED = "completed"
    REJECTED = "rejected"


_ALLOWED = {
    RequestState.PENDING: {RequestState.ASSIGNED, RequestState.REJECTED},
    RequestState.ASSIGNED: {RequestState.ONBOARD, RequestState.REJECTED},
    RequestState.ONBOARD: {RequestState.COMPLETED},
    RequestState.COMPLETED: set(),
    RequestState.REJECTED: set(),
}


@dataclass
class TripRequest:
    """One customer demand and its lifecycle bookkeeping."""

    id: int
    request_minute: int
    origin: int
    destination: int
    passengers: int
    state: RequestState = RequestState.PENDING
    pending_since: int = 0
    completion_minute: int | None = None
    delay_seconds: float | None = None
    # frozen at assignment: the solo-service baseline the delay is measured against
    assigned_vehicle: int | None = None
    assign_minute: int | None = None
    direct_wait_s: float | None = None
    direct_travel_s: float | None = None
    direct_distance_m: float | None = None
    fare_cents: int | None = None

    def __post_init__(self):
        if self.origin == self.destination:
            raise ValueError("origin and destination must differ")
        self.pending_since = self.request_minute

    def transition(self, new: RequestState):
        if new not in _ALLOWED[self.state]:
            raise ValueError(f"illegal transition {self.state.value} -> {new.value}")
        self.state = new

    def direct_total_s(self) -> float:
        """Solo-service baseline (wait + travel), frozen at assignment."""
        return self.direct_wait_s + self.direct_travel_s


class RequestStream:
    """Replayable demand, indexed by request minute."""

    def __init__(self, requests: list[TripRequest]):
        self.requests = sorted(requests, key=lambda r: (r.request_minute, r.id))
        self._by_minute: dict[int, list[TripRequest]] = {}
        for r in self.requests:
            self._by_minute.setdefault(r.request_minute, []).append(r)

    def requests_at(self, minute: int) -> list[TripRequest]:
        return self._by_minute.get(minute, [])

    def __len__(self):
        return len(self.requests)

    def __iter__(self):
        return iter(self.requests)


@dataclass
class IngestReport:
    rows_in: int = 0
    emitted: int = 0
    dropped_speed: int = 0
    dropped_region: int = 0
    dropped_same_vertex: int = 0
    dropped_malformed: int = 0
    dropped_party_size: int = 0
    speed_filter_applied: bool = True
    start_date: str | None = None

    def as_dict(self):
        return dict(self.__dict__)


def _point_in_polygon(lat: float, lon: float, polygon) -> bool:
    """Ray casting over a closed (lat, lon) vertex list."""
    inside = False
    n = len(polygon)
    for i in range(n):
        la1, lo1 = polygon[i]
        la2, lo2 = polygon[(i + 1) % n]
        if (lo1 > lon) != (lo2 > lon):
            t = (lon - lo1) / (lo2 - lo1)
            if lat < la1 + t * (la2 - la1):
                inside = not inside
    return inside


def _parse_ts(text: str) -> datetime:
    text = text.strip()
    for fmt in ("%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"):
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    return datetime.fromisoformat(text)


def ingest_trips(csv_path, net: RoadNetwork, region=None, column_map=None,
                 max_party: int | None = None):
    """Read raw trips, clean them, and return (RequestStream, IngestReport).

    ``region`` is an optional (lat, lon) polygon; trips with either
    endpoint outside are dropped.  ``column_map`` adapts differently named
    CSV headers to the canonical schema.  ``max_party`` rejects parties
    larger than the biggest vehicle.  Minutes are counted from midnight of
    the earliest pickup date so streams replay deterministically.
    """
    cols = dict(DEFAULT_COLUMNS)
    if column_map:
        cols.update(column_map)
    report = IngestReport()
    parsed = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or cols["pickup_datetime"] not in reader.fieldnames:
            raise ValueError(f"missing column {cols['pickup_datetime']!r} in {csv_path}")
        has_dropoff_ts = cols["dropoff_datetime"] in reader.fieldnames
        report.speed_filter_applied = has_dropoff_ts
        for row in reader:
            report.rows_in += 1
            try:
                ts = _parse_ts(row[cols["pickup_datetime"]])
                plat = float(row[cols["pickup_lat"]])
                plon = float(row[cols["pickup_lon"]])
                dlat = float(row[cols["dropoff_lat"]])
                dlon = float(row[cols["dropoff_lon"]])
                party = int(row.get(cols["passengers"], 1) or 1)
                drop_ts = _parse_ts(row[cols["dropoff_datetime"]]) if has_dropoff_ts else None
            except (ValueError, KeyError, TypeError):
                report.dropped_malformed += 1
                continue
            if party < 1 or not all(np.isfinite([plat, plon, dlat, dlon])):
                report.dropped_malformed += 1
                continue
            if max_party is not None and party > max_party:
                report.dropped_party_size += 1
                continue
            if region is not None and not (
                _point_in_polygon(plat, plon, region)
                and _point_in_polygon(dlat, dlon, region)
            ):
                report.dropped_region += 1
                continue
            if drop_ts is not None:
                duration_h = (drop_ts - ts).total_seconds() / 3600.0
                if duration_h <= 0:
                    report.dropped_malformed += 1
                    continue
                speed_kmh = haversine(plat, plon, dlat, dlon) / 1000.0 / duration_h
                if speed_kmh < 1.0 or speed_kmh > 100.0:
                    report.dropped_speed += 1
                    continue
            parsed.append((ts, plat, plon, dlat, dlon, party))

    if not parsed:
        raise ValueError("no valid trips after filtering")
    t0 = min(p[0] for p in parsed).replace(hour=0, minute=0, second=0, microsecond=0)
    report.start_date = t0.isoformat()
    parsed.sort(key=lambda p: p[0])
    requests = []
    for ts, plat, plon, dlat, dlon, party in parsed:
        o = net.nearest_vertex(plat, plon)
        d = net.nearest_vertex(dlat, dlon)
        if o == d:
            report.dropped_same_vertex += 1
            continue
        minute = int((ts - t0).total_seconds() // 60)
        requests.append(TripRequest(id=len(requests), request_minute=minute,
                                    origin=o, destination=d, passengers=party))
    report.emitted = len(requests)
    if not requests:
        raise ValueError("no valid trips after filtering")
    return RequestStream(requests), report


def synthesize_demand(net: RoadNetwork, days: float, base_rate: float,
                      rush_profile=None, hotspot_vertices=None, seed: int = 0,
                      passenger_weights=(0.65, 0.2, 0.1, 0.05)) -> RequestStream:
    """Poisson demand: base_rate requests/min scaled by an hourly profile.

    Origins are drawn from ``hotspot_vertices`` (a list of (vertex, weight)
    pairs, default uniform over all vertices); destinations are uniform
    over the remaining vertices.  Deterministic for a fixed seed.
    """
    if base_rate <= 0:
        raise ValueError("base_rate must be positive")
    profile = np.asarray(rush_profile if rush_profile is not None else [1.0] * 24,
                         dtype=float)
    if len(profile) != 24:
        raise ValueError("rush_profile needs 24 entries")
    rng = np.random.default_rng(seed)
    if hotspot_vertices:
        origins = np.array([v for v, _ in hotspot_vertices], dtype=np.int64)
        weights = np.array([w for _, w in hotspot_vertices], dtype=float)
        weights = weights / weights.sum()
    else:
        origins = np.arange(net.n)
        weights = np.full(net.n, 1.0 / net.n)
    pweights = np.asarray(passenger_weights, dtype=float)
    pweights = pweights / pweights.sum()
    total_minutes = int(round(days * 1440))
    requests = []
    for minute in range(total_minutes):
        lam = base_rate * profile[(minute // 60) % 24]
        for _ in range(rng.poisson(lam)):
            o = int(origins[rng.choice(len(origins), p=weights)])
            d = int(rng.integers(0, net.n - 1))
            if d >= o:
                d += 1
            party = int(rng.choice(len(pweights), p=pweights)) + 1
            requests.append(TripRequest(id=len(requests), request_minute=minute,
                                        origin=o, destination=d, passengers=party))
    return RequestStream(requests)


def write_request_csv(stream: RequestStream, path) -> None:
    """Preprocessed replay format: request_minute, origin, destination, party."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["request_minute", "origin_vertex", "dest_vertex", "passengers"])
        for r in stream:
            w.writerow([r.request_minute, r.origin, r.destination, r.passengers])


def load_request_csv(path) -> RequestStream:
    requests = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            requests.append(TripRequest(
                id=len(requests),
                request_minute=int(row["request_minute"]),
                origin=int(row["origin_vertex"]),
                destination=int(row["dest_vertex"]),
                passengers=int(row["passengers"])))
    if not requests:
        raise ValueError(f"no requests in {path}")
    return RequestStream(requests)

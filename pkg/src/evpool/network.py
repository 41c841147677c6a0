"""Road network: directed graph, coordinate matching, travel times.

The network is loaded from GraphML (vertex attrs ``x`` = longitude and
``y`` = latitude in decimal degrees, edge attr ``length`` in meters),
cleaned (duplicate edges consolidated, self-loops dropped, everything
outside the largest strongly connected component removed so no vehicle
can get stuck at a dead-end), and re-indexed densely from 0.

Travel times come from a pluggable :class:`TravelTimeProvider` so the
simulator does not depend on any particular learned speed model.  Edge
times are deterministic for a fixed (edge, hour).  Shortest-path results
are memoized per hour and flushed when the hour rolls over; networks of
at most ``APSP_LIMIT`` vertices use a full all-pairs table instead of
per-source memoization.
"""

from __future__ import annotations

import heapq
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra as _cs_dijkstra, \
    shortest_path as _cs_shortest_path

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_SPEED_MPS = 25.0 / 3.6  # urban default, 25 km/h
APSP_LIMIT = 1000  # all-pairs tables only below this vertex count
_MIN_EDGE_SECONDS = 1e-9


def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters. Accepts scalars or numpy arrays."""
    p1 = np.radians(np.asarray(lat1, dtype=float))
    p2 = np.radians(np.asarray(lat2, dtype=float))
    dphi = p2 - p1
    dlam = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    a = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2.0) ** 2
    d = 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(a))
    if np.ndim(d) == 0:
        return float(d)
    return d


@dataclass(frozen=True)
class TravelTimeProvider:
    """Deterministic edge travel times.

    mode "constant": fixed speed for every edge at every hour.
    mode "profile":  base speed scaled by one multiplier per hour of day
                     (multiplier 0.5 means half speed, double time).
    mode "table":    explicit seconds per (from_vertex, to_vertex, hour);
                     missing entries fall back to the constant speed.
    """

    mode: str = "constant"
    speed_mps: float = DEFAULT_SPEED_MPS
    hourly_multipliers: tuple = tuple([1.0] * 24)
    table: dict | None = None

    def __post_init__(self):
        if self.mode not in ("constant", "profile", "table"):
            raise ValueError(f"unknown travel-time mode {self.mode!r}")
        if self.speed_mps <= 0:
            raise ValueError("speed must be positive")
        if self.mode == "profile" and (
            len(self.hourly_multipliers) != 24 or min(self.hourly_multipliers) <= 0
        ):
            raise ValueError("profile mode needs 24 positive multipliers")

    def time_key(self, minute: int) -> int:
        """Cache key: providers that ignore the clock share one key."""
        if self.mode == "constant":
            return 0
        return (int(minute) // 60) % 24

    def edge_seconds(self, u: int, v: int, length_m: float, minute: int) -> float:
        hour = (int(minute) // 60) % 24
        if self.mode == "table" and self.table is not None:
            t = self.table.get((u, v, hour))
            if t is not None:
                return max(float(t), _MIN_EDGE_SECONDS)
        speed = self.speed_mps
        if self.mode == "profile":
            speed *= self.hourly_multipliers[hour]
        return max(length_m / speed, _MIN_EDGE_SECONDS)

    def edge_seconds_array(self, edge_from, edge_to, edge_len, minute: int):
        """Vectorized edge times for a whole edge list."""
        hour = (int(minute) // 60) % 24
        speed = self.speed_mps
        if self.mode == "profile":
            speed *= self.hourly_multipliers[hour]
        times = edge_len / speed
        if self.mode == "table" and self.table:
            for i in range(len(edge_from)):
                t = self.table.get((int(edge_from[i]), int(edge_to[i]), hour))
                if t is not None:
                    times[i] = t
        return np.maximum(times, _MIN_EDGE_SECONDS)


class NetworkError(Exception):
    pass


class RoadNetwork:
    """Immutable directed road graph with hour-memoized shortest paths."""

    def __init__(self, lat, lon, edge_from, edge_to, edge_len,
                 provider: TravelTimeProvider | None = None):
        self.lat = np.asarray(lat, dtype=float)
        self.lon = np.asarray(lon, dtype=float)
        self.provider = provider or TravelTimeProvider()
        self.n = len(self.lat)
        if self.n == 0:
            raise NetworkError("empty network")
        edge_from = np.asarray(edge_from, dtype=np.int64)
        edge_to = np.asarray(edge_to, dtype=np.int64)
        edge_len = np.asarray(edge_len, dtype=float)
        order = np.lexsort((edge_to, edge_from))
        self.edge_from = edge_from[order]
        self.edge_to = edge_to[order]
        self.edge_len = edge_len[order]
        self._out_ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(self._out_ptr, self.edge_from + 1, 1)
        np.cumsum(self._out_ptr, out=self._out_ptr)
        self._eidx = {(int(f), int(t)): i
                      for i, (f, t) in enumerate(zip(self.edge_from, self.edge_to))}
        self._lat_rad = np.radians(self.lat)
        self._lon_rad = np.radians(self.lon)
        # per-hour state
        self._cache_key = None
        self._edge_seconds = None
        self._sssp: dict[int, tuple] = {}
        self._apsp_dist = None
        self._apsp_pred = None
        self._meters_rows: dict[int, np.ndarray] = {}

    # -- basic queries ---------------------------------------------------

    def nearest_vertex(self, lat: float, lon: float) -> int:
        """Vertex minimizing haversine distance; ties go to the lowest id."""
        p1 = math.radians(lat)
        dlam = self._lon_rad - math.radians(lon)
        a = (np.sin((self._lat_rad - p1) / 2.0) ** 2
             + math.cos(p1) * np.cos(self._lat_rad) * np.sin(dlam / 2.0) ** 2)
        return int(np.argmin(a))

    def edge_index(self, u: int, v: int) -> int:
        try:
            return self._eidx[(u, v)]
        except KeyError:
            raise NetworkError(f"no edge {u} -> {v}") from None

    def edge_seconds(self, u: int, v: int, minute: int) -> float:
        self._ensure_cache(minute)
        return float(self._edge_seconds[self.edge_index(u, v)])

    # -- shortest paths ----------------------------------------------------

    def _ensure_cache(self, minute: int):
        key = self.provider.time_key(minute)
        if key == self._cache_key:
            return
        self._cache_key = key
        self._sssp.clear()
        self._meters_rows.clear()
        self._apsp_dist = None
        self._apsp_pred = None
        self._edge_seconds = self.provider.edge_seconds_array(
            self.edge_from, self.edge_to, self.edge_len, minute)
        if self.n <= APSP_LIMIT:
            w = sp.csr_matrix((self._edge_seconds, (self.edge_from, self.edge_to)),
                              shape=(self.n, self.n))
            self._apsp_dist, self._apsp_pred = _cs_dijkstra(
                w, directed=True, return_predecessors=True)

    def _source(self, src: int, minute: int):
        """(seconds row, predecessor row) from src."""
        self._ensure_cache(minute)
        if self._apsp_dist is not None:
            return self._apsp_dist[src], self._apsp_pred[src]
        hit = self._sssp.get(src)
        if hit is not None:
            return hit
        n = self.n
        dist = np.full(n, np.inf)
        parent = np.full(n, -9999, dtype=np.int32)
        dist[src] = 0.0
        etime = self._edge_seconds
        eto = self.edge_to
        ptr = self._out_ptr
        done = np.zeros(n, dtype=bool)
        heap = [(0.0, src)]
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            for i in range(ptr[u], ptr[u + 1]):
                v = eto[i]
                nd = d + etime[i]
                if nd < dist[v]:
                    dist[v] = nd
                    parent[v] = u
                    heapq.heappush(heap, (nd, v))
        self._sssp[src] = (dist, parent)
        return dist, parent

    def dist_row(self, src: int, minute: int) -> np.ndarray:
        """Seconds from src to every vertex (read-only view)."""
        return self._source(src, minute)[0]

    def meters_row(self, src: int, minute: int) -> np.ndarray:
        """Meters along the time-minimal paths from src, lazily built."""
        self._ensure_cache(minute)
        row = self._meters_rows.get(src)
        if row is not None:
            return row
        dist, parent = self._source(src, minute)
        meters = np.full(self.n, np.inf)
        meters[src] = 0.0
        for v in np.argsort(dist, kind="stable"):
            p = parent[v]
            if p >= 0 and np.isfinite(dist[v]):
                meters[v] = meters[p] + self.edge_len[self._eidx[(int(p), int(v))]]
        self._meters_rows[src] = meters
        return meters

    def shortest_path(self, u: int, v: int, minute: int = 0):
        """Time-minimal vertex path and its total seconds."""
        if u == v:
            return [u], 0.0
        dist, parent = self._source(u, minute)
        if not np.isfinite(dist[v]):
            raise NetworkError(f"no path {u} -> {v}")
        path = [v]
        cur = v
        while cur != u:
            cur = int(parent[cur])
            path.append(cur)
        path.reverse()
        return path, float(dist[v])

    def travel_time(self, u: int, v: int, minute: int = 0) -> float:
        """Seconds along the time-minimal path (0 when u == v)."""
        if u == v:
            return 0.0
        dist, _ = self._source(u, minute)
        if not np.isfinite(dist[v]):
            raise NetworkError(f"no path {u} -> {v}")
        return float(dist[v])

    def network_distance_m(self, u: int, v: int, minute: int = 0) -> float:
        if u == v:
            return 0.0
        d = self.meters_row(u, minute)[v]
        if not np.isfinite(d):
            raise NetworkError(f"no path {u} -> {v}")
        return float(d)

    # -- structure-level products ------------------------------------------

    def _undirected_csr(self):
        ones = np.ones(len(self.edge_from))
        a = sp.coo_matrix((ones, (self.edge_from, self.edge_to)),
                          shape=(self.n, self.n))
        u = ((a + a.T) > 0).astype(np.float64)
        u.setdiag(0)
        u.eliminate_zeros()
        return u.tocsr()

    def closeness_centrality(self) -> np.ndarray:
        """(n-1) / sum of hop distances on the undirected projection."""
        if self.n == 1:
            return np.ones(1)
        und = self._undirected_csr()
        d = _cs_shortest_path(und, method="D", directed=False, unweighted=True)
        if not np.all(np.isfinite(d)):
            raise NetworkError("closeness centrality needs a connected graph")
        return (self.n - 1) / d.sum(axis=1)

    def normalized_adjacency(self) -> sp.csr_matrix:
        """Symmetric D^-1/2 (A + I) D^-1/2 over the undirected projection."""
        a = self._undirected_csr()
        a = a + sp.eye(self.n, format="csr")
        deg = np.asarray(a.sum(axis=1)).ravel()
        d = sp.diags(1.0 / np.sqrt(deg))
        return (d @ a @ d).tocsr()


# -- loading / generation --------------------------------------------------


def _clean(lat, lon, edge_from, edge_to, edge_len):
    """Consolidate duplicates, drop self-loops, keep the largest SCC."""
    n = len(lat)
    seen = {}
    for f, t, ln in zip(edge_from, edge_to, edge_len):
        if f == t:
            continue
        key = (f, t)
        if key not in seen or ln < seen[key]:
            seen[key] = ln
    if not seen:
        raise NetworkError("graph has no usable edges")
    ef = np.array([k[0] for k in seen], dtype=np.int64)
    et = np.array([k[1] for k in seen], dtype=np.int64)
    el = np.array(list(seen.values()), dtype=float)
    adj = sp.coo_matrix((np.ones(len(ef)), (ef, et)), shape=(n, n)).tocsr()
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    sizes = np.bincount(labels, minlength=n_comp)
    keep = labels == int(np.argmax(sizes))
    if keep.sum() < 2:
        raise NetworkError("network empty after cleaning")
    remap = np.full(n, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.sum())
    mask = keep[ef] & keep[et]
    return (
        np.asarray(lat, dtype=float)[keep],
        np.asarray(lon, dtype=float)[keep],
        remap[ef[mask]],
        remap[et[mask]],
        el[mask],
    )


def load_network(path, provider: TravelTimeProvider | None = None) -> RoadNetwork:
    """Load and clean a GraphML road network (x=lon, y=lat, length meters)."""
    import networkx as nx

    try:
        g = nx.read_graphml(path)
    except Exception as exc:
        raise NetworkError(f"cannot parse {path}: {exc}") from exc
    if g.number_of_nodes() == 0:
        raise NetworkError("empty graph file")
    nodes = list(g.nodes())
    index = {node: i for i, node in enumerate(nodes)}
    try:
        lat = [float(g.nodes[nd]["y"]) for nd in nodes]
        lon = [float(g.nodes[nd]["x"]) for nd in nodes]
    except KeyError as exc:
        raise NetworkError(f"vertex missing coordinate attribute: {exc}") from exc
    ef, et, el = [], [], []
    for a, b, data in g.edges(data=True):
        try:
            ln = float(data["length"])
        except KeyError as exc:
            raise NetworkError("edge missing length attribute") from exc
        ef.append(index[a])
        et.append(index[b])
        el.append(ln)
        if not g.is_directed():
            ef.append(index[b])
            et.append(index[a])
            el.append(ln)
    lat, lon, ef, et, el = _clean(lat, lon, ef, et, el)
    return RoadNetwork(lat, lon, ef, et, el, provider)


def write_graphml(net: RoadNetwork, path) -> None:
    """Emit the same GraphML dialect load_network consumes."""
    root = ET.Element("graphml", xmlns="http://graphml.graphdrawing.org/xmlns")
    for kid, name, dom in (("d0", "x", "node"), ("d1", "y", "node"),
                           ("d2", "length", "edge")):
        ET.SubElement(root, "key", id=kid,
                      **{"for": dom, "attr.name": name, "attr.type": "double"})
    graph = ET.SubElement(root, "graph", edgedefault="directed")
    for i in range(net.n):
        node = ET.SubElement(graph, "node", id=str(i))
        ET.SubElement(node, "data", key="d0").text = repr(float(net.lon[i]))
        ET.SubElement(node, "data", key="d1").text = repr(float(net.lat[i]))
    for f, t, ln in zip(net.edge_from, net.edge_to, net.edge_len):
        edge = ET.SubElement(graph, "edge", source=str(int(f)), target=str(int(t)))
        ET.SubElement(edge, "data", key="d2").text = repr(float(ln))
    ET.ElementTree(root).write(path, xml_declaration=True, encoding="utf-8")


def build_grid(rows: int, cols: int, spacing_m: float = 300.0,
               origin=(40.70, -74.02),
               provider: TravelTimeProvider | None = None) -> RoadNetwork:
    """Bidirectional rows x cols lattice spaced to match spacing_m."""
    lat0, lon0 = origin
    dlat = math.degrees(spacing_m / EARTH_RADIUS_M)
    dlon = math.degrees(spacing_m / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    lat, lon = [], []
    for r in range(rows):
        for c in range(cols):
            lat.append(lat0 + r * dlat)
            lon.append(lon0 + c * dlon)
    ef, et, el = [], [], []

    def add(a, b):
        ln = haversine(lat[a], lon[a], lat[b], lon[b])
        ef.extend((a, b))
        et.extend((b, a))
        el.extend((ln, ln))

    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                add(i, i + 1)
            if r + 1 < rows:
                add(i, i + cols)
    return RoadNetwork(lat, lon, ef, et, el, provider)


def generate_grid_graphml(path, rows: int, cols: int, spacing_m: float = 300.0) -> None:
    write_graphml(build_grid(rows, cols, spacing_m), path)

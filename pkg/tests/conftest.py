import numpy as np
import pytest

from evpool.network import RoadNetwork, TravelTimeProvider


def line_network(n: int, edge_m: float = 600.0, speed_mps: float = 10.0) -> RoadNetwork:
    """Bidirectional path graph 0-1-...-(n-1) with exact edge lengths."""
    ef, et, el = [], [], []
    for i in range(n - 1):
        ef += [i, i + 1]
        et += [i + 1, i]
        el += [edge_m, edge_m]
    lat = [40.0 + 0.001 * i for i in range(n)]
    lon = [-74.0] * n
    return RoadNetwork(lat, lon, ef, et, el,
                       TravelTimeProvider(speed_mps=speed_mps))


def exact_grid(rows: int, cols: int, edge_m: float = 300.0,
               speed_mps: float = 10.0) -> RoadNetwork:
    """Grid with exact (non-haversine) edge lengths, for exact-path oracles."""
    ef, et, el = [], [], []

    def add(a, b):
        ef.extend((a, b))
        et.extend((b, a))
        el.extend((edge_m, edge_m))

    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                add(i, i + 1)
            if r + 1 < rows:
                add(i, i + cols)
    lat = [40.0 + 0.002 * (i // cols) for i in range(rows * cols)]
    lon = [-74.0 + 0.002 * (i % cols) for i in range(rows * cols)]
    return RoadNetwork(lat, lon, ef, et, el,
                       TravelTimeProvider(speed_mps=speed_mps))


@pytest.fixture
def line5():
    return line_network(5)


@pytest.fixture
def grid5():
    return exact_grid(5, 5)


def floyd_warshall_times(net, minute=0):
    """Independent all-pairs oracle over the same edge times."""
    n = net.n
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for f, t, ln in zip(net.edge_from, net.edge_to, net.edge_len):
        d[f, t] = min(d[f, t], net.provider.edge_seconds(int(f), int(t), ln, minute))
    for k in range(n):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d

"""Idle-vehicle repositioning toward recently observed demand.

Keeps a 60-minute sliding window of per-vertex request counts.  Each
minute the remaining idle fleet is pulled toward the vertices with the
highest expected demand over the horizon, preferring the vehicle with
the best seats-per-travel-second ratio, never sending anyone farther
than the horizon.
"""

from __future__ import annotations

import numpy as np

WINDOW_MINUTES = 60
HORIZON_S = 1800.0


class DemandWindow:
    """Ring buffer of the last 60 minutes of per-vertex request counts."""

    def __init__(self, n_vertices: int):
        self.n = n_vertices
        self.counts = np.zeros((WINDOW_MINUTES, n_vertices), dtype=np.float64)
        self._sum = np.zeros(n_vertices, dtype=np.float64)
        self._slot = 0
        self._last_minute = None

    def update(self, minute: int, minute_counts) -> None:
        """Evict the oldest slot and append this minute's counts."""
        if self._last_minute is not None and minute <= self._last_minute:
            raise ValueError(f"window already updated for minute {minute}")
        self._last_minute = minute
        counts = np.asarray(minute_counts, dtype=np.float64)
        self._sum -= self.counts[self._slot]
        self.counts[self._slot] = counts
        self._sum += counts
        self._slot = (self._slot + 1) % WINDOW_MINUTES

    @property
    def mean(self) -> np.ndarray:
        """Per-vertex mean requests/minute over the window."""
        return self._sum / WINDOW_MINUTES


def reposition(idle_vehicles, window: DemandWindow, net, minute: int,
               horizon_s: float = HORIZON_S):
    """Greedy demand-coverage loop; returns {vehicle id: target vertex}.

    Target demand per vertex is the windowed rate times the horizon.
    Rounds pick the hottest remaining vertex, then the idle vehicle
    maximizing seats / travel-seconds among those within the horizon;
    that vehicle's seat count is subtracted from the vertex demand.
    """
    if not idle_vehicles:
        return {}
    demand = window.mean * (horizon_s / 60.0)
    if demand.max() <= 0:
        return {}
    vehicles = sorted(idle_vehicles, key=lambda v: v.id)
    # distance rows from each distinct idle location, stacked for fast slicing
    locs = sorted({v.location for v in vehicles})
    loc_index = {loc: i for i, loc in enumerate(locs)}
    dist = np.vstack([net.dist_row(loc, minute) for loc in locs])
    seats = np.array([v.spec.seats for v in vehicles], dtype=np.float64)
    rows = np.array([loc_index[v.location] for v in vehicles], dtype=np.int64)
    remaining = list(range(len(vehicles)))
    blocked = np.zeros(net.n, dtype=bool)
    moves: dict[int, int] = {}
    while remaining and np.clip(demand, 0.0, None)[~blocked].sum() > 0:
        masked = np.where(blocked, -np.inf, demand)
        target = int(np.argmax(masked))
        if masked[target] <= 0:
            break
        tt = dist[rows[remaining], target]
        ok = tt <= horizon_s
        if not ok.any():
            blocked[target] = True
            continue
        h = np.where(ok, seats[remaining] / np.maximum(tt, 1e-9), -np.inf)
        pick = int(np.argmax(h))  # argmax takes the first = lowest vehicle id on ties
        v = vehicles[remaining[pick]]
        moves[v.id] = target
        demand[target] -= v.spec.seats
        remaining.pop(pick)
    return moves

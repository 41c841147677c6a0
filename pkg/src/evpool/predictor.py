"""Idle-time prediction: feature tensors, GCN inference, table fallback.

The main input is a 3 x |N| matrix (vehicle one-hot location, vacant
seats of the non-charging fleet per vertex, 60-minute mean demand per
vertex) plus six cyclically encoded time values.  Inference runs a
forward pass over externally trained weights stored in a shared binary
format; a bucketed lookup table offers a model-free fallback so the
simulator runs without any trained artifact.

Shared file formats (all little-endian float32 payloads):

* weight file: one JSON header line, then per layer the weight matrix
  (row-major) followed by the bias vector, then a CRC32 trailer over the
  payload bytes.
* sample file: one fixed-width JSON header line carrying the vertex
  count and record count, then per record 3*|N| feature floats, 6 time
  floats and the idle-seconds label.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass

import numpy as np

TIME_FEATURE_COUNT = 6
_SAMPLE_HEADER_BYTES = 128
WEIGHT_FORMAT = "gcn-weights-v1"
SAMPLE_FORMAT = "idle-samples-v1"


@dataclass(frozen=True)
class SimClock:
    """Maps simulation minutes to wall-clock features; minute 0 is 00:00."""

    start_weekday: int = 0  # Monday

    def wallclock(self, minute: int):
        """(weekday 0-6, hour 0-23, minute-of-hour 0-59)."""
        day = minute // 1440
        return ((self.start_weekday + day) % 7, (minute // 60) % 24, minute % 60)

    def is_weekend(self, minute: int) -> bool:
        return self.wallclock(minute)[0] >= 5

    def minute_of_day(self, minute: int) -> int:
        return minute % 1440


def time_features(weekday: int, hour: int, minute_of_hour: int) -> np.ndarray:
    """Cyclic (sin, cos) pairs for hour, minute and weekday."""
    out = np.empty(TIME_FEATURE_COUNT, dtype=np.float32)
    for i, (value, period) in enumerate(((hour, 24.0), (minute_of_hour, 60.0),
                                         (weekday, 7.0))):
        angle = 2.0 * math.pi * value / period
        out[2 * i] = math.sin(angle)
        out[2 * i + 1] = math.cos(angle)
    return out


@dataclass
class IdleFeatures:
    matrix: np.ndarray  # (3, N) float32: one-hot, fleet capacity, demand mean
    time: np.ndarray    # (6,) float32


def fleet_capacity_array(fleet, n_vertices: int) -> np.ndarray:
    """Vacant seats of every non-charging vehicle, aggregated per vertex."""
    from .ev import CHARGING_STATES

    out = np.zeros(n_vertices, dtype=np.float32)
    for v in fleet:
        if v.state not in CHARGING_STATES:
            out[v.location] += v.vacant_seats
    return out


def build_features(location: int, fleet_capacity: np.ndarray, demand_mean: np.ndarray,
                   weekday: int, hour: int, minute_of_hour: int) -> IdleFeatures:
    n = len(fleet_capacity)
    matrix = np.zeros((3, n), dtype=np.float32)
    matrix[0, location] = 1.0
    matrix[1] = fleet_capacity
    matrix[2] = demand_mean
    return IdleFeatures(matrix, time_features(weekday, hour, minute_of_hour))


# -- weight file -------------------------------------------------------------


class WeightFormatError(Exception):
    pass


_LAYER_NAMES = ("gc1", "gc2", "dense1", "dense2", "out")


@dataclass
class PredictorWeights:
    n_vertices: int
    layers: dict            # name -> (W float32 2d, b float32 1d)
    fleet_scale: float = 1.0
    demand_scale: float = 1.0

    def __post_init__(self):
        n = self.n_vertices
        f = self.layers["gc1"][0].shape[1]
        expect = {
            "gc1": (3, f),
            "gc2": (f, f),
            "dense1": (n * f + TIME_FEATURE_COUNT, self.layers["dense1"][0].shape[1]),
            "dense2": (self.layers["dense1"][0].shape[1], self.layers["dense2"][0].shape[1]),
            "out": (self.layers["dense2"][0].shape[1], 1),
        }
        for name in _LAYER_NAMES:
            w, b = self.layers[name]
            if tuple(w.shape) != expect[name] or b.shape != (expect[name][1],):
                raise WeightFormatError(
                    f"layer {name}: shape {w.shape}/{b.shape}, expected {expect[name]}")

    def save(self, path) -> None:
        header = {
            "format": WEIGHT_FORMAT,
            "n_vertices": self.n_vertices,
            "layers": [{"name": nm,
                        "w": list(self.layers[nm][0].shape),
                        "b": [self.layers[nm][1].shape[0]]}
                       for nm in _LAYER_NAMES],
            "scales": {"fleet": self.fleet_scale, "demand": self.demand_scale},
        }
        payload = b"".join(
            np.ascontiguousarray(arr, dtype="<f4").tobytes()
            for nm in _LAYER_NAMES for arr in self.layers[nm])
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            fh.write(payload)
            fh.write(zlib.crc32(payload).to_bytes(4, "little"))

    @classmethod
    def load(cls, path) -> "PredictorWeights":
        with open(path, "rb") as fh:
            header_line = fh.readline()
            rest = fh.read()
        try:
            header = json.loads(header_line)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise WeightFormatError(f"bad header: {exc}") from exc
        if header.get("format") != WEIGHT_FORMAT:
            raise WeightFormatError(f"unexpected format {header.get('format')!r}")
        payload, crc_bytes = rest[:-4], rest[-4:]
        if zlib.crc32(payload) != int.from_bytes(crc_bytes, "little"):
            raise WeightFormatError("weight checksum mismatch")
        layers = {}
        offset = 0
        for spec in header["layers"]:
            wn = int(np.prod(spec["w"]))
            bn = spec["b"][0]
            w = np.frombuffer(payload, dtype="<f4", count=wn, offset=offset)
            offset += wn * 4
            b = np.frombuffer(payload, dtype="<f4", count=bn, offset=offset)
            offset += bn * 4
            layers[spec["name"]] = (w.reshape(spec["w"]).copy(), b.copy())
        if offset != len(payload):
            raise WeightFormatError("payload size does not match declared shapes")
        scales = header.get("scales", {})
        return cls(n_vertices=header["n_vertices"], layers=layers,
                   fleet_scale=float(scales.get("fleet", 1.0)),
                   demand_scale=float(scales.get("demand", 1.0)))


def gcn_forward(weights: PredictorWeights, features: IdleFeatures, a_hat) -> float:
    """Two graph convolutions, flatten + time concat, two dense, linear out.

    Computed in float64 over the float32-stored weights so independent
    implementations of the same arithmetic agree tightly.  Output is
    clipped at zero (an idle time cannot be negative).
    """
    if features.matrix.shape[1] != weights.n_vertices:
        raise WeightFormatError(
            f"features for {features.matrix.shape[1]} vertices, "
            f"weights for {weights.n_vertices}")
    x = features.matrix.astype(np.float64).copy()
    if weights.fleet_scale > 0:
        x[1] /= weights.fleet_scale
    if weights.demand_scale > 0:
        x[2] /= weights.demand_scale
    a = a_hat.toarray() if hasattr(a_hat, "toarray") else np.asarray(a_hat)
    a = a.astype(np.float64)
    w1, b1 = (m.astype(np.float64) for m in weights.layers["gc1"])
    w2, b2 = (m.astype(np.float64) for m in weights.layers["gc2"])
    h = np.maximum(a @ x.T @ w1 + b1, 0.0)
    h = np.maximum(a @ h @ w2 + b2, 0.0)
    z = np.concatenate([h.reshape(-1), features.time.astype(np.float64)])
    wd1, bd1 = (m.astype(np.float64) for m in weights.layers["dense1"])
    wd2, bd2 = (m.astype(np.float64) for m in weights.layers["dense2"])
    wo, bo = (m.astype(np.float64) for m in weights.layers["out"])
    z = np.maximum(z @ wd1 + bd1, 0.0)
    z = np.maximum(z @ wd2 + bd2, 0.0)
    return float(max((z @ wo + bo)[0], 0.0))


# -- sample dataset file -----------------------------------------------------


class SampleWriter:
    """Streams idle-time samples; the header is patched with the count on close."""

    def __init__(self, path, n_vertices: int):
        self.path = path
        self.n = n_vertices
        self.count = 0
        self._fh = open(path, "wb")
        self._write_header()

    def _write_header(self):
        head = json.dumps({"format": SAMPLE_FORMAT, "n_vertices": self.n,
                           "count": self.count}, sort_keys=True).encode()
        if len(head) >= _SAMPLE_HEADER_BYTES:
            raise ValueError("sample header too large")
        self._fh.write(head + b" " * (_SAMPLE_HEADER_BYTES - 1 - len(head)) + b"\n")

    def write(self, features: IdleFeatures, label_s: float) -> None:
        rec = np.concatenate([features.matrix.reshape(-1),
                              features.time,
                              np.array([label_s], dtype=np.float32)])
        self._fh.write(np.ascontiguousarray(rec, dtype="<f4").tobytes())
        self.count += 1

    def close(self):
        self._fh.seek(0)
        self._write_header()
        self._fh.close()


def read_samples(path):
    """Returns (n_vertices, features (k, 3, N), time (k, 6), labels (k,))."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != SAMPLE_FORMAT:
            raise ValueError(f"unexpected sample format {header.get('format')!r}")
        n = header["n_vertices"]
        count = header["count"]
        width = 3 * n + TIME_FEATURE_COUNT + 1
        data = np.frombuffer(fh.read(), dtype="<f4")
    if len(data) != count * width:
        raise ValueError("sample payload does not match header count")
    data = data.reshape(count, width)
    return (n, data[:, :3 * n].reshape(count, 3, n).copy(),
            data[:, 3 * n:3 * n + TIME_FEATURE_COUNT].copy(),
            data[:, -1].copy())


# -- predictors --------------------------------------------------------------


def _decode_hour_weekday(time_vec) -> tuple[int, int]:
    """Recover integer hour and weekday from the cyclic encoding."""
    hour = round(math.atan2(time_vec[0], time_vec[1]) * 24.0 / (2 * math.pi)) % 24
    weekday = round(math.atan2(time_vec[4], time_vec[5]) * 7.0 / (2 * math.pi)) % 7
    return int(hour), int(weekday)


class TablePredictor:
    """Mean idle seconds bucketed by (vertex, hour, weekday-class).

    Lookup falls back from the vertex bucket to the graph-wide
    (hour, class) bucket and finally to the global mean.
    """

    def __init__(self, buckets: dict, hour_buckets: dict, global_mean: float):
        if not buckets and not hour_buckets:
            raise ValueError("empty idle-time table")
        self.buckets = buckets            # (vertex, hour, "wd"/"we") -> seconds
        self.hour_buckets = hour_buckets  # (hour, "wd"/"we") -> seconds
        self.global_mean = float(global_mean)

    @classmethod
    def from_samples(cls, path) -> "TablePredictor":
        n, feats, times, labels = read_samples(path)
        if len(labels) == 0:
            raise ValueError("empty sample dataset")
        sums: dict = {}
        hour_sums: dict = {}
        for i in range(len(labels)):
            vertex = int(np.argmax(feats[i, 0]))
            hour, weekday = _decode_hour_weekday(times[i])
            wclass = "we" if weekday >= 5 else "wd"
            label = float(labels[i])
            for key, store in (((vertex, hour, wclass), sums),
                               ((hour, wclass), hour_sums)):
                s, c = store.get(key, (0.0, 0))
                store[key] = (s + label, c + 1)
        buckets = {k: s / c for k, (s, c) in sums.items()}
        hour_buckets = {k: s / c for k, (s, c) in hour_sums.items()}
        return cls(buckets, hour_buckets, float(np.mean(labels)))

    @classmethod
    def from_vertex_means(cls, means: dict, default: float) -> "TablePredictor":
        """Constant-in-time table, one value per vertex (test scaffolding)."""
        buckets = {(v, h, c): s for v, s in means.items()
                   for h in range(24) for c in ("wd", "we")}
        return cls(buckets, {}, default)

    def predict(self, location: int, minute: int, ctx) -> float:
        weekday, hour, _ = ctx.clock.wallclock(minute)
        wclass = "we" if weekday >= 5 else "wd"
        val = self.buckets.get((location, hour, wclass))
        if val is None:
            val = self.hour_buckets.get((hour, wclass))
        if val is None:
            val = self.global_mean
        return max(float(val), 0.0)

    def save(self, path) -> None:
        doc = {
            "format": "idle-table-v1",
            "global_mean": self.global_mean,
            "buckets": {f"{v}:{h}:{c}": x for (v, h, c), x in self.buckets.items()},
            "hour_buckets": {f"{h}:{c}": x for (h, c), x in self.hour_buckets.items()},
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "TablePredictor":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format") != "idle-table-v1":
            raise ValueError("not an idle-time table file")
        buckets = {}
        for key, val in doc["buckets"].items():
            v, h, c = key.split(":")
            buckets[(int(v), int(h), c)] = float(val)
        hour_buckets = {}
        for key, val in doc["hour_buckets"].items():
            h, c = key.split(":")
            hour_buckets[(int(h), c)] = float(val)
        return cls(buckets, hour_buckets, float(doc["global_mean"]))


class GcnPredictor:
    """Forward-pass predictor over a weight file and the network's adjacency."""

    def __init__(self, weights: PredictorWeights, a_hat):
        self.weights = weights
        self.a_hat = a_hat.toarray() if hasattr(a_hat, "toarray") else np.asarray(a_hat)

    def predict(self, location: int, minute: int, ctx) -> float:
        weekday, hour, mom = ctx.clock.wallclock(minute)
        feats = build_features(location, ctx.fleet_capacity, ctx.demand_mean,
                               weekday, hour, mom)
        return gcn_forward(self.weights, feats, self.a_hat)


class ConstantPredictor:
    """Fixed idle-seconds everywhere (plumbing for tests and dry runs)."""

    def __init__(self, seconds: float):
        self.seconds = float(seconds)

    def predict(self, location: int, minute: int, ctx) -> float:
        return self.seconds


@dataclass
class PredictorContext:
    """Frozen per-control-step snapshot handed to predictors."""

    clock: SimClock
    fleet_capacity: np.ndarray | None = None
    demand_mean: np.ndarray | None = None

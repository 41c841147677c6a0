"""Operator command line: preprocess, simulate, logsamples, buildtable, compare.

Every run writes a manifest (config snapshot, seed, output checksums,
wall timings) so results are reproducible from disk.  Exit codes:
0 success, 2 usage, 3 data error, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

from . import __version__
from .engine import LEDGER_COLUMNS, SimConfig, SimInvariantError, Simulation, build_network
from .network import NetworkError, load_network
from .predictor import (PredictorWeights, SampleWriter, TablePredictor,
                        build_features, gcn_forward, read_samples)
from .trips import ingest_trips, write_request_csv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4


class DataError(Exception):
    pass


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, config_doc: dict, seed, started, extra=None):
    files = {}
    for name in sorted(os.listdir(out_dir)):
        path = os.path.join(out_dir, name)
        if os.path.isfile(path) and name != "manifest.json":
            files[name] = _sha256(path)
    doc = {
        "version": __version__,
        "config": config_doc,
        "seed": seed,
        "outputs": files,
        "wall_seconds": round(time.time() - started, 3),
    }
    if extra:
        doc.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def _load_config(path) -> SimConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    try:
        return SimConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid config: {exc}") from exc


def cmd_preprocess(args) -> int:
    started = time.time()
    net = load_network(args.network)
    region = None
    if args.region:
        with open(args.region) as fh:
            region = [tuple(p) for p in json.load(fh)]
    try:
        stream, report = ingest_trips(args.trips, net, region=region)
    except ValueError as exc:
        print(f"preprocess failed: {exc}", file=sys.stderr)
        return EXIT_DATA
    os.makedirs(args.out, exist_ok=True)
    write_request_csv(stream, os.path.join(args.out, "trips.pre.csv"))
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
    _write_manifest(args.out, {"trips": args.trips, "network": args.network},
                    None, started)
    print(f"emitted {report.emitted} of {report.rows_in} rows "
          f"(speed {report.dropped_speed}, region {report.dropped_region}, "
          f"same-vertex {report.dropped_same_vertex}, "
          f"malformed {report.dropped_malformed})")
    if report.emitted == 0:
        print("warning: no trips survived the filters", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.time()
    config = _load_config(args.config)
    if args.policy:
        config.policy = args.policy
    if args.seed is not None:
        config.seed = args.seed
    config.validate()
    charger_counts = ([int(x) for x in args.chargers.split(",")]
                      if args.chargers else [None])
    for count in charger_counts:
        cfg = SimConfig.from_dict(config.as_dict())
        if count is not None:
            cfg.chargers = dict(cfg.chargers, count=count)
        out = args.out if len(charger_counts) == 1 else f"{args.out}-S{count}"
        sim = Simulation(cfg)
        summary = sim.run(out_dir=out)
        with open(os.path.join(out, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        _write_manifest(out, cfg.as_dict(), cfg.seed, started)
        print(f"{cfg.policy} seed={cfg.seed} chargers={cfg.chargers.get('count')}: "
              f"reward ${summary['reward_cents'] / 100.0:,.2f}, "
              f"served {summary['served']}, on-time rate "
              f"{summary['ontime_rate']:.3f}")
    return EXIT_OK


def cmd_logsamples(args) -> int:
    started = time.time()
    config = _load_config(args.config)
    if config.policy != "none" or not config.charging_free:
        print("logsamples needs a charging-free config "
              "(policy 'none', charging_free true): refusing, the model must "
              "not learn from its own charging decisions", file=sys.stderr)
        return EXIT_USAGE
    config.log_samples_path = args.out
    if args.seed is not None:
        config.seed = args.seed
    sim = Simulation(config)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    sim.run(out_dir=os.path.join(out_dir, "logsamples-run"))
    n, _, _, labels = read_samples(args.out)
    print(f"wrote {len(labels)} samples over {n} vertices to {args.out}")
    _write_manifest(os.path.join(out_dir, "logsamples-run"), config.as_dict(),
                    config.seed, started, extra={"samples": _sha256(args.out)})
    return EXIT_OK


def cmd_buildtable(args) -> int:
    try:
        table = TablePredictor.from_samples(args.samples)
    except (OSError, ValueError) as exc:
        print(f"buildtable failed: {exc}", file=sys.stderr)
        return EXIT_DATA
    table.save(args.out)
    print(f"wrote idle-time table ({len(table.buckets)} vertex buckets, "
          f"global mean {table.global_mean:.1f} s) to {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    rows = []
    scenario_keys = set()
    for d in args.run_dirs:
        summary_path = os.path.join(d, "summary.json")
        manifest_path = os.path.join(d, "manifest.json")
        try:
            with open(summary_path) as fh:
                s = json.load(fh)
        except OSError as exc:
            print(f"cannot read {summary_path}: {exc}", file=sys.stderr)
            return EXIT_DATA
        key = None
        if os.path.exists(manifest_path):
            with open(manifest_path) as fh:
                cfg = json.load(fh).get("config", {})
            key = json.dumps({k: v for k, v in cfg.items()
                              if k not in ("policy", "seed", "predictor")},
                             sort_keys=True)
        scenario_keys.add(key)
        rows.append((d, s))
    if len(scenario_keys) > 1:
        print("warning: run directories come from different scenarios; "
              "totals are not directly comparable", file=sys.stderr)
    header = (f"{'run':<28} {'reward $':>12} {'delay min':>10} "
              f"{'on-time %':>10} {'cust/veh':>9} {'kWh/on-time':>12}")
    print(header)
    print("-" * len(header))
    for d, s in rows:
        cpv = _mean_customers(os.path.join(d, "metrics.csv"))
        print(f"{os.path.basename(d.rstrip('/')):<28} "
              f"{s['reward_cents'] / 100.0:>12,.2f} "
              f"{s['mean_delay_min']:>10.3f} "
              f"{100.0 * s['ontime_rate']:>10.2f} "
              f"{cpv:>9.3f} "
              f"{s['energy_per_ontime_kwh']:>12.3f}")
    return EXIT_OK


def _mean_customers(metrics_path) -> float:
    import csv as _csv

    try:
        with open(metrics_path, newline="") as fh:
            vals = [float(row["customers_per_vehicle"])
                    for row in _csv.DictReader(fh)]
        return sum(vals) / len(vals) if vals else 0.0
    except OSError:
        return float("nan")


def cmd_gcn_eval(args) -> int:
    """Forward-pass a weight file over stored feature records (shared-contract check)."""
    import numpy as np

    weights = PredictorWeights.load(args.weights)
    n, feats, times, _ = read_samples(args.features)
    if n != weights.n_vertices:
        print(f"feature/weight vertex mismatch: {n} vs {weights.n_vertices}",
              file=sys.stderr)
        return EXIT_DATA
    config = _load_config(args.config) if args.config else SimConfig()
    net = build_network(config)
    if net.n != n:
        print(f"network has {net.n} vertices, features {n}", file=sys.stderr)
        return EXIT_DATA
    a_hat = net.normalized_adjacency()
    from .predictor import IdleFeatures

    with open(args.out, "w") as fh:
        fh.write("index,prediction_s\n")
        for i in range(feats.shape[0]):
            y = gcn_forward(weights, IdleFeatures(feats[i], times[i]), a_hat)
            fh.write(f"{i},{y!r}\n")
    print(f"wrote {feats.shape[0]} predictions to {args.out}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evpool",
        description="EV ridepooling fleet simulator with pluggable charging control")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean raw trips and match them to the network")
    p.add_argument("trips", help="raw trip CSV")
    p.add_argument("network", help="GraphML road network")
    p.add_argument("out", help="output directory")
    p.add_argument("--region", help="JSON file with a (lat, lon) polygon")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("simulate", help="run the simulator from a config file")
    p.add_argument("config", help="JSON run config")
    p.add_argument("--policy", choices=["itx", "qn", "qa", "fn", "fa", "oq", "of", "none"])
    p.add_argument("--seed", type=int)
    p.add_argument("--chargers", help="comma list sweeps the charger count")
    p.add_argument("--out", default="run-out", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("logsamples", help="log idle-time samples (charging-free run)")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="binary sample dataset path")
    p.set_defaults(func=cmd_logsamples)

    p = sub.add_parser("buildtable", help="build the lookup predictor from samples")
    p.add_argument("samples")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_buildtable)

    p = sub.add_parser("compare", help="tabulate run summaries side by side")
    p.add_argument("run_dirs", nargs="+")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gcn-eval", help="evaluate a weight file on stored features")
    p.add_argument("--weights", required=True)
    p.add_argument("--features", required=True, help="sample-format feature file")
    p.add_argument("--out", required=True, help="CSV of predictions")
    p.add_argument("--config", help="config whose network built the features")
    p.set_defaults(func=cmd_gcn_eval)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DATA
    except (NetworkError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SimInvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``latpat generate | analyze | baseline | evaluate``.

Reports are JSON with sorted keys so that reruns with the same seed are
byte-identical; wall-clock seconds only appear in evaluation tables.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import BnbStats, agglomerative, branch_and_bound, kmeans, lift, meanshift_cluster
from .density import DensityConfig, infer_split_points, infer_thresholds
from .evaluation import (METHODS, EvalSettings, clusters_from_segmentation, match_clusters,
                         run_method, session_metrics)
from .genetic import GaParams, solve_subproblem
from .segmentation import Segmentation, segment
from .synth import ConfigError, SessionConfig, generate_session, load_session_config, target_interval
from .traces import LatencyInterval, TraceFormatError, TraceSet, load_table, partition, write_csv

log = logging.getLogger("latpat")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
AUTO_QUANTILE = 0.75
EPSILON_MS = 1e-9


class DataError(Exception):
    """Input data cannot support the requested analysis."""


# --- helpers ----------------------------------------------------------------

def _json_safe(value):
    if isinstance(value, float):
        return None if math.isinf(value) else value
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    return value


def dump_json(data, path: str | None) -> None:
    text = json.dumps(_json_safe(data), indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def resolve_interval(spec: str, ts: TraceSet) -> LatencyInterval:
    """``lo:hi`` literally, or ``auto``.

    ``auto`` is the affected-latency range when the table is labelled, else
    ``[p75 latency, max + eps)``.
    """
    if spec != "auto":
        try:
            return LatencyInterval.parse(spec)
        except ValueError as exc:
            raise ConfigError(f"--interval: {exc}") from None
    if len(ts) == 0:
        raise DataError("empty trace table")
    if ts.labels is not None and any(ts.labels):
        return target_interval(ts, ts.labels)
    lo = float(np.quantile(ts.latency, AUTO_QUANTILE))
    return LatencyInterval(lo, float(ts.latency.max()) + EPSILON_MS)


def _load(path: str) -> TraceSet:
    try:
        return load_table(path)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except TraceFormatError as exc:
        raise DataError(f"{path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _ga_params(args) -> GaParams:
    try:
        return replace(GaParams(), seed=args.seed, generations=args.generations)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _session_config(args) -> SessionConfig:
    cfg = load_session_config(args.config) if args.config else SessionConfig()
    cfg = replace(cfg, seed=args.seed)
    if args.noised:
        cfg = replace(cfg, noise1=True, noise2=True)
    if args.requests is not None:
        cfg = replace(cfg, n_requests=args.requests)
    cfg.validate()
    return cfg


def describe_segment(latency_name: str, seg, rpc_names: Sequence[str]) -> str:
    lo, hi = seg.interval.lo, seg.interval.hi
    if not seg.pattern.conditions:
        return f"{latency_name} is between {lo:.1f} and {hi:.1f} ms: no pattern found"
    return (f"{latency_name} is between {lo:.1f} and {hi:.1f} ms when "
            f"{seg.pattern.describe(rpc_names)} "
            f"(precision {seg.score.precision:.3f}, recall {seg.score.recall:.3f}, "
            f"fscore {seg.score.fscore:.3f})")


def _mine(ts: TraceSet, interval: LatencyInterval, method: str, args,
          density: DensityConfig) -> tuple[Segmentation, dict]:
    thresholds = infer_thresholds(ts, density)
    try:
        splits = infer_split_points(ts, interval, density)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    stats = BnbStats()
    if method == "genetic":
        ga = _ga_params(args)

        def solver(idx, seed):
            return solve_subproblem(idx, replace(ga, seed=seed))
    else:
        def solver(idx, seed):
            return branch_and_bound(idx, args.bnb_depth, stats=stats)
    seg = segment(ts, splits, solver, thresholds, base_seed=args.seed)
    extra = {"thresholds": {ts.rpc_names[j]: cuts for j, cuts in thresholds.items()}}
    if method == "bnb":
        extra["bnb"] = asdict(stats)
    return seg, extra


def _resolved(args, interval: LatencyInterval, density: DensityConfig, method: str) -> dict:
    cfg = {"command": args.command, "method": method, "seed": args.seed,
           "interval_spec": args.interval, "interval": interval.as_list(),
           "density": asdict(density)}
    if getattr(args, "input", None):
        cfg["input"] = args.input
    if method == "genetic":
        cfg["ga"] = asdict(_ga_params(args))
    if method == "bnb":
        cfg["bnb_depth"] = args.bnb_depth
    if method in ("kmeans", "hier"):
        cfg["k"] = args.k
    return cfg


def _label_metrics(ts: TraceSet, clusters) -> dict | None:
    if ts.labels is None or not any(ts.labels):
        return None
    assignment = match_clusters(clusters, ts.labels) if clusters else {}
    m = session_metrics(clusters, assignment, ts.labels)
    return {"assignment": assignment, **asdict(m)}


# --- commands ---------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = _session_config(args)
    ts, gt = generate_session(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(ts, out / "traces.csv")
    truth = gt.to_dict(ts.rpc_names)
    truth["config"] = cfg.to_dict()
    truth["target_interval"] = target_interval(ts, gt.labels).as_list()
    dump_json(truth, str(out / "ground_truth.json"))
    log.info("wrote %d traces to %s", len(ts), out / "traces.csv")
    return EXIT_OK


def cmd_analyze(args) -> int:
    ts = _load(args.input)
    interval = resolve_interval(args.interval, ts)
    density = DensityConfig()
    seg, extra = _mine(ts, interval, args.method, args, density)
    for s in seg.segments:
        log.info("%s", describe_segment(ts.latency_name, s, ts.rpc_names))
    report = {"config": _resolved(args, interval, density, args.method),
              "segmentation": seg.to_dict(ts.rpc_names), **extra}
    clusters = clusters_from_segmentation(seg, ts).clusters
    metrics = _label_metrics(ts, clusters)
    if metrics is not None:
        report["metrics"] = metrics
    dump_json(report, args.out)
    return EXIT_OK


def cmd_baseline(args) -> int:
    if args.method == "bnb":
        return cmd_analyze(args)
    ts = _load(args.input)
    interval = resolve_interval(args.interval, ts)
    density = DensityConfig()
    inside, _ = partition(ts, interval)
    if not inside:
        raise DataError(f"no trace latency falls in [{interval.lo}, {interval.hi})")
    points = ts.exec_times[inside]
    if args.method == "meanshift":
        result = meanshift_cluster(points, config=density)
    else:
        if not 1 <= args.k <= len(points):
            raise ConfigError(f"--k must lie in [1, {len(points)}]")
        if args.method == "kmeans":
            result = kmeans(points, args.k, np.random.default_rng([args.seed, args.k]))
        else:
            result = agglomerative(points, args.k)
    lifted = lift(result, inside)
    log.info("%s: %d clusters of sizes %s", args.method, len(lifted.clusters),
             [len(c) for c in lifted.clusters])
    report = {"config": _resolved(args, interval, density, args.method),
              "clusters": lifted.clusters, "params": result.params}
    metrics = _label_metrics(ts, lifted.clusters)
    if metrics is not None:
        report["metrics"] = metrics
    dump_json(report, args.out)
    return EXIT_OK


def _evaluate_one(job):
    session, ts, labels, methods, settings = job
    return [(session, run_method(ts, labels, m, settings)) for m in methods]


def cmd_evaluate(args) -> int:
    methods = args.methods.split(",")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown method(s): {', '.join(bad)}")
    settings = EvalSettings(ga=_ga_params(args), bnb_depth=args.bnb_depth,
                            injective=args.injective, seed=args.seed)
    jobs = []
    if args.input:
        ts = _load(args.input)
        if ts.labels is None or not any(ts.labels):
            raise DataError(f"{args.input}: evaluate needs a label column with ground truth")
        jobs.append((Path(args.input).stem, ts, ts.labels, methods, settings))
    else:
        base = _session_config(args)
        for k in range(args.sessions):
            ts, gt = generate_session(replace(base, seed=args.seed + k))
            jobs.append((args.seed + k, ts, gt.labels, methods,
                         replace(settings, seed=args.seed + k)))
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_evaluate_one, jobs))
    else:
        results = [_evaluate_one(job) for job in jobs]
    rows = [(session, rep) for batch in results for session, rep in batch]

    fields = ["session", "method", "fscore", "precision", "recall", "seconds"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "evaluation.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fields, lineterminator="\n")
        writer.writeheader()
        for session, rep in rows:
            writer.writerow(rep.to_row(session))
    summary = {}
    for m in methods:
        f = [rep.metrics.fscore for _, rep in rows if rep.method == m]
        summary[m] = {"mean_fscore": float(np.mean(f)), "sessions": len(f)}
        log.info("%-9s mean fscore %.3f over %d session(s)", m, summary[m]["mean_fscore"], len(f))
    report = {
        "config": {"command": "evaluate", "methods": methods, "seed": args.seed,
                   "sessions": args.sessions if not args.input else 1,
                   "noised": args.noised, "injective": args.injective,
                   "ga": asdict(settings.ga), "bnb_depth": settings.bnb_depth,
                   "input": args.input},
        "summary": summary,
        "sessions": [{"session": s, "method": r.method, "assignment": r.assignment,
                      "pair_fscores": r.pair_fscores, **asdict(r.metrics)} for s, r in rows],
    }
    dump_json(report, str(out / "evaluation.json"))
    return EXIT_OK


# --- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latpat", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        if seed:
            p.add_argument("--seed", type=int, default=0)

    def mining(p):
        p.add_argument("--input", required=True, help="trace table (.csv or .json)")
        p.add_argument("--interval", default="auto", help="lo:hi in ms, or auto")
        p.add_argument("--out", default=None, help="report path (default stdout)")
        p.add_argument("--generations", type=int, default=GaParams().generations)
        p.add_argument("--bnb-depth", type=int, default=3)

    def session(p):
        p.add_argument("--config", help="session config (.json or .toml)")
        p.add_argument("--noised", action="store_true", help="enable both noise models")
        p.add_argument("--requests", type=int, default=None)

    g = sub.add_parser("generate", help="write a synthetic session")
    common(g)
    session(g)
    g.add_argument("-o", "--out", required=True, help="output directory")

    a = sub.add_parser("analyze", help="mine latency patterns")
    common(a)
    mining(a)
    a.add_argument("--method", choices=("genetic", "bnb"), default="genetic")

    b = sub.add_parser("baseline", help="run a comparison method")
    common(b)
    mining(b)
    b.add_argument("--method", choices=("bnb", "kmeans", "hier", "meanshift"), required=True)
    b.add_argument("--k", type=int, default=2, help="cluster count for kmeans/hier")

    e = sub.add_parser("evaluate", help="score methods against ground truth")
    common(e)
    session(e)
    e.add_argument("--input", help="labelled trace table instead of synthetic sessions")
    e.add_argument("--sessions", type=int, default=5)
    e.add_argument("--methods", default="genetic,kmeans,hier",
                   help=f"comma-separated subset of {','.join(METHODS)}")
    e.add_argument("--method", dest="methods", help="alias of --methods")
    e.add_argument("--generations", type=int, default=GaParams().generations)
    e.add_argument("--bnb-depth", type=int, default=3)
    e.add_argument("--injective", action="store_true", help="one-to-one cluster matching")
    e.add_argument("--jobs", type=int, default=1, help="worker processes")
    e.add_argument("-o", "--out", required=True, help="output directory")
    return parser


COMMANDS = {"generate": cmd_generate, "analyze": cmd_analyze,
            "baseline": cmd_baseline, "evaluate": cmd_evaluate}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"latpat: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TraceFormatError) as exc:
        print(f"latpat: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"latpat: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Match mined clusters to injected degradations and score a session.

Each degradation is paired with the cluster that maximises its F-score when
the degradation's requests are the positives. Session recall is
``|G| / |P|`` and precision ``|G| / (|C_1| + |C_2|)``, where ``G`` are the
requests sitting in the cluster matched to their own degradation and ``P``
all affected requests.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .baselines import ClusterResult, agglomerative, branch_and_bound, kmeans, lift, meanshift_cluster
from .density import DensityConfig, infer_split_points, infer_thresholds
from .genetic import GaParams, solve_subproblem
from .patterns import f_score, satisfies_pattern
from .segmentation import Segmentation, segment
from .synth import SessionConfig, generate_session, target_interval
from .traces import LatencyInterval, TraceSet, partition

METHODS = ("genetic", "bnb", "kmeans", "hier", "meanshift")


def clusters_from_segmentation(seg: Segmentation, ts: TraceSet) -> ClusterResult:
    """One cluster per segment: traces in its latency range matching its pattern."""
    clusters = []
    for s in seg.segments:
        if not s.pattern.conditions:
            clusters.append([])
            continue
        pos, _ = partition(ts, s.interval)
        clusters.append([i for i in pos if satisfies_pattern(ts[i], s.pattern)])
    return ClusterResult(clusters, "segmentation", {"splits": list(seg.chosen_points)})


def pair_fscore(cluster: Sequence[int], affected: set[int]) -> float:
    tp = len(affected.intersection(cluster))
    if tp == 0:
        return 0.0
    return f_score(tp / len(cluster), tp / len(affected))


def _degradation_sets(labels: Sequence[str | None]) -> dict[str, set[int]]:
    names = sorted({lbl for lbl in labels if lbl})
    return {name: {i for i, lbl in enumerate(labels) if lbl == name} for name in names}


def match_clusters(clusters: Sequence[Sequence[int]], labels: Sequence[str | None],
                   injective: bool = False) -> dict[str, int | None]:
    """Best cluster index per degradation.

    Without ``injective`` every degradation picks independently (the same
    cluster may win twice); ties go to the larger cluster, then the lower
    index. With ``injective`` the pairing maximises the summed F-score over
    one-to-one assignments, and a degradation no cluster overlaps stays
    unmatched (``None``).
    """
    if not clusters:
        raise ValueError("no cluster to match")
    truth = _degradation_sets(labels)
    scores = {name: [pair_fscore(c, aff) for c in clusters] for name, aff in truth.items()}
    if not injective:
        out = {}
        for name, row in scores.items():
            out[name] = min(range(len(clusters)),
                            key=lambda c: (-row[c], -len(clusters[c]), c))
        return out
    names = list(truth)
    best, best_key = None, None
    slots = list(range(len(clusters))) + [None] * len(names)
    for combo in itertools.permutations(slots, len(names)):
        used = [c for c in combo if c is not None]
        if len(set(used)) != len(used) or any(scores[n][c] == 0.0 for n, c in zip(names, combo)
                                              if c is not None):
            continue
        # equal totals fall back to per-degradation (F, cluster size), which fixes
        # the session metrics regardless of cluster order
        parts = tuple((scores[n][c], len(clusters[c])) if c is not None else (0.0, 0)
                      for n, c in zip(names, combo))
        key = (sum(f for f, _ in parts), parts)
        if best_key is None or key > best_key:
            best, best_key = dict(zip(names, combo)), key
    return best


@dataclass(frozen=True)
class SessionMetrics:
    recall: float
    precision: float
    fscore: float


def session_metrics(clusters: Sequence[Sequence[int]], assignment: dict[str, int | None],
                    labels: Sequence[str | None]) -> SessionMetrics:
    truth = _degradation_sets(labels)
    n_affected = sum(len(s) for s in truth.values())
    if n_affected == 0:
        raise ValueError("session has no affected request")
    g = 0
    total_size = 0
    for name, c in assignment.items():
        if c is None:
            continue
        g += len(truth.get(name, set()).intersection(clusters[c]))
        total_size += len(clusters[c])
    recall = g / n_affected
    precision = g / total_size if total_size else 0.0
    return SessionMetrics(recall, precision, f_score(precision, recall))


@dataclass
class MethodReport:
    method: str
    metrics: SessionMetrics
    assignment: dict[str, int | None]
    pair_fscores: dict[str, float]
    seconds: float
    clusters: list[list[int]] = field(repr=False, default_factory=list)
    details: dict = field(default_factory=dict)

    def to_row(self, session: int | str) -> dict:
        return {"session": session, "method": self.method, "fscore": self.metrics.fscore,
                "precision": self.metrics.precision, "recall": self.metrics.recall,
                "seconds": self.seconds}


@dataclass
class EvalSettings:
    ga: GaParams = GaParams()
    density: DensityConfig = DensityConfig()
    bnb_depth: int = 3
    k_range: tuple[int, ...] = (2, 3, 4, 5, 6)
    injective: bool = False
    seed: int = 0


def mine_segmentation(ts: TraceSet, interval: LatencyInterval, method: str,
                      settings: EvalSettings, thresholds=None, splits=None) -> Segmentation:
    if thresholds is None:
        thresholds = infer_thresholds(ts, settings.density)
    if splits is None:
        splits = infer_split_points(ts, interval, settings.density)
    if method == "genetic":
        def solver(idx, seed):
            return solve_subproblem(idx, replace(settings.ga, seed=seed))
    elif method == "bnb":
        def solver(idx, seed):
            return branch_and_bound(idx, settings.bnb_depth)
    else:
        raise ValueError(f"{method!r} does not produce a segmentation")
    return segment(ts, splits, solver, thresholds, base_seed=settings.seed)


def _report(method, clusters, labels, injective, seconds, details=None) -> MethodReport:
    assignment = match_clusters(clusters, labels, injective) if clusters else {
        name: None for name in _degradation_sets(labels)}
    truth = _degradation_sets(labels)
    pair = {name: (pair_fscore(clusters[c], truth[name]) if c is not None else 0.0)
            for name, c in assignment.items()}
    return MethodReport(method, session_metrics(clusters, assignment, labels), assignment,
                        pair, seconds, [list(c) for c in clusters], details or {})


def run_method(ts: TraceSet, labels: Sequence[str | None], method: str,
               settings: EvalSettings = EvalSettings()) -> MethodReport:
    """Run one method on a labelled session and score its clusters."""
    interval = target_interval(ts, labels)
    if method in ("genetic", "bnb"):
        # timing covers index builds and search, not the density preprocessing
        thresholds = infer_thresholds(ts, settings.density)
        splits = infer_split_points(ts, interval, settings.density)
        start = time.perf_counter()
        seg = mine_segmentation(ts, interval, method, settings, thresholds, splits)
        seconds = time.perf_counter() - start
        clusters = clusters_from_segmentation(seg, ts).clusters
        return _report(method, clusters, labels, settings.injective, seconds,
                       {"segmentation": seg.to_dict(ts.rpc_names)})

    inside, _ = partition(ts, interval)
    points = ts.exec_times[inside]
    if method == "meanshift":
        start = time.perf_counter()
        result = meanshift_cluster(points, config=settings.density)
        seconds = time.perf_counter() - start
        clusters = lift(result, inside).clusters
        return _report(method, clusters, labels, settings.injective, seconds, result.params)
    if method not in ("kmeans", "hier"):
        raise ValueError(f"unknown method {method!r}")
    best: MethodReport | None = None
    for k in settings.k_range:
        if k > len(points):
            break
        start = time.perf_counter()
        if method == "kmeans":
            result = kmeans(points, k, np.random.default_rng([settings.seed, k]))
        else:
            result = agglomerative(points, k)
        seconds = time.perf_counter() - start
        rep = _report(method, lift(result, inside).clusters, labels, settings.injective,
                      seconds, {"k": k})
        if best is None or rep.metrics.fscore > best.metrics.fscore:
            best = rep
    return best


def evaluate_sessions(seeds: Sequence[int], methods: Sequence[str], noised: bool,
                      settings: EvalSettings = EvalSettings(),
                      base: SessionConfig = SessionConfig()) -> list[tuple[int, MethodReport]]:
    rows = []
    for seed in seeds:
        cfg = replace(base, seed=seed, noise1=noised, noise2=noised)
        ts, gt = generate_session(cfg)
        for method in methods:
            rows.append((seed, run_method(ts, gt.labels, method, replace(settings, seed=seed))))
    return rows

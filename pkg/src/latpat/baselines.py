"""Comparison methods: branch-and-bound pattern search and plain clustering.

The clustering baselines only see the raw per-RPC execution times of the
traces inside the target interval; they know nothing about latency.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bitindex import BitIndex, eval_condition
from .density import DensityConfig
from .patterns import EMPTY, Condition, Pattern, QualityScore, ZERO_SCORE


@dataclass
class ClusterResult:
    clusters: list[list[int]]
    method: str
    params: dict = field(default_factory=dict)


# --- branch and bound -------------------------------------------------------

def lattice_conditions(idx: BitIndex) -> list[Condition]:
    """Every condition with both endpoints on the lattice, ordered by RPC."""
    return [Condition(rpc, lo, hi)
            for rpc in sorted(idx.thresholds)
            for lo, hi in itertools.combinations(idx.thresholds[rpc], 2)]


def _f_upper_bound(tp: int, n_pos: int) -> float:
    # best case for any refinement: keep every tp, drop every fp
    recall = tp / n_pos
    return 2 * recall / (1 + recall)


@dataclass
class BnbStats:
    expanded: int = 0
    pruned: int = 0


def branch_and_bound(idx: BitIndex, max_depth: int = 3, prune: bool = True,
                     stats: BnbStats | None = None) -> tuple[Pattern, QualityScore]:
    """Best pattern of at most ``max_depth`` conditions on distinct RPCs.

    Best-first over a tree where each level adds one condition on an RPC with
    a larger index than any already used, so every RPC set is visited once.
    Two conditions on one RPC equal a single narrower lattice condition, so
    restricting to distinct RPCs loses nothing. With ``prune=False`` the whole
    tree is enumerated.
    """
    conds = lattice_conditions(idx)
    if not conds:
        raise ValueError("threshold lattice is empty")
    stats = stats if stats is not None else BnbStats()
    n_pos = idx.n_pos
    bits = [eval_condition(idx, c) for c in conds]

    best_pattern, best_score = EMPTY, ZERO_SCORE
    best_key = (0.0, 0, ())

    def consider(chosen: tuple[int, ...], tp: int, fp: int):
        nonlocal best_pattern, best_score, best_key
        if tp == 0:
            return
        score = QualityScore.from_counts(tp, fp, n_pos)
        pattern = Pattern(tuple(conds[k] for k in chosen))
        key = (-score.fscore, len(chosen), pattern.sort_key())
        if best_pattern is EMPTY or key < best_key:
            best_pattern, best_score, best_key = pattern, score, key

    # heap items: (-bound, chosen condition ids, pos bits, neg bits)
    heap = [(-1.0, (), idx.all_pos, idx.all_neg)]
    while heap:
        neg_bound, chosen, bp, bn = heapq.heappop(heap)
        if prune and -neg_bound <= best_score.fscore:
            stats.pruned += 1 + len(heap)
            break
        stats.expanded += 1
        if len(chosen) == max_depth:
            continue
        last_rpc = conds[chosen[-1]].rpc if chosen else -1
        for k, cond in enumerate(conds):
            if cond.rpc <= last_rpc:
                continue
            cp, cn = bits[k]
            tp_bits = bp & cp
            tp = tp_bits.bit_count()
            if tp == 0:
                continue
            fp_bits = bn & cn
            child = (*chosen, k)
            consider(child, tp, fp_bits.bit_count())
            bound = _f_upper_bound(tp, n_pos)
            if prune and bound <= best_score.fscore:
                stats.pruned += 1
                continue
            heapq.heappush(heap, (-bound, child, tp_bits, fp_bits))
    return best_pattern, best_score


# --- clustering -------------------------------------------------------------

def _wcss(points: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> float:
    return float(((points - centers[labels]) ** 2).sum())


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = [points[rng.integers(n)]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=float)


def kmeans(points, k: int, rng: np.random.Generator | int | None = None,
           max_iter: int = 300, history: list | None = None) -> ClusterResult:
    """Lloyd's algorithm with k-means++ seeding.

    ``history``, when given, receives the within-cluster sum of squares after
    every assignment step.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    rng = np.random.default_rng(rng)
    centers = _kmeans_pp(points, k, rng)
    labels = None
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if history is not None:
            history.append(_wcss(points, new_labels, centers))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    clusters = [np.flatnonzero(labels == c).tolist() for c in range(k)]
    return ClusterResult([c for c in clusters if c], "kmeans", {"k": k})


def agglomerative(points, k: int, merges: list | None = None) -> ClusterResult:
    """Bottom-up Ward clustering down to ``k`` clusters.

    Uses the Lance-Williams update on squared Euclidean distances.
    ``merges``, when given, receives each merged pair.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if k < 1:
        raise ValueError("k must be >= 1")
    if n == 0:
        return ClusterResult([], "hier", {"k": k})
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    size = np.ones(n)
    # Ward distance between singletons is half the squared Euclidean distance
    dist = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2) / 2.0
    np.fill_diagonal(dist, np.inf)
    alive = np.ones(n, dtype=bool)
    while len(members) > k:
        flat = int(np.argmin(dist))
        a, b = divmod(flat, n)
        a, b = min(a, b), max(a, b)
        if merges is not None:
            merges.append((a, b))
        na, nb = size[a], size[b]
        others = alive.copy()
        others[[a, b]] = False
        nk = size[others]
        dist[a, others] = ((na + nk) * dist[a, others] + (nb + nk) * dist[b, others]
                           - nk * dist[a, b]) / (na + nb + nk)
        dist[others, a] = dist[a, others]
        dist[b, :] = np.inf
        dist[:, b] = np.inf
        alive[b] = False
        size[a] = na + nb
        members[a].extend(members.pop(b))
    clusters = [sorted(m) for _, m in sorted(members.items())]
    return ClusterResult(clusters, "hier", {"k": k})


def vector_bandwidth(points, config: DensityConfig = DensityConfig()) -> float:
    """Scalar bandwidth rule lifted to vectors: factor x norm of per-axis stds."""
    points = np.asarray(points, dtype=float)
    spread = float(np.linalg.norm(points.std(axis=0))) if len(points) else 0.0
    return max(config.bandwidth_factor * spread, config.bandwidth_floor_ms)


def meanshift_cluster(points, bandwidth: float | None = None,
                      config: DensityConfig = DensityConfig(),
                      tol: float = 1e-6, max_iter: int = 500) -> ClusterResult:
    """Flat-kernel mean shift in any dimension, seeded from every point."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if n == 0:
        return ClusterResult([], "meanshift", {"bandwidth": bandwidth})
    h = vector_bandwidth(points, config) if bandwidth is None else float(bandwidth)
    shifted = points.copy()
    active = np.ones(n, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        cur = shifted[active]
        d2 = ((cur[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        window = d2 <= h * h
        new = (window @ points) / window.sum(axis=1, keepdims=True)
        moved = np.sqrt(((new - cur) ** 2).sum(axis=1))
        shifted[active] = new
        ids = np.flatnonzero(active)
        active[ids[moved < tol]] = False
    # merge converged modes within h/2, visiting in lexicographic order
    order = np.lexsort(shifted.T[::-1])
    centers: list[np.ndarray] = []
    groups: list[list[np.ndarray]] = []
    for i in order:
        m = shifted[i]
        for c, grp in enumerate(groups):
            if np.linalg.norm(m - centers[c]) < h / 2:
                grp.append(m)
                break
        else:
            centers.append(m)
            groups.append([m])
    centers_arr = np.array([np.mean(g, axis=0) for g in groups])
    # as in the 1-d case, a point joins the center nearest to where it converged
    d2 = ((shifted[:, None, :] - centers_arr[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    clusters = [np.flatnonzero(labels == c).tolist() for c in range(len(centers_arr))]
    return ClusterResult([c for c in clusters if c], "meanshift", {"bandwidth": h})


def lift(result: ClusterResult, indices: Sequence[int]) -> ClusterResult:
    """Map cluster members from local positions back to trace indices."""
    indices = list(indices)
    return ClusterResult([[indices[i] for i in c] for c in result.clusters],
                         result.method, result.params)

"""Choose a subset of latency split points maximising the summed pattern score.

``D(0) = 0`` and ``D(i) = max_{j < i} D(j) + theta(j, i)``, where
``theta(j, i)`` is the best pattern quality for ``[s_j, s_i)``. Ties prefer
the smallest ``j``, i.e. fewer and longer segments.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .bitindex import BitIndex, build_index
from .density import DensityConfig, ThresholdSet, infer_thresholds
from .patterns import EMPTY, Pattern, QualityScore, ZERO_SCORE
from .traces import LatencyInterval, TraceSet, partition

# solver(index, seed) -> (pattern, score)
Solver = Callable[[BitIndex, int], tuple[Pattern, QualityScore]]


@dataclass(frozen=True)
class Segment:
    interval: LatencyInterval
    pattern: Pattern
    score: QualityScore

    @property
    def theta(self) -> float:
        return self.score.fscore

    def to_dict(self, rpc_names: Sequence[str]) -> dict:
        return {
            "interval": self.interval.as_list(),
            "pattern": self.pattern.to_dict(rpc_names),
            "precision": self.score.precision,
            "recall": self.score.recall,
            "fscore": self.score.fscore,
            "tp": self.score.tp,
            "fp": self.score.fp,
        }


@dataclass(frozen=True)
class Segmentation:
    splits: tuple[float, ...]
    chosen: tuple[int, ...]  # indices into ``splits``
    segments: tuple[Segment, ...]
    total_score: float

    @property
    def chosen_points(self) -> list[float]:
        return [self.splits[i] for i in self.chosen]

    def to_dict(self, rpc_names: Sequence[str]) -> dict:
        return {
            "splits": list(self.splits),
            "chosen_points": self.chosen_points,
            "segments": [s.to_dict(rpc_names) for s in self.segments],
            "total_score": self.total_score,
        }


def best_partition(n_points: int, score: Callable[[int, int], float]) -> tuple[float, list[int]]:
    """DP over split-point indices ``0..n_points-1``.

    Returns the best total and the chosen indices, always starting at 0 and
    ending at ``n_points - 1``.
    """
    if n_points < 2:
        raise ValueError("need at least two split points")
    best = [0.0] * n_points
    back = [0] * n_points
    for i in range(1, n_points):
        best_val, best_j = None, 0
        for j in range(i):
            val = best[j] + score(j, i)
            if best_val is None or val > best_val:
                best_val, best_j = val, j
        best[i], back[i] = best_val, best_j
    chosen = [n_points - 1]
    while chosen[-1] != 0:
        chosen.append(back[chosen[-1]])
    return best[-1], chosen[::-1]


def derive_seed(base_seed: int, i: int, j: int) -> int:
    return int(np.random.SeedSequence([base_seed, i, j]).generate_state(1)[0])


class ThetaCache:
    """Memoised ``theta`` values keyed by split-index pair."""

    def __init__(self):
        self._data: dict[tuple[int, int], tuple[Pattern, QualityScore]] = {}
        self._lock = threading.Lock()

    def get(self, key):
        return self._data.get(key)

    def put(self, key, value):
        with self._lock:
            return self._data.setdefault(key, value)

    def __len__(self):
        return len(self._data)


def theta(ts: TraceSet, lo: float, hi: float, solver: Solver, thresholds: ThresholdSet,
          seed: int = 0, cache: ThetaCache | None = None, key=None) -> tuple[Pattern, QualityScore]:
    """Best pattern and score for latency interval ``[lo, hi)``.

    An interval without positive traces scores zero with the empty pattern.
    """
    key = (lo, hi) if key is None else key
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    interval = LatencyInterval(lo, hi)
    pos, _ = partition(ts, interval)
    if not pos:
        value = (EMPTY, ZERO_SCORE)
    else:
        value = solver(build_index(ts, interval, thresholds), seed)
    if cache is not None:
        value = cache.put(key, value)
    return value


def segment(ts: TraceSet, splits: Sequence[float], solver: Solver,
            thresholds: ThresholdSet | None = None, base_seed: int = 0,
            cache: ThetaCache | None = None,
            density: DensityConfig = DensityConfig()) -> Segmentation:
    """Optimal segmentation of ``[splits[0], splits[-1])``."""
    splits = [float(s) for s in splits]
    if len(splits) < 2:
        raise ValueError("segment needs at least two split points")
    if any(b <= a for a, b in zip(splits, splits[1:])):
        raise ValueError("split points must be strictly increasing")
    if thresholds is None:
        thresholds = infer_thresholds(ts, density)
    cache = ThetaCache() if cache is None else cache

    def score(j: int, i: int) -> float:
        return theta(ts, splits[j], splits[i], solver, thresholds,
                     derive_seed(base_seed, j, i), cache, key=(j, i))[1].fscore

    total, chosen = best_partition(len(splits), score)
    segments = []
    for a, b in zip(chosen, chosen[1:]):
        pattern, sc = cache.get((a, b))
        segments.append(Segment(LatencyInterval(splits[a], splits[b]), pattern, sc))
    return Segmentation(tuple(splits), tuple(chosen), tuple(segments), total)

"""One-dimensional mean-shift clustering and the thresholds derived from it.

The same routine serves two purposes: per-RPC execution-time thresholds that
form the search lattice, and latency split points for segmentation. In both
cases cut points sit at the midpoints of the gaps between adjacent clusters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .traces import LatencyInterval, TraceSet, partition

BANDWIDTH_FACTOR = 0.3
BANDWIDTH_FLOOR_MS = 1.0
TOLERANCE = 1e-6
MAX_ITER = 500


@dataclass(frozen=True)
class DensityConfig:
    bandwidth_factor: float = BANDWIDTH_FACTOR
    bandwidth_floor_ms: float = BANDWIDTH_FLOOR_MS
    kernel: str = "flat"  # threshold lattice
    split_kernel: str = "gaussian"  # latency split points

    def bandwidth(self, values) -> float:
        values = np.asarray(values, dtype=float)
        spread = float(values.std()) if values.size else 0.0
        return max(self.bandwidth_factor * spread, self.bandwidth_floor_ms)


@dataclass(frozen=True)
class ModeClustering:
    assignments: np.ndarray
    centers: np.ndarray
    cluster_bounds: np.ndarray  # shape (k, 2): [min, max] of member values

    @property
    def n_clusters(self) -> int:
        return len(self.centers)


def _gaussian_shift(values: np.ndarray, bandwidth: float) -> np.ndarray:
    data = np.sort(values)
    points = values.astype(float, copy=True)
    active = np.ones(points.shape, dtype=bool)
    reach = 6.0 * bandwidth  # weights beyond 6 sigma are below 1e-7
    for _ in range(MAX_ITER):
        if not active.any():
            break
        p = points[active]
        lo = np.searchsorted(data, p.min() - reach, side="left")
        hi = np.searchsorted(data, p.max() + reach, side="right")
        window = data[lo:hi]
        w = np.exp(-0.5 * ((p[:, None] - window[None, :]) / bandwidth) ** 2)
        shifted = (w @ window) / w.sum(axis=1)
        moved = np.abs(shifted - p)
        points[active] = shifted
        still = np.flatnonzero(active)[moved >= TOLERANCE]
        active[:] = False
        active[still] = True
    return points


def _shift_to_modes(values: np.ndarray, bandwidth: float, kernel: str = "flat") -> np.ndarray:
    """Run mean shift from every value until convergence.

    Returns the converged position of each seed, aligned with ``values``.
    """
    if kernel == "gaussian":
        return _gaussian_shift(values, bandwidth)
    if kernel != "flat":
        raise ValueError(f"unknown kernel {kernel!r}")
    data = np.sort(values)
    prefix = np.concatenate(([0.0], np.cumsum(data)))
    points = values.astype(float, copy=True)
    active = np.ones(points.shape, dtype=bool)
    for _ in range(MAX_ITER):
        if not active.any():
            break
        p = points[active]
        lo = np.searchsorted(data, p - bandwidth, side="left")
        hi = np.searchsorted(data, p + bandwidth, side="right")
        # the window always holds at least the point's own seed value
        shifted = (prefix[hi] - prefix[lo]) / (hi - lo)
        moved = np.abs(shifted - p)
        points[active] = shifted
        still = np.flatnonzero(active)[moved >= TOLERANCE]
        active[:] = False
        active[still] = True
    return points


def _nearest(centers: np.ndarray, x: np.ndarray) -> np.ndarray:
    # ties go to the lower center
    pos = np.searchsorted(centers, x)
    left = np.clip(pos - 1, 0, len(centers) - 1)
    right = np.clip(pos, 0, len(centers) - 1)
    take_right = np.abs(centers[right] - x) < np.abs(x - centers[left])
    return np.where(take_right, right, left)


def mean_shift_1d(values: Sequence[float], bandwidth: float,
                  kernel: str = "flat") -> ModeClustering:
    """Cluster scalar values by mean shift.

    Every value seeds a trajectory; converged modes closer than
    ``bandwidth / 2`` are merged, and each value joins the mode nearest to
    where its own trajectory converged. ``kernel`` is ``"flat"`` (radius
    ``bandwidth``) or ``"gaussian"`` (standard deviation ``bandwidth``).
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("mean_shift_1d needs at least one value")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    converged = _shift_to_modes(values, bandwidth, kernel)
    modes = np.sort(converged)
    merge_radius = bandwidth / 2
    groups: list[list[float]] = [[modes[0]]]
    for m in modes[1:]:
        if m - groups[-1][-1] < merge_radius:
            groups[-1].append(m)
        else:
            groups.append([m])
    centers = np.array([float(np.mean(g)) for g in groups])
    assignments = _nearest(centers, converged)
    used = np.unique(assignments)
    if len(used) != len(centers):
        remap = np.full(len(centers), -1)
        remap[used] = np.arange(len(used))
        centers, assignments = centers[used], remap[assignments]
    bounds = np.array([[values[assignments == c].min(), values[assignments == c].max()]
                       for c in range(len(centers))])
    return ModeClustering(assignments.astype(int), centers, bounds)


def gap_midpoints(clustering: ModeClustering) -> list[float]:
    """Midpoints between the bounds of adjacent clusters."""
    b = clustering.cluster_bounds
    return [float((b[c, 1] + b[c + 1, 0]) / 2) for c in range(len(b) - 1)]


ThresholdSet = dict[int, list[float]]


def rpc_thresholds(values, config: DensityConfig = DensityConfig()) -> list[float]:
    values = np.asarray(values, dtype=float)
    clustering = mean_shift_1d(values, config.bandwidth(values), config.kernel)
    cuts = [float(values.min()), *gap_midpoints(clustering), math.inf]
    return sorted(set(cuts))


def infer_thresholds(ts: TraceSet, config: DensityConfig = DensityConfig()) -> ThresholdSet:
    """Per-RPC threshold lattice: data minimum, gap midpoints, and +inf."""
    if len(ts) == 0:
        raise ValueError("infer_thresholds needs at least one trace")
    return {j: rpc_thresholds(ts.exec_times[:, j], config) for j in range(ts.arity)}


def infer_split_points(ts: TraceSet, interval: LatencyInterval,
                       config: DensityConfig = DensityConfig(),
                       scope: str = "positives") -> list[float]:
    """Candidate split points over ``interval`` at latency density valleys.

    ``scope`` selects the latencies clustered: ``"all"`` traces or only the
    ``"positives"`` inside the interval. Only valleys strictly inside the
    interval are kept.
    """
    pos, _ = partition(ts, interval)
    if not pos:
        raise ValueError("no trace latency falls inside the interval")
    if scope == "all":
        latencies = ts.latency
    elif scope == "positives":
        latencies = ts.latency[pos]
    else:
        raise ValueError(f"unknown split scope {scope!r}")
    clustering = mean_shift_1d(latencies, config.bandwidth(latencies), config.split_kernel)
    inner = [m for m in gap_midpoints(clustering) if interval.lo < m < interval.hi]
    return [interval.lo, *sorted(set(inner)), interval.hi]

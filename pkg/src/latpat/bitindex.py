"""Precomputed inequality checks as bitstrings.

For each lattice threshold ``t`` of RPC ``j`` the index stores two bitstrings,
one over positive and one over negative traces, where bit ``i`` is set iff
the ``i``-th trace of that partition has ``exec_time[j] >= t``. A condition
``[lo, hi)`` is then ``B(lo) & ~B(hi)`` and a pattern is the AND of its
conditions; tp/fp are popcounts.

Bitstrings are Python ints (bit ``i`` = ``1 << i``), so bits past the
partition length are always zero and popcount needs no masking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .density import ThresholdSet
from .patterns import Condition, Pattern, QualityScore, ZERO_SCORE
from .traces import LatencyInterval, TraceSet, partition


class LatticeError(KeyError):
    """A condition endpoint is not one of the indexed thresholds."""


def pack_bits(flags: np.ndarray) -> int:
    """Pack a boolean vector into an int, element ``i`` -> bit ``i``."""
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        return 0
    return int.from_bytes(np.packbits(flags, bitorder="little").tobytes(), "little")


def bit_string(bits: int, length: int) -> str:
    """Render bits in trace order (bit 0 first), e.g. ``'110'``."""
    return "".join("1" if bits >> i & 1 else "0" for i in range(length))


@dataclass(frozen=True)
class BitIndex:
    interval: LatencyInterval
    pos_indices: tuple[int, ...]
    neg_indices: tuple[int, ...]
    thresholds: dict[int, tuple[float, ...]]
    table: dict[tuple[int, float], tuple[int, int]]
    _cond_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_pos(self) -> int:
        return len(self.pos_indices)

    @property
    def n_neg(self) -> int:
        return len(self.neg_indices)

    @property
    def all_pos(self) -> int:
        return (1 << self.n_pos) - 1

    @property
    def all_neg(self) -> int:
        return (1 << self.n_neg) - 1

    def lookup(self, rpc: int, threshold: float) -> tuple[int, int]:
        if math.isinf(threshold) and threshold > 0:
            return 0, 0
        try:
            return self.table[rpc, threshold]
        except KeyError:
            raise LatticeError(f"threshold {threshold} of RPC {rpc} is not indexed") from None

    def dump(self) -> list[dict]:
        """Debug entries: bitstrings in trace order plus their hex values."""
        return [
            {"rpc": rpc, "threshold": t,
             "pos": bit_string(bp, self.n_pos), "neg": bit_string(bn, self.n_neg),
             "pos_hex": hex(bp), "neg_hex": hex(bn)}
            for (rpc, t), (bp, bn) in sorted(self.table.items())
        ]


def build_index(ts: TraceSet, interval: LatencyInterval, thresholds: ThresholdSet) -> BitIndex:
    """Precompute ``exec_time >= t`` bitstrings for every finite lattice threshold."""
    pos, neg = partition(ts, interval)
    if not pos:
        raise ValueError(f"no trace latency falls in [{interval.lo}, {interval.hi})")
    pos_times = ts.exec_times[pos]
    neg_times = ts.exec_times[neg]
    table = {}
    for rpc, cuts in thresholds.items():
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError(f"thresholds of RPC {rpc} are not strictly increasing")
        for t in cuts:
            if math.isinf(t):
                continue
            table[rpc, t] = (pack_bits(pos_times[:, rpc] >= t), pack_bits(neg_times[:, rpc] >= t))
    return BitIndex(
        interval, tuple(pos), tuple(neg),
        {rpc: tuple(cuts) for rpc, cuts in thresholds.items()},
        table,
    )


def eval_condition(idx: BitIndex, cond: Condition) -> tuple[int, int]:
    """Bitstrings of positive and negative traces satisfying ``cond``."""
    hit = idx._cond_cache.get(cond)
    if hit is None:
        lo_pos, lo_neg = idx.lookup(cond.rpc, cond.e_min)
        hi_pos, hi_neg = idx.lookup(cond.rpc, cond.e_max)
        hit = (lo_pos & ~hi_pos, lo_neg & ~hi_neg)
        idx._cond_cache[cond] = hit
    return hit


def pattern_bits(idx: BitIndex, pattern: Pattern) -> tuple[int, int]:
    bp, bn = idx.all_pos, idx.all_neg
    for cond in pattern.conditions:
        cp, cn = eval_condition(idx, cond)
        bp &= cp
        bn &= cn
    return bp, bn


def eval_pattern(idx: BitIndex, pattern: Pattern) -> tuple[int, int]:
    """(tp, fp) counts of a non-empty pattern."""
    if not pattern.conditions:
        raise ValueError("eval_pattern needs a non-empty pattern")
    bp, bn = pattern_bits(idx, pattern)
    return bp.bit_count(), bn.bit_count()


def fitness(idx: BitIndex, pattern: Pattern) -> QualityScore:
    """Quality of ``pattern``; the empty pattern scores zero."""
    if not pattern.conditions:
        return ZERO_SCORE
    tp, fp = eval_pattern(idx, pattern)
    return QualityScore.from_counts(tp, fp, idx.n_pos)


def universal_score(idx: BitIndex) -> QualityScore:
    """True quality of the empty (always satisfied) pattern, for reporting."""
    return QualityScore.from_counts(idx.n_pos, idx.n_neg, idx.n_pos)


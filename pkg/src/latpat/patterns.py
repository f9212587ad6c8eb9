"""Conditions, patterns and the F-score quality of a pattern.

This is the direct, per-trace evaluation. :mod:`latpat.bitindex` computes the
same numbers from precomputed bitstrings and is tested against this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .traces import LatencyInterval, Trace, TraceSet, partition


class Condition(NamedTuple):
    """``e_min <= exec_time[rpc] < e_max``; ``e_max`` may be ``inf``."""

    rpc: int
    e_min: float
    e_max: float = math.inf


@dataclass(frozen=True, eq=False)
class Pattern:
    """A conjunction of conditions.

    Conditions form a multiset: crossover may put two conditions on the same
    RPC, which then act as the intersection of their intervals. Equality and
    hashing use the canonical (merged) form.
    """

    conditions: tuple[Condition, ...] = ()

    def __post_init__(self):
        conds = self.conditions
        if type(conds) is not tuple or not all(type(c) is Condition for c in conds):
            object.__setattr__(self, "conditions", tuple(Condition(*c) for c in conds))

    def __len__(self) -> int:
        return len(self.conditions)

    def __iter__(self):
        return iter(self.conditions)

    def canonical(self) -> tuple[Condition, ...]:
        merged: dict[int, tuple[float, float]] = {}
        for c in self.conditions:
            lo, hi = merged.get(c.rpc, (-math.inf, math.inf))
            merged[c.rpc] = (max(lo, c.e_min), min(hi, c.e_max))
        return tuple(Condition(j, lo, hi) for j, (lo, hi) in sorted(merged.items()))

    def is_satisfiable(self) -> bool:
        return all(c.e_min < c.e_max for c in self.canonical())

    def rpcs(self) -> set[int]:
        return {c.rpc for c in self.conditions}

    def sort_key(self) -> tuple:
        return tuple(sorted(self.conditions))

    def __eq__(self, other):
        if not isinstance(other, Pattern):
            return NotImplemented
        if not (self.is_satisfiable() or other.is_satisfiable()):
            return True
        return self.canonical() == other.canonical()

    def __hash__(self):
        if not self.is_satisfiable():
            return hash("unsatisfiable")
        return hash(self.canonical())

    def to_dict(self, rpc_names: Sequence[str]) -> dict:
        return {"conditions": [
            {"rpc": rpc_names[c.rpc], "min": c.e_min,
             "max": None if math.isinf(c.e_max) else c.e_max}
            for c in self.canonical()
        ]}

    @classmethod
    def from_dict(cls, data: dict, rpc_names: Sequence[str]) -> "Pattern":
        names = list(rpc_names)
        return cls(tuple(
            Condition(names.index(c["rpc"]), float(c["min"]),
                      math.inf if c.get("max") is None else float(c["max"]))
            for c in data["conditions"]
        ))

    def describe(self, rpc_names: Sequence[str]) -> str:
        if not self.conditions:
            return "(no condition)"
        parts = []
        for c in self.canonical():
            if math.isinf(c.e_max):
                parts.append(f"{rpc_names[c.rpc]} >= {c.e_min:.1f}ms")
            else:
                parts.append(f"{rpc_names[c.rpc]} in [{c.e_min:.1f}, {c.e_max:.1f})ms")
        return " and ".join(parts)


EMPTY = Pattern()


@dataclass(frozen=True)
class QualityScore:
    tp: int
    fp: int
    precision: float
    recall: float
    fscore: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, n_pos: int) -> "QualityScore":
        if n_pos <= 0:
            raise ValueError("quality is undefined without positive traces")
        if tp == 0:
            return cls(0, fp, 0.0, 0.0, 0.0)
        precision = tp / (tp + fp)
        recall = tp / n_pos
        return cls(tp, fp, precision, recall, f_score(precision, recall))

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "precision": self.precision,
                "recall": self.recall, "fscore": self.fscore}


ZERO_SCORE = QualityScore(0, 0, 0.0, 0.0, 0.0)


def f_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _check_rpc(trace: Trace, rpc: int) -> None:
    if not 0 <= rpc < len(trace.exec_times):
        raise IndexError(f"RPC index {rpc} out of range for a trace of arity {len(trace.exec_times)}")


def satisfies_condition(trace: Trace, cond: Condition) -> bool:
    _check_rpc(trace, cond.rpc)
    return cond.e_min <= trace.exec_times[cond.rpc] < cond.e_max


def satisfies_pattern(trace: Trace, pattern: Pattern | Iterable[Condition]) -> bool:
    return all(satisfies_condition(trace, c) for c in pattern)


def quality(pattern: Pattern, ts: TraceSet, interval: LatencyInterval) -> QualityScore:
    """Precision, recall and F-score of ``pattern`` for latency ``interval``."""
    if len(ts) == 0:
        raise ValueError("quality needs a non-empty trace set")
    pos, neg = partition(ts, interval)
    if not pos:
        raise ValueError(f"no trace latency falls in [{interval.lo}, {interval.hi})")
    tp = sum(satisfies_pattern(ts[i], pattern) for i in pos)
    fp = sum(satisfies_pattern(ts[i], pattern) for i in neg)
    return QualityScore.from_counts(tp, fp, len(pos))

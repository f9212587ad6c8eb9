"""Trace tables, span trees and positive/negative partitioning.

A trace is one request: the pure execution time of every RPC it touched plus
the end-to-end latency. Row order is significant everywhere downstream, since
bit ``i`` of every bitstring refers to the ``i``-th trace of a partition.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class TraceFormatError(ValueError):
    """Raised when a trace file cannot be parsed."""


class SpanStructureError(ValueError):
    """Raised when a span tree violates parent/child timing constraints."""


@dataclass(frozen=True)
class LatencyInterval:
    """Half-open latency interval ``[lo, hi)`` in milliseconds."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty latency interval [{self.lo}, {self.hi})")

    def __contains__(self, value: float) -> bool:
        return self.lo <= value < self.hi

    @classmethod
    def parse(cls, text: str) -> "LatencyInterval":
        """Parse ``"lo:hi"`` into ``[lo, hi)``."""
        try:
            lo, hi = text.split(":")
            return cls(float(lo), float(hi))
        except ValueError as exc:
            raise ValueError(f"bad interval {text!r}, expected lo:hi") from exc

    def as_list(self) -> list[float]:
        return [self.lo, self.hi]


@dataclass(frozen=True)
class Trace:
    exec_times: tuple[float, ...]
    latency: float
    label: str | None = None


@dataclass(frozen=True, eq=False)
class TraceSet:
    """An ordered, immutable table of traces.

    ``exec_times`` has shape ``(n_traces, n_rpcs)``; ``latency`` has shape
    ``(n_traces,)``. ``labels`` holds an optional ground-truth tag per trace.
    """

    rpc_names: tuple[str, ...]
    exec_times: np.ndarray
    latency: np.ndarray
    labels: tuple[str | None, ...] | None = None
    latency_name: str = "latency"

    def __post_init__(self):
        names = tuple(self.rpc_names)
        if len(set(names)) != len(names):
            raise ValueError("RPC names must be unique")
        exec_times = np.asarray(self.exec_times, dtype=float)
        if exec_times.size == 0:
            exec_times = exec_times.reshape(0, len(names))
        latency = np.asarray(self.latency, dtype=float).reshape(-1)
        if exec_times.ndim != 2 or exec_times.shape[1] != len(names):
            raise ValueError(f"exec_times must have shape (n, {len(names)})")
        if exec_times.shape[0] != latency.shape[0]:
            raise ValueError("exec_times and latency disagree on trace count")
        if (exec_times < 0).any() or (latency < 0).any():
            raise ValueError("times must be non-negative")
        labels = self.labels
        if labels is not None:
            labels = tuple(lbl if lbl else None for lbl in labels)
            if len(labels) != latency.shape[0]:
                raise ValueError("labels length differs from trace count")
        exec_times.setflags(write=False)
        latency.setflags(write=False)
        object.__setattr__(self, "rpc_names", names)
        object.__setattr__(self, "exec_times", exec_times)
        object.__setattr__(self, "latency", latency)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.latency.shape[0]

    def __getitem__(self, i: int) -> Trace:
        label = self.labels[i] if self.labels is not None else None
        return Trace(tuple(self.exec_times[i].tolist()), float(self.latency[i]), label)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def arity(self) -> int:
        return len(self.rpc_names)

    def rpc_index(self, name: str) -> int:
        try:
            return self.rpc_names.index(name)
        except ValueError:
            raise KeyError(f"unknown RPC {name!r}") from None

    def subset(self, indices: Sequence[int]) -> "TraceSet":
        idx = np.asarray(indices, dtype=int)
        labels = None if self.labels is None else tuple(self.labels[i] for i in idx)
        return TraceSet(self.rpc_names, self.exec_times[idx], self.latency[idx],
                        labels, self.latency_name)

    @classmethod
    def from_traces(cls, rpc_names: Sequence[str], traces: Iterable[Trace],
                    latency_name: str = "latency") -> "TraceSet":
        traces = list(traces)
        labels = [t.label for t in traces]
        return cls(
            tuple(rpc_names),
            np.array([t.exec_times for t in traces], dtype=float).reshape(len(traces), len(rpc_names)),
            np.array([t.latency for t in traces], dtype=float),
            tuple(labels) if any(lbl is not None for lbl in labels) else None,
            latency_name,
        )


def _parse_time(text, row: int, column: str) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise TraceFormatError(f"row {row}: non-numeric value {text!r} in column {column!r}") from None
    if not math.isfinite(value):
        raise TraceFormatError(f"row {row}: non-finite value in column {column!r}")
    if value < 0:
        raise TraceFormatError(f"row {row}: negative time {value} in column {column!r}")
    return value


def _load_csv(path: Path) -> TraceSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TraceFormatError("row 1: missing header") from None
        has_label = bool(header) and header[-1] == "label"
        numeric = header[:-1] if has_label else header
        if len(numeric) < 2:
            raise TraceFormatError("row 1: need at least one RPC column and a latency column")
        rpc_names, latency_name = numeric[:-1], numeric[-1]
        rows, latencies, labels = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise TraceFormatError(
                    f"row {line_no}: expected {len(header)} fields, got {len(row)}")
            values = [_parse_time(cell, line_no, col) for cell, col in zip(row, numeric)]
            rows.append(values[:-1])
            latencies.append(values[-1])
            labels.append(row[-1].strip() or None if has_label else None)
    return TraceSet(
        tuple(rpc_names),
        np.array(rows, dtype=float).reshape(len(rows), len(rpc_names)),
        np.array(latencies, dtype=float),
        tuple(labels) if has_label else None,
        latency_name,
    )


def _load_json(path: Path) -> TraceSet:
    with open(path) as fh:
        try:
            records = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"invalid JSON: {exc}") from None
    if not isinstance(records, list):
        raise TraceFormatError("expected a JSON array of trace objects")
    rpc_names: list[str] | None = None
    rows, latencies, labels = [], [], []
    for n, rec in enumerate(records, start=1):
        try:
            times = rec["exec_times"]
            latency = rec["latency"]
        except (KeyError, TypeError):
            raise TraceFormatError(f"row {n}: missing 'exec_times' or 'latency'") from None
        if rpc_names is None:
            rpc_names = list(times)
        elif set(times) != set(rpc_names):
            raise TraceFormatError(f"row {n}: RPC set differs from first row")
        rows.append([_parse_time(times[name], n, name) for name in rpc_names])
        latencies.append(_parse_time(latency, n, "latency"))
        labels.append(rec.get("label") or None)
    rpc_names = rpc_names or []
    return TraceSet(
        tuple(rpc_names),
        np.array(rows, dtype=float).reshape(len(rows), len(rpc_names)),
        np.array(latencies, dtype=float),
        tuple(labels) if any(lbl is not None for lbl in labels) else None,
    )


def load_table(path, format: str | None = None) -> TraceSet:
    """Load traces from a CSV or JSON file, keeping file row order.

    ``format`` defaults to the file extension.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "json":
        return _load_json(path)
    raise ValueError(f"unsupported trace format {fmt!r}")


def write_csv(ts: TraceSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = [*ts.rpc_names, ts.latency_name]
        if ts.labels is not None:
            header.append("label")
        writer.writerow(header)
        for i in range(len(ts)):
            row = [repr(float(v)) for v in ts.exec_times[i]]
            row.append(repr(float(ts.latency[i])))
            if ts.labels is not None:
                row.append(ts.labels[i] or "")
            writer.writerow(row)


def partition(ts: TraceSet, interval: LatencyInterval) -> tuple[list[int], list[int]]:
    """Split trace indices into those with latency in ``interval`` and the rest."""
    inside = (ts.latency >= interval.lo) & (ts.latency < interval.hi)
    return np.flatnonzero(inside).tolist(), np.flatnonzero(~inside).tolist()


# --- span trees -------------------------------------------------------------

@dataclass
class Span:
    name: str
    start: float
    duration: float
    kind: str = "sync"
    children: list["Span"] = field(default_factory=list)

    @property
    def end(self) -> float:
        return self.start + self.duration

    @classmethod
    def from_dict(cls, data: dict) -> "Span":
        kind = data.get("kind", "sync")
        if kind not in ("sync", "async"):
            raise SpanStructureError(f"span {data.get('name')!r}: unknown kind {kind!r}")
        return cls(
            name=data["name"],
            start=float(data["start"]),
            duration=float(data["duration"]),
            kind=kind,
            children=[cls.from_dict(c) for c in data.get("children", [])],
        )


def _union_length(intervals: list[tuple[float, float]]) -> float:
    total, cur_lo, cur_hi = 0.0, None, None
    for lo, hi in sorted(intervals):
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    if cur_hi is not None:
        total += cur_hi - cur_lo
    return total


def pure_execution_times(tree: Span) -> dict[str, float]:
    """Per-RPC pure execution time of a span tree.

    A span's pure time is its duration minus the time covered by its
    synchronous children; asynchronous children are not waited on. Spans
    sharing a name are summed.
    """
    out: dict[str, float] = {}
    stack = [tree]
    while stack:
        span = stack.pop()
        if span.duration < 0:
            raise SpanStructureError(f"span {span.name!r}: negative duration")
        waits = []
        for child in span.children:
            if child.start < span.start:
                raise SpanStructureError(
                    f"span {child.name!r} starts before its parent {span.name!r}")
            if child.kind == "sync":
                if child.end > span.end:
                    raise SpanStructureError(
                        f"sync span {child.name!r} ends after its parent {span.name!r}")
                waits.append((child.start, child.end))
            stack.append(child)
        pure = max(span.duration - _union_length(waits), 0.0)
        out[span.name] = out.get(span.name, 0.0) + pure
    return out

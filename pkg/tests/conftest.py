from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from latpat.traces import TraceSet

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record an acceptance criterion outcome, then assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        _CRITERIA[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, f"criterion {number} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_traceset(rng: np.random.Generator, n: int = 200, m: int = 4,
                    levels: int | None = 6) -> TraceSet:
    """Random traces; ``levels`` quantises times so ties and lattice hits are common."""
    if levels:
        times = rng.integers(0, levels, size=(n, m)).astype(float) * 10.0
    else:
        times = rng.gamma(2.0, 20.0, size=(n, m))
    latency = times.sum(axis=1) + rng.uniform(0, 5, size=n)
    return TraceSet(tuple(f"rpc{j}" for j in range(m)), times, latency)

"""Synthetic load-test sessions with injected latency degradations.

A session draws baseline pure execution times for every RPC of a topology,
marks roughly 10% of requests with each of two degradations, adds the
degradation delays to the marked requests and records which degradation hit
which request. Request latency is the sum of the synchronous RPC times, so
delays on asynchronous RPCs never reach it.
"""
from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .traces import LatencyInterval, TraceSet

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

LABELS = ("A1", "A2")
EPSILON_MS = 1e-9


class ConfigError(ValueError):
    """Invalid session configuration."""


@dataclass(frozen=True)
class RpcSpec:
    name: str
    kind: str = "sync"
    median_ms: float = 40.0
    sigma: float = 0.25


DEFAULT_RPCS = (
    RpcSpec("gethome", "sync", 20.0),
    RpcSpec("getprofile", "sync", 20.0),
    RpcSpec("getrecommended", "sync", 20.0),
    RpcSpec("getcart", "sync", 20.0),
    RpcSpec("getcategory", "sync", 20.0),
    RpcSpec("getitems", "sync", 20.0),
    RpcSpec("findfeaturesitems", "async", 60.0),
    RpcSpec("finditems", "async", 80.0),
)


@dataclass(frozen=True)
class Topology:
    rpcs: tuple[RpcSpec, ...] = DEFAULT_RPCS

    def __post_init__(self):
        names = [r.name for r in self.rpcs]
        if len(set(names)) != len(names):
            raise ConfigError("RPC names must be unique")
        if not self.sync:
            raise ConfigError("topology needs at least one synchronous RPC")
        for r in self.rpcs:
            if r.kind not in ("sync", "async"):
                raise ConfigError(f"RPC {r.name!r}: unknown kind {r.kind!r}")

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.rpcs]

    @property
    def sync(self) -> list[int]:
        return [i for i, r in enumerate(self.rpcs) if r.kind == "sync"]

    @property
    def async_(self) -> list[int]:
        return [i for i, r in enumerate(self.rpcs) if r.kind == "async"]

    @classmethod
    def from_dict(cls, data: dict) -> "Topology":
        return cls(tuple(RpcSpec(**r) for r in data["rpcs"]))


@dataclass(frozen=True)
class Degradation:
    type: int
    targets: tuple[int, ...]
    delay_ms: float = 50.0

    def __post_init__(self):
        if len(self.targets) != self.type:
            raise ConfigError("a type-n degradation must target exactly n RPCs")
        if len(set(self.targets)) != len(self.targets):
            raise ConfigError("degradation targets must be distinct")


@dataclass(frozen=True)
class SessionConfig:
    topology: Topology = Topology()
    a1: Degradation | None = None
    a2: Degradation | None = None
    affect_probability: float = 0.1
    n_requests: int = 1000
    noise1: bool = False
    noise2: bool = False
    seed: int = 0
    delay_ms: float = 50.0
    noise1_delay_ms: float = 60.0
    noise2_delay_ms: float = 100.0

    def validate(self) -> None:
        if not 0 <= 2 * self.affect_probability <= 1:
            raise ConfigError("two degradations at affect_probability must not exceed 1")
        if self.n_requests < 1:
            raise ConfigError("n_requests must be >= 1")
        if self.noise2 and not self.topology.async_:
            raise ConfigError("noise2 needs at least one asynchronous RPC in the topology")
        if (self.a1 is None) != (self.a2 is None):
            raise ConfigError("give both degradations or neither")
        if self.a1 is not None:
            if self.a1.type == self.a2.type:
                raise ConfigError("A1 and A2 must have different types")
            sync = set(self.topology.sync)
            for d in (self.a1, self.a2):
                if not set(d.targets) <= sync:
                    raise ConfigError("degradations may only target synchronous RPCs")
        elif len(self.topology.sync) < 3:
            raise ConfigError("random degradations need at least 3 synchronous RPCs")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GroundTruth:
    labels: tuple[str | None, ...]
    degradations: dict[str, Degradation]
    noise1_targets: dict[str, int] = field(default_factory=dict)
    noise2_targets: dict[str, int] = field(default_factory=dict)

    def affected(self, label: str | None = None) -> list[int]:
        if label is None:
            return [i for i, lbl in enumerate(self.labels) if lbl is not None]
        return [i for i, lbl in enumerate(self.labels) if lbl == label]

    def to_dict(self, rpc_names: Sequence[str]) -> dict:
        return {
            "degradations": {
                name: {"type": d.type, "targets": [rpc_names[t] for t in d.targets],
                       "delay_ms": d.delay_ms}
                for name, d in self.degradations.items()
            },
            "noise1_targets": {k: rpc_names[v] for k, v in self.noise1_targets.items()},
            "noise2_targets": {k: rpc_names[v] for k, v in self.noise2_targets.items()},
            "counts": {name: len(self.affected(name)) for name in self.degradations},
        }

    @classmethod
    def from_labels(cls, labels: Sequence[str | None]) -> "GroundTruth":
        names = sorted({lbl for lbl in labels if lbl})
        return cls(tuple(labels), {name: None for name in names})


def random_degradation_pair(topology: Topology, rng: np.random.Generator,
                            delay_ms: float = 50.0) -> tuple[Degradation, Degradation]:
    """Two degradations of distinct types over random synchronous targets."""
    sync = topology.sync
    if len(sync) < 3:
        raise ConfigError("random degradations need at least 3 synchronous RPCs")
    t1, t2 = (int(t) for t in rng.choice([1, 2, 3], size=2, replace=False))
    pair = []
    for t in (t1, t2):
        targets = tuple(sorted(int(x) for x in rng.choice(sync, size=t, replace=False)))
        pair.append(Degradation(t, targets, delay_ms))
    return pair[0], pair[1]


def generate_session(cfg: SessionConfig, rng: np.random.Generator | None = None
                     ) -> tuple[TraceSet, GroundTruth]:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    topo = cfg.topology
    n, m = cfg.n_requests, len(topo.rpcs)

    if cfg.a1 is None:
        a1, a2 = random_degradation_pair(topo, rng, cfg.delay_ms)
    else:
        a1, a2 = cfg.a1, cfg.a2
    degradations = {"A1": a1, "A2": a2}
    # noise targets are drawn even when noise is off so that a normal and a
    # noised session with the same seed share everything else
    noise1_targets = {k: int(rng.choice(d.targets)) for k, d in degradations.items()}
    async_rpcs = topo.async_ or [topo.sync[0]]
    noise2_targets = {k: int(rng.choice(async_rpcs)) for k in degradations}

    medians = np.array([r.median_ms for r in topo.rpcs])
    sigmas = np.array([r.sigma for r in topo.rpcs])
    times = rng.lognormal(np.log(medians), sigmas, size=(n, m))
    mark = rng.random(n)
    coin1 = rng.random(n) < 0.5
    coin2 = rng.random(n) < 0.5

    p = cfg.affect_probability
    labels: list[str | None] = [None] * n
    for i in range(n):
        if mark[i] < p:
            name = "A1"
        elif mark[i] < 2 * p:
            name = "A2"
        else:
            continue
        labels[i] = name
        deg = degradations[name]
        for t in deg.targets:
            delay = deg.delay_ms
            if cfg.noise1 and t == noise1_targets[name] and coin1[i]:
                delay = cfg.noise1_delay_ms
            times[i, t] += delay
        if cfg.noise2 and coin2[i]:
            times[i, noise2_targets[name]] += cfg.noise2_delay_ms

    latency = times[:, topo.sync].sum(axis=1)
    ts = TraceSet(tuple(topo.names), times, latency, tuple(labels), "gethome_latency")
    gt = GroundTruth(
        tuple(labels), degradations,
        noise1_targets if cfg.noise1 else {},
        noise2_targets if cfg.noise2 else {},
    )
    return ts, gt


def target_interval(ts: TraceSet, labels: Sequence[str | None]) -> LatencyInterval:
    """``[min, max + eps)`` of the latencies of affected requests."""
    affected = [i for i, lbl in enumerate(labels) if lbl]
    if not affected:
        raise ValueError("no affected trace to derive the target interval from")
    lat = ts.latency[affected]
    return LatencyInterval(float(lat.min()), float(lat.max()) + EPSILON_MS)


def load_session_config(path) -> SessionConfig:
    """Read a session config from JSON or TOML (by file extension)."""
    path = str(path)
    try:
        if path.endswith(".toml"):
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        else:
            with open(path) as fh:
                data = json.load(fh)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return session_config_from_dict(data)


def session_config_from_dict(data: dict) -> SessionConfig:
    """Build a config from plain data; degradation targets may be RPC names."""
    data = dict(data)
    known = set(SessionConfig.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown session config keys: {', '.join(unknown)}")
    try:
        if "topology" in data:
            data["topology"] = Topology.from_dict(data["topology"])
        names = (data.get("topology") or Topology()).names
        for key in ("a1", "a2"):
            if data.get(key) is not None:
                d = data[key]
                targets = tuple(names.index(t) if isinstance(t, str) else int(t)
                                for t in d["targets"])
                data[key] = Degradation(int(d["type"]), targets, float(d.get("delay_ms", 50.0)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed session config: {exc}") from exc
    return replace(SessionConfig(), **data)

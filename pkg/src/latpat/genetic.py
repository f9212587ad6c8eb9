"""(mu + lambda) genetic search for the best pattern of one latency interval.

Individuals are patterns whose condition endpoints lie on the threshold
lattice, so every fitness evaluation is a handful of bitwise operations on a
:class:`~latpat.bitindex.BitIndex`.
"""
from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from itertools import compress
from typing import Mapping, Sequence

import numpy as np

from .bitindex import BitIndex, fitness, universal_score
from .patterns import Condition, Pattern, QualityScore

log = logging.getLogger(__name__)

Lattice = Mapping[int, Sequence[float]]


@dataclass(frozen=True)
class GaParams:
    mu: int = 100
    lam: int = 100
    generations: int = 400
    crossover_rate: float = 0.8
    mutation_rate: float = 0.2
    tournament_size: int = 20
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("mu", "lam", "tournament_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")

    @property
    def population(self) -> int:
        return self.mu


def rank_key(score: QualityScore, pattern: Pattern) -> tuple:
    """Sort key, best first: higher F-score, fewer conditions, then conditions."""
    return (-score.fscore, len(pattern), pattern.sort_key())


@dataclass(frozen=True)
class Individual:
    pattern: Pattern
    score: QualityScore
    key: tuple = field(repr=False, compare=False, default=())

    @classmethod
    def of(cls, pattern: Pattern, score: QualityScore) -> "Individual":
        return cls(pattern, score, rank_key(score, pattern))

    @property
    def fscore(self) -> float:
        return self.score.fscore


def _below(rng: random.Random, n: int) -> int:
    return int(rng.random() * n)


def random_condition(lattice: Lattice, rng: random.Random, rpc: int | None = None,
                     rpcs: Sequence[int] | None = None) -> Condition:
    """A condition between two distinct random lattice points of one RPC."""
    if rpc is None:
        rpcs = sorted(lattice) if rpcs is None else rpcs
        rpc = rpcs[_below(rng, len(rpcs))]
    points = lattice[rpc]
    a = _below(rng, len(points))
    b = _below(rng, len(points) - 1)
    b += b >= a
    lo, hi = (points[a], points[b]) if points[a] < points[b] else (points[b], points[a])
    return Condition(rpc, lo, hi)


def mutate_conditions(conds: tuple[Condition, ...], lattice: Lattice, rng: random.Random,
                      rpcs: Sequence[int] | None = None) -> tuple[Condition, ...]:
    """:func:`mutate` on a bare condition tuple."""
    action = _below(rng, 3)
    if action == 0:  # add
        cond = random_condition(lattice, rng, rpcs=rpcs)
        if any(c.rpc == cond.rpc for c in conds):
            return conds
        return (*conds, cond)
    if not conds:
        return conds
    pick = _below(rng, len(conds))
    if action == 1:  # remove
        return conds[:pick] + conds[pick + 1:]
    cond = conds[pick]  # modify
    keep = cond.e_max if rng.random() < 0.5 else cond.e_min
    others = [p for p in lattice[cond.rpc] if p != keep]
    new = others[_below(rng, len(others))]
    lo, hi = (keep, new) if keep < new else (new, keep)
    return conds[:pick] + (Condition(cond.rpc, lo, hi),) + conds[pick + 1:]


def mutate(pattern: Pattern, lattice: Lattice, rng: random.Random) -> Pattern:
    """Apply one uniformly chosen add, remove or modify action.

    Adding a condition on an RPC the pattern already constrains is a no-op,
    as is removing or modifying on the empty pattern. A modified condition
    keeps one endpoint, takes a different lattice point for the other and is
    reordered so that ``e_min < e_max``.
    """
    out = mutate_conditions(pattern.conditions, lattice, rng)
    return pattern if out is pattern.conditions else Pattern(out)


def crossover(p1: Pattern, p2: Pattern, rng: random.Random) -> tuple[Pattern, Pattern]:
    """Pool both condition multisets and deal each condition to a random child."""
    left, right = [], []
    for cond in (*p1.conditions, *p2.conditions):
        (left if rng.random() < 0.5 else right).append(cond)
    return Pattern(tuple(left)), Pattern(tuple(right))


def tournament_select(pop: Sequence[Individual], k: int, rng: random.Random) -> Individual:
    """Best of ``k`` individuals drawn uniformly with replacement."""
    if not pop:
        raise ValueError("tournament on an empty population")
    n = len(pop)
    return min((pop[rng.randrange(n)] for _ in range(k)), key=lambda ind: ind.key)


def _sorted_tournament(n: int, k: int, rng: random.Random) -> int:
    """Winning position of a size-``k`` tournament over a best-first sorted population.

    The winner is the smallest of ``k`` uniform positions, sampled directly:
    ``P(min >= m) = ((n - m) / n) ** k``.
    """
    u = 1.0 - rng.random()  # (0, 1]
    return min(max(n - math.ceil(n * u ** (1.0 / k)), 0), n - 1)


def sorted_tournament_batch(n: int, k: int, size: int, gen: np.random.Generator) -> list[int]:
    """``size`` independent draws of :func:`_sorted_tournament`."""
    u = 1.0 - gen.random(size)
    pos = n - np.ceil(n * u ** (1.0 / k))
    return np.clip(pos, 0, n - 1).astype(int).tolist()


def random_pattern(lattice: Lattice, rng: random.Random) -> Pattern:
    rpcs = sorted(lattice)
    size = 1 + _below(rng, min(3, len(rpcs)))
    return Pattern(tuple(random_condition(lattice, rng, rpc) for rpc in rng.sample(rpcs, size)))


@dataclass
class GaResult:
    pattern: Pattern
    score: QualityScore
    history: list[float]  # best F-score in the population after each generation
    universal: QualityScore
    evaluations: int


class _Evaluator:
    """Fitness by sorted condition tuple, cached across the run."""

    def __init__(self, idx: BitIndex):
        self.idx = idx
        self.cache: dict[tuple, QualityScore] = {}
        self._keys: dict[tuple, tuple] = {}

    def key(self, conds: tuple[Condition, ...]) -> tuple:
        key = self._keys.get(conds)
        if key is None:
            sk = tuple(sorted(conds))
            score = self.cache.get(sk)
            if score is None:
                score = fitness(self.idx, Pattern(sk))
                self.cache[sk] = score
            key = self._keys[conds] = (-score.fscore, len(conds), sk)
        return key


def evolve(idx: BitIndex, params: GaParams = GaParams()) -> GaResult:
    """Run the (mu + lambda) loop and return the best non-empty pattern seen."""
    lattice = {rpc: cuts for rpc, cuts in idx.thresholds.items() if len(cuts) >= 2}
    if not lattice:
        raise ValueError("threshold lattice is empty")
    rng = random.Random(params.seed)
    # per-generation draws (crossover/mutation coins, tournament winners,
    # crossover dealing) come in batches from a second stream
    batch = np.random.default_rng([params.seed, 1])
    evaluate = _Evaluator(idx)
    known = evaluate._keys.get

    # The loop works on (rank key, conditions) pairs; Individuals are only
    # built for the result.
    population = sorted((evaluate.key(p.conditions), p.conditions)
                        for p in (random_pattern(lattice, rng) for _ in range(params.mu)))
    best = population[0]
    history = []
    n, lam = len(population), params.lam
    rpcs = sorted(lattice)
    coins: list[bool] = []
    used = 0
    for gen in range(params.generations):
        do_cx = (batch.random(lam) < params.crossover_rate).tolist()
        do_mut = (batch.random(lam) < params.mutation_rate).tolist()
        winners = sorted_tournament_batch(n, params.tournament_size, 2 * lam, batch)
        offspring = []
        for o in range(lam):
            if do_cx[o]:
                pool = population[winners[2 * o]][1] + population[winners[2 * o + 1]][1]
                end = used + len(pool)
                if end > len(coins):
                    coins = (batch.random(max(64 * lam, len(pool))) < 0.5).tolist()
                    used, end = 0, len(pool)
                child = tuple(compress(pool, coins[used:end]))
                used = end
            else:
                child = population[winners[2 * o]][1]
            if do_mut[o]:
                child = mutate_conditions(child, lattice, rng, rpcs)
            key = known(child)
            offspring.append((key if key is not None else evaluate.key(child), child))
        population += offspring
        population.sort()  # by rank key; equal keys fall back to condition order
        del population[params.mu:]
        for ind in population:
            if ind[1]:
                if ind[0] < best[0] or not best[1]:
                    best = ind
                break
        history.append(-population[0][0][0])
        if params.log_every and (gen + 1) % params.log_every == 0:
            log.info("generation %d best fscore %.4f", gen + 1, history[-1])
    pattern = Pattern(best[1])
    return GaResult(pattern, evaluate.cache[best[0][2]], history, universal_score(idx),
                    len(evaluate.cache))


def solve_subproblem(idx: BitIndex, params: GaParams = GaParams()) -> tuple[Pattern, QualityScore]:
    result = evolve(idx, params)
    return result.pattern, result.score

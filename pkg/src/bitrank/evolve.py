"""Phase II: Pareto-ranking genetic search over layer configurations.

Standard NSGA-II machinery (fast non-dominated sort, crowding distance,
tournament selection, elitist environmental selection) specialized in two
ways: crossover treats each layer's (bit, rank) tuple as one atomic gene,
and mutation only steps to immediate neighbors in the sorted spaces so a
configuration never jumps across the landscape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .evaluators.base import MemoCache
from .profiling import repair_to_budget
from .space import EvalResult, ModelConfig, SearchSpace, memory_footprint


@dataclass
class Individual:
    config: ModelConfig
    result: EvalResult | None = None
    rank: int | None = None
    crowding: float | None = None

    @property
    def ok(self) -> bool:
        return self.result is not None and not self.result.failed


@dataclass(frozen=True)
class EvolveParams:
    population_size: int = 10
    generations: int = 5
    crossover_prob: float = 0.9
    mutation_prob_per_layer: float = 0.1
    # Spread used only when deriving the initial population from the seed; at
    # the in-generation rate most mutants would collapse back onto the seed.
    init_mutation_prob: float = 0.5
    proxy_steps: int = 3
    tournament_size: int = 2
    rng_seed: int = 0
    offspring_size: int | None = None
    mutation_op: str = "proximity"

    def __post_init__(self) -> None:
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        for name in ("crossover_prob", "mutation_prob_per_layer", "init_mutation_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")
        if self.offspring_size is not None and self.offspring_size < 1:
            raise ValueError("offspring_size must be >= 1")
        if self.mutation_op not in ("proximity", "resample"):
            raise ValueError("mutation_op must be 'proximity' or 'resample'")


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_performance: float
    front_size: int
    evaluations: int


@dataclass
class EvolveOutcome:
    population: list[Individual]
    front: list[Individual]
    archive: list[Individual]
    trace: list[GenerationRecord] = field(default_factory=list)


def non_dominated_sort(results: Sequence[EvalResult]) -> list[list[int]]:
    """Partition indices into successive Pareto fronts (front 0 first)."""
    n = len(results)
    if n == 0:
        return []
    perf = np.array([r.performance for r in results], dtype=float)
    mem = np.array([r.memory_bytes for r in results], dtype=float)
    if not np.all(np.isfinite(perf)):
        raise ValueError("non_dominated_sort requires finite performances")
    ge = perf[:, None] >= perf[None, :]
    le = mem[:, None] <= mem[None, :]
    strict = (perf[:, None] > perf[None, :]) | (mem[:, None] < mem[None, :])
    dom = ge & le & strict

    counts = dom.sum(axis=0)
    assigned = np.zeros(n, dtype=bool)
    fronts: list[list[int]] = []
    current = np.flatnonzero(counts == 0)
    while current.size:
        fronts.append([int(i) for i in current])
        assigned[current] = True
        counts = counts - dom[current].sum(axis=0)
        counts[assigned] = -1
        current = np.flatnonzero(counts == 0)
    return fronts


def crowding_distance(front: Sequence[EvalResult]) -> list[float]:
    """NSGA-II crowding: boundary points get +inf, interior points the summed
    normalized neighbor gaps over both objectives."""
    n = len(front)
    if n == 0:
        raise ValueError("front must be non-empty")
    dist = [0.0] * n
    for values in (
        [r.performance for r in front],
        [float(r.memory_bytes) for r in front],
    ):
        order = sorted(range(n), key=lambda i: values[i])
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        span = values[order[-1]] - values[order[0]]
        if span == 0:
            continue
        for k in range(1, n - 1):
            i = order[k]
            if not math.isinf(dist[i]):
                dist[i] += (values[order[k + 1]] - values[order[k - 1]]) / span
    return dist


def layerwise_crossover(
    a: ModelConfig, b: ModelConfig, prob: float, rng: np.random.Generator
) -> ModelConfig:
    """Uniform crossover over whole-layer genes; never splits a (bit, rank) pair."""
    if len(a) != len(b):
        raise ValueError(f"parent lengths differ: {len(a)} vs {len(b)}")
    if rng.random() >= prob:
        return a
    layers = tuple(
        a.layers[i] if rng.integers(0, 2) == 0 else b.layers[i] for i in range(len(a))
    )
    return ModelConfig(layers)


def _step_index(size: int, idx: int, rng: np.random.Generator) -> int:
    if size == 1:
        return idx
    if idx == 0:
        return 1
    if idx == size - 1:
        return size - 2
    return idx + (1 if rng.integers(0, 2) == 1 else -1)


def proximity_mutation(
    config: ModelConfig, space: SearchSpace, prob_per_layer: float, rng: np.random.Generator
) -> ModelConfig:
    """Per layer with the given probability: move bit and rank each one step
    in their sorted spaces; endpoints move inward."""
    layers = []
    for lc in config.layers:
        if rng.random() < prob_per_layer:
            bi = _step_index(len(space.bits), space.bit_index(lc.bit), rng)
            ri = _step_index(len(space.ranks), space.rank_index(lc.rank), rng)
            layers.append(space.layer(bi, ri))
        else:
            layers.append(lc)
    return ModelConfig(tuple(layers))


def resample_mutation(
    config: ModelConfig, space: SearchSpace, prob_per_layer: float, rng: np.random.Generator
) -> ModelConfig:
    """Ablation alternative: re-draw the whole (bit, rank) pair uniformly."""
    layers = []
    for lc in config.layers:
        if rng.random() < prob_per_layer:
            bi = int(rng.integers(0, len(space.bits)))
            ri = int(rng.integers(0, len(space.ranks)))
            layers.append(space.layer(bi, ri))
        else:
            layers.append(lc)
    return ModelConfig(tuple(layers))


MUTATION_OPS: dict[str, Callable[..., ModelConfig]] = {
    "proximity": proximity_mutation,
    "resample": resample_mutation,
}


def tournament_select(
    pop: Sequence[Individual], k: int, rng: np.random.Generator
) -> Individual:
    """Sample k distinct contestants; lowest rank wins, then larger crowding,
    then lower population index."""
    if not pop:
        raise ValueError("cannot select from an empty population")
    k = min(k, len(pop))
    picks = rng.choice(len(pop), size=k, replace=False)
    best = None
    for i in sorted(int(p) for p in picks):
        ind = pop[i]
        key = (ind.rank, -(ind.crowding if ind.crowding is not None else 0.0), i)
        if best is None or key < best[0]:
            best = (key, ind)
    return best[1]


def assign_fronts(population: Sequence[Individual]) -> list[list[Individual]]:
    """Rank and crowd the non-failed members in place; returns the fronts."""
    scored = [ind for ind in population if ind.ok]
    if not scored:
        return []
    fronts_idx = non_dominated_sort([ind.result for ind in scored])
    fronts: list[list[Individual]] = []
    for rank, front in enumerate(fronts_idx):
        members = [scored[i] for i in front]
        crowd = crowding_distance([ind.result for ind in members])
        for ind, c in zip(members, crowd):
            ind.rank = rank
            ind.crowding = c
        fronts.append(members)
    return fronts


def _environmental_selection(
    candidates: list[Individual], target: int
) -> list[Individual]:
    fronts = assign_fronts(candidates)
    selected: list[Individual] = []
    for front in fronts:
        if len(selected) + len(front) <= target:
            selected.extend(front)
            continue
        order = sorted(
            range(len(front)),
            key=lambda i: (-(front[i].crowding if front[i].crowding is not None else 0.0), i),
        )
        selected.extend(front[i] for i in order[: target - len(selected)])
        break
    return selected


class Archive:
    """Every evaluated configuration, in first-evaluation order."""

    def __init__(self) -> None:
        self.entries: list[Individual] = []
        self._by_config: dict[ModelConfig, Individual] = {}

    def record(self, config: ModelConfig, result: EvalResult) -> Individual:
        ind = self._by_config.get(config)
        if ind is None:
            ind = Individual(config=config, result=result)
            self._by_config[config] = ind
            self.entries.append(ind)
        return ind

    def __contains__(self, config: ModelConfig) -> bool:
        return config in self._by_config

    def best(self) -> Individual | None:
        candidates = [ind for ind in self.entries if ind.ok]
        if not candidates:
            return None
        return max(
            candidates,
            key=lambda ind: (ind.result.performance, -ind.result.memory_bytes),
        )


def evolve(
    seed: ModelConfig,
    params: EvolveParams,
    evaluator: MemoCache,
    budget_bytes: int,
    space: SearchSpace,
    priorities: Sequence[float] | None = None,
    rng: np.random.Generator | None = None,
    archive: Archive | None = None,
) -> EvolveOutcome:
    """Run the generational search and return population, front, and archive."""
    if rng is None:
        rng = np.random.default_rng(params.rng_seed)
    geom = evaluator.geometry
    mutate = MUTATION_OPS[params.mutation_op]
    offspring_size = params.offspring_size or params.population_size
    archive = archive if archive is not None else Archive()
    trace: list[GenerationRecord] = []

    def repaired(config: ModelConfig) -> ModelConfig:
        if memory_footprint(config, geom) <= budget_bytes:
            return config
        return repair_to_budget(config, geom, space, budget_bytes, priorities)

    def materialize(configs: list[ModelConfig]) -> list[Individual]:
        results = evaluator.evaluate_batch(configs, params.proxy_steps)
        out = []
        for config, result in zip(configs, results):
            archive.record(config, result)
            out.append(Individual(config=config, result=result))
        return out

    def record_trace(generation: int, front_size: int) -> None:
        best = archive.best()
        trace.append(
            GenerationRecord(
                generation=generation,
                best_performance=best.result.performance if best else math.nan,
                front_size=front_size,
                evaluations=evaluator.counters.evaluate_calls,
            )
        )

    seed = repaired(seed)
    initial = [seed] + [
        repaired(proximity_mutation(seed, space, params.init_mutation_prob, rng))
        for _ in range(params.population_size - 1)
    ]
    population = materialize(initial)
    fronts = assign_fronts(population)
    if not fronts:
        raise RuntimeError("every evaluation in the initial population failed")
    record_trace(0, len(fronts[0]))

    for generation in range(1, params.generations + 1):
        parents = [ind for ind in population if ind.ok]
        offspring_configs = []
        for _ in range(offspring_size):
            p1 = tournament_select(parents, params.tournament_size, rng)
            p2 = tournament_select(parents, params.tournament_size, rng)
            child = layerwise_crossover(p1.config, p2.config, params.crossover_prob, rng)
            child = mutate(child, space, params.mutation_prob_per_layer, rng)
            offspring_configs.append(repaired(child))
        offspring = materialize(offspring_configs)
        combined = parents + [ind for ind in offspring if ind.ok]
        population = _environmental_selection(combined, params.population_size)
        fronts = assign_fronts(population)
        record_trace(generation, len(fronts[0]) if fronts else 0)

    front = fronts[0] if fronts else []
    return EvolveOutcome(population=population, front=front, archive=archive.entries, trace=trace)

from __future__ import annotations

import math

import numpy as np
import pytest

from bitrank.evaluators.base import MemoCache
from bitrank.evaluators.synthetic import SyntheticEvaluator, SyntheticModel
from bitrank.evolve import (
    Archive,
    EvolveParams,
    Individual,
    crowding_distance,
    evolve,
    layerwise_crossover,
    non_dominated_sort,
    proximity_mutation,
    resample_mutation,
    tournament_select,
)
from bitrank.space import EvalResult, ModelConfig, SearchSpace, memory_footprint


def points(*pm: tuple[float, int]) -> list[EvalResult]:
    return [EvalResult(p, m) for p, m in pm]


def brute_force_fronts(results: list[EvalResult]) -> list[list[int]]:
    """Oracle: peel maximal sets off a dominance matrix built by definition."""
    n = len(results)
    dom = [[False] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            a, b = results[i], results[j]
            dom[i][j] = (
                a.performance >= b.performance
                and a.memory_bytes <= b.memory_bytes
                and (a.performance > b.performance or a.memory_bytes < b.memory_bytes)
            )
    remaining = set(range(n))
    fronts = []
    while remaining:
        front = sorted(
            i for i in remaining if not any(dom[j][i] for j in remaining if j != i)
        )
        fronts.append(front)
        remaining -= set(front)
    return fronts


class TestNonDominatedSort:
    def test_empty(self):
        assert non_dominated_sort([]) == []

    def test_single_point(self):
        assert non_dominated_sort(points((1.0, 5))) == [[0]]

    def test_dominated_pair(self):
        assert non_dominated_sort(points((1.0, 5), (0.5, 9))) == [[0], [1]]

    def test_hand_example(self):
        # first three mutually incomparable; (2,2) dominates (2,3)
        fronts = non_dominated_sort(points((1, 1), (2, 2), (3, 3), (2, 3)))
        assert fronts == [[0, 1, 2], [3]]

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            non_dominated_sort(points((math.nan, 1)))

    @pytest.mark.parametrize("trial", range(10))
    def test_matches_brute_force(self, trial):
        rng = np.random.default_rng(trial)
        n = int(rng.integers(2, 60))
        results = [
            EvalResult(float(rng.integers(0, 12)), int(rng.integers(0, 12)))
            for _ in range(n)
        ]
        fronts = non_dominated_sort(results)
        assert fronts == brute_force_fronts(results)
        assert sorted(i for f in fronts for i in f) == list(range(n))

    def test_later_front_never_dominates_earlier(self):
        rng = np.random.default_rng(99)
        results = [
            EvalResult(float(rng.integers(0, 8)), int(rng.integers(0, 8)))
            for _ in range(80)
        ]
        fronts = non_dominated_sort(results)
        from bitrank.space import dominates

        for k in range(1, len(fronts)):
            for i in fronts[k]:
                for j in fronts[k - 1]:
                    assert not dominates(results[i], results[j])


class TestCrowding:
    def test_singleton_and_pair_are_boundaries(self):
        assert crowding_distance(points((1, 1))) == [math.inf]
        assert crowding_distance(points((1, 1), (2, 2))) == [math.inf, math.inf]

    def test_three_collinear(self):
        dist = crowding_distance(points((1, 1), (2, 2), (3, 3)))
        assert dist[0] == math.inf and dist[2] == math.inf
        assert dist[1] == pytest.approx(2.0, abs=1e-12)

    def test_identical_objectives(self):
        dist = crowding_distance(points((2, 5), (2, 5), (2, 5), (2, 5)))
        assert dist[0] == math.inf and dist[-1] == math.inf
        assert dist[1] == 0.0 and dist[2] == 0.0

    def test_empty_front_rejected(self):
        with pytest.raises(ValueError):
            crowding_distance([])

    def test_four_point_hand_trace(self):
        # perf over range 3, memory over range 7
        dist = crowding_distance(points((1, 1), (2, 2), (3, 4), (4, 8)))
        assert dist[1] == pytest.approx(2 / 3 + 3 / 7, abs=1e-12)
        assert dist[2] == pytest.approx(2 / 3 + 6 / 7, abs=1e-12)


class TestCrossover:
    space = SearchSpace()

    def test_identical_parents(self):
        rng = np.random.default_rng(0)
        a = self.space.uniform(4, 4, 8)
        for _ in range(20):
            assert layerwise_crossover(a, a, 1.0, rng) == a

    def test_prob_zero_returns_first_parent(self):
        rng = np.random.default_rng(0)
        a = self.space.uniform(3, 2, 2)
        b = self.space.uniform(3, 8, 16)
        for _ in range(20):
            assert layerwise_crossover(a, b, 0.0, rng) == a

    def test_atomic_genes(self):
        rng = np.random.default_rng(1)
        a = self.space.uniform(5, 2, 2)
        b = self.space.uniform(5, 8, 16)
        allowed = {a.layers[0], b.layers[0]}
        for _ in range(500):
            child = layerwise_crossover(a, b, 1.0, rng)
            assert all(lc in allowed for lc in child.layers)

    def test_length_mismatch(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            layerwise_crossover(self.space.uniform(2, 2, 2), self.space.uniform(3, 2, 2), 1.0, rng)


class TestMutation:
    space = SearchSpace()

    def test_prob_zero_is_identity(self):
        rng = np.random.default_rng(0)
        c = self.space.uniform(6, 4, 8)
        assert proximity_mutation(c, self.space, 0.0, rng) == c

    def test_endpoints_move_inward(self):
        rng = np.random.default_rng(0)
        c = self.space.uniform(1, 2, 2)
        for _ in range(50):
            mutated = proximity_mutation(c, self.space, 1.0, rng)
            assert mutated.layers[0].bit == 4
            assert mutated.layers[0].rank == 4

    def test_interior_neighbors_only(self):
        rng = np.random.default_rng(2)
        c = self.space.uniform(1, 4, 8)
        seen_bits, seen_ranks = set(), set()
        for _ in range(300):
            m = proximity_mutation(c, self.space, 1.0, rng)
            seen_bits.add(m.layers[0].bit)
            seen_ranks.add(m.layers[0].rank)
        assert seen_bits == {2, 8}
        assert seen_ranks == {6, 10}

    def test_never_more_than_one_index_step(self):
        rng = np.random.default_rng(3)
        c = ModelConfig.from_pairs([(2, 16), (8, 2), (4, 10)])
        for _ in range(300):
            m = proximity_mutation(c, self.space, 0.7, rng)
            for before, after in zip(c.layers, m.layers):
                db = abs(self.space.bit_index(after.bit) - self.space.bit_index(before.bit))
                dr = abs(self.space.rank_index(after.rank) - self.space.rank_index(before.rank))
                assert db <= 1 and dr <= 1

    def test_resample_stays_in_space(self):
        rng = np.random.default_rng(4)
        c = self.space.uniform(4, 4, 8)
        for _ in range(100):
            m = resample_mutation(c, self.space, 0.5, rng)
            self.space.validate_config(m)


class TestTournament:
    def _pop(self):
        space = SearchSpace()
        pop = []
        for i, (rank, crowd) in enumerate([(0, math.inf), (0, 1.0), (1, math.inf), (2, 0.5)]):
            ind = Individual(config=space.uniform(2, 4, 8), result=EvalResult(1.0 - 0.1 * i, 100 + i))
            ind.rank, ind.crowding = rank, crowd
            pop.append(ind)
        return pop

    def test_full_tournament_returns_overall_best(self):
        pop = self._pop()
        rng = np.random.default_rng(0)
        winner = tournament_select(pop, len(pop), rng)
        assert winner is pop[0]

    def test_lower_rank_wins(self):
        pop = self._pop()[1:3]
        rng = np.random.default_rng(0)
        assert tournament_select(pop, 2, rng) is pop[0]

    def test_crowding_breaks_rank_ties(self):
        pop = self._pop()[:2]
        rng = np.random.default_rng(0)
        assert tournament_select(pop, 2, rng) is pop[0]

    def test_empty_population(self):
        with pytest.raises(ValueError):
            tournament_select([], 2, np.random.default_rng(0))


class TestEvolve:
    def _setup(self, **model_kw):
        model = SyntheticModel(**model_kw)
        memo = MemoCache(SyntheticEvaluator(model), model.geometry)
        space = model.space
        budget = memory_footprint(space.uniform(model.n_layers, 4, 8), model.geometry)
        return model, memo, space, budget

    def test_zero_generations_returns_initial_population(self):
        model, memo, space, budget = self._setup()
        seed = space.min_config(model.n_layers)
        params = EvolveParams(generations=0, rng_seed=0)
        out = evolve(seed, params, memo, budget, space)
        assert {ind.config for ind in out.archive} == {
            ind.config for ind in out.population
        }
        assert len(out.population) == params.population_size
        front_configs = {ind.config for ind in out.front}
        assert front_configs <= {ind.config for ind in out.population}

    def test_best_so_far_non_decreasing(self):
        model, memo, space, budget = self._setup()
        seed = space.min_config(model.n_layers)
        out = evolve(seed, EvolveParams(rng_seed=1), memo, budget, space)
        best = [rec.best_performance for rec in out.trace]
        assert best == sorted(best)

    def test_front_respects_budget(self):
        model, memo, space, budget = self._setup()
        seed = space.uniform(model.n_layers, 8, 16)  # infeasible, must be repaired
        out = evolve(seed, EvolveParams(rng_seed=2), memo, budget, space)
        for ind in out.archive:
            assert memory_footprint(ind.config, model.geometry) <= budget

    def test_deterministic_given_seed(self):
        runs = []
        for _ in range(2):
            model, memo, space, budget = self._setup()
            seed = space.min_config(model.n_layers)
            out = evolve(
                seed, EvolveParams(rng_seed=7), memo, budget, space,
                rng=np.random.default_rng(7),
            )
            runs.append([ind.config for ind in out.archive])
        assert runs[0] == runs[1]

    def test_elitism_keeps_best(self):
        model, memo, space, budget = self._setup()
        seed = space.min_config(model.n_layers)
        out = evolve(seed, EvolveParams(rng_seed=3), memo, budget, space)
        best_overall = max(
            (ind for ind in out.archive if ind.ok), key=lambda i: i.result.performance
        )
        pop_best = max(
            (ind for ind in out.population if ind.ok), key=lambda i: i.result.performance
        )
        assert pop_best.result.performance == best_overall.result.performance

    def test_archive_shared_across_calls(self):
        model, memo, space, budget = self._setup()
        archive = Archive()
        seed = space.min_config(model.n_layers)
        evolve(seed, EvolveParams(rng_seed=0, generations=1), memo, budget, space, archive=archive)
        n = len(archive.entries)
        assert n > 0
        evolve(seed, EvolveParams(rng_seed=1, generations=1), memo, budget, space, archive=archive)
        assert len(archive.entries) >= n

from __future__ import annotations

import sys
from pathlib import Path

import pytest

from bitrank.evaluators.base import EvaluatorError, MemoCache
from bitrank.evaluators.external import (
    EvaluatorUnavailable,
    ExternalEvaluator,
    ProtocolError,
)
from bitrank.space import SearchSpace

STUB = Path(__file__).parent / "stub_evaluator.py"


def stub_command(mode: str = "ok") -> list[str]:
    return [sys.executable, str(STUB), "--mode", mode]


@pytest.fixture
def host():
    ev = ExternalEvaluator(stub_command(), timeout=10)
    yield ev
    ev.close()


class TestHandshake:
    def test_meta(self, host):
        meta = host.meta()
        assert meta.layers == 3
        assert meta.calib_size == 4
        assert len(meta.geometry) == 3
        assert meta.geometry.layers[0].frozen_params == 64

    def test_meta_cached(self, host):
        assert host.meta() is host.meta()


class TestEvaluate:
    def test_returns_finite_performance(self, host):
        config = SearchSpace().uniform(3, 4, 8)
        perf = host.evaluate(config, proxy_steps=5)
        assert isinstance(perf, float)
        assert perf == pytest.approx(4 / 8 + 8 / 16)

    def test_bad_config_length_fails_the_individual(self, host):
        memo = MemoCache(host, host.meta().geometry)
        wrong = SearchSpace().uniform(2, 4, 8)
        # direct call raises; through the cache it becomes a failed result
        with pytest.raises(EvaluatorError):
            host.evaluate(wrong, 5)

    def test_failed_result_via_cache(self, host):
        meta = host.meta()
        memo = MemoCache(host, meta.geometry)
        result = memo.evaluate(SearchSpace().uniform(3, 4, 8), 5)
        assert not result.failed
        assert memo.counters.failures == 0


class TestDistribution:
    def test_baseline_and_perturbed(self, host):
        base = host.distribution(0)
        assert sum(base) == pytest.approx(1.0, abs=1e-9)
        pert = host.distribution(0, perturbed_layer=1, perturb_bit=2)
        assert pert != base

    def test_out_of_range_propagates(self, host):
        with pytest.raises(EvaluatorError):
            host.distribution(99)


class TestFailureModes:
    def test_error_response(self):
        with ExternalEvaluator(stub_command("error"), timeout=10) as ev:
            with pytest.raises(EvaluatorError, match="deliberate"):
                ev.meta()

    def test_malformed_response(self):
        with ExternalEvaluator(stub_command("malformed"), timeout=10) as ev:
            with pytest.raises(ProtocolError):
                ev.meta()

    def test_wrong_id(self):
        with ExternalEvaluator(stub_command("wrong-id"), timeout=10) as ev:
            with pytest.raises(ProtocolError):
                ev.meta()

    def test_timeout_becomes_evaluator_error(self):
        with ExternalEvaluator(stub_command("slow"), timeout=0.5) as ev:
            with pytest.raises(EvaluatorError):
                ev.evaluate(SearchSpace().uniform(3, 4, 8), 1)

    def test_child_exit_exhausts_connections(self):
        with ExternalEvaluator(stub_command("exit"), timeout=5) as ev:
            with pytest.raises((ProtocolError, EvaluatorUnavailable)):
                ev.meta()
            with pytest.raises(EvaluatorUnavailable):
                ev.meta()


class TestSearchAgainstStub:
    def _spec(self, **kw):
        from bitrank.evolve import EvolveParams
        from bitrank.pipeline import RunSpec

        base = dict(
            evaluator_cmd=" ".join(stub_command()),
            evolve=EvolveParams(population_size=6, generations=2, rng_seed=0),
            bo_iters_per_config=1,
            budget_avg_bits=4.0,
            seed=0,
        )
        base.update(kw)
        return RunSpec(**base)

    def test_two_generation_search_completes(self):
        from bitrank.pipeline import run

        report = run(self._spec())
        assert report.status == "ok"
        assert report.best is not None
        assert report.counters.failures == 0

    def test_parallel_pool_matches_serial_result(self):
        from bitrank.pipeline import run

        serial = run(self._spec())
        parallel = run(self._spec(deterministic=False, parallel=3))
        assert parallel.status == "ok"
        assert parallel.best.config == serial.best.config
        assert parallel.best.result.performance == serial.best.result.performance

"""Evaluation contract between the search engine and the model under study."""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from ..space import EvalResult, ModelConfig, ModelGeometry, memory_footprint


class EvaluatorError(RuntimeError):
    """An evaluation request could not produce a usable answer."""


@dataclass(frozen=True)
class EvaluatorMeta:
    layers: int
    calib_size: int
    geometry: ModelGeometry


@runtime_checkable
class Evaluator(Protocol):
    """Deterministic scorer for configurations plus calibration distributions.

    `evaluate` must return a higher-is-better scalar; loss-like metrics are
    negated on the evaluator side. `distribution` returns a probability
    vector for one calibration input, optionally with a single layer's
    weights degraded to `perturb_bit`.
    """

    def meta(self) -> EvaluatorMeta: ...

    def evaluate(self, config: ModelConfig, proxy_steps: int) -> float: ...

    def distribution(
        self,
        calib_index: int,
        perturbed_layer: int | None = None,
        perturb_bit: int | None = None,
    ) -> list[float]: ...


@dataclass
class EvalCounters:
    evaluate_calls: int = 0
    total_proxy_steps: int = 0
    failures: int = 0
    distribution_calls: int = 0


class MemoCache:
    """Caching, counting front-end shared by all phases of a run.

    Repeat requests for an already-scored configuration are free: evaluate is
    deterministic given (config, proxy_steps), so the first answer stands.
    """

    def __init__(self, evaluator: Evaluator, geometry: ModelGeometry, workers: int = 1):
        self._evaluator = evaluator
        self._geometry = geometry
        self._workers = max(1, workers)
        self._cache: dict[tuple[ModelConfig, int], EvalResult] = {}
        self._lock = threading.Lock()
        self.counters = EvalCounters()

    @property
    def geometry(self) -> ModelGeometry:
        return self._geometry

    def meta(self) -> EvaluatorMeta:
        return self._evaluator.meta()

    def distribution(
        self,
        calib_index: int,
        perturbed_layer: int | None = None,
        perturb_bit: int | None = None,
    ) -> list[float]:
        self.counters.distribution_calls += 1
        return self._evaluator.distribution(calib_index, perturbed_layer, perturb_bit)

    def _evaluate_uncached(self, config: ModelConfig, proxy_steps: int) -> EvalResult:
        memory = memory_footprint(config, self._geometry)
        try:
            performance = float(self._evaluator.evaluate(config, proxy_steps))
        except EvaluatorError:
            return EvalResult(performance=math.nan, memory_bytes=memory, failed=True)
        if not math.isfinite(performance):
            return EvalResult(performance=math.nan, memory_bytes=memory, failed=True)
        return EvalResult(performance=performance, memory_bytes=memory)

    def evaluate(self, config: ModelConfig, proxy_steps: int) -> EvalResult:
        key = (config, proxy_steps)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        result = self._evaluate_uncached(config, proxy_steps)
        with self._lock:
            self._cache[key] = result
            self.counters.evaluate_calls += 1
            self.counters.total_proxy_steps += proxy_steps
            if result.failed:
                self.counters.failures += 1
        return result

    def evaluate_batch(self, configs: Sequence[ModelConfig], proxy_steps: int) -> list[EvalResult]:
        """Score a batch, deduplicated; results line up with the input order."""
        pending: list[ModelConfig] = []
        seen: set[tuple[ModelConfig, int]] = set()
        for config in configs:
            key = (config, proxy_steps)
            if key in seen or key in self._cache:
                continue
            seen.add(key)
            pending.append(config)
        if self._workers > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=self._workers) as pool:
                list(pool.map(lambda c: self.evaluate(c, proxy_steps), pending))
        else:
            for config in pending:
                self.evaluate(config, proxy_steps)
        return [self.evaluate(config, proxy_steps) for config in configs]

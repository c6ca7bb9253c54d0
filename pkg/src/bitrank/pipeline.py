"""End-to-end orchestration of the three search phases plus reporting data.

Phase I profiles layer sensitivity and proposes a seed; Phase II runs the
Pareto-ranking genetic search; Phase III refines the front with the GP
surrogate. Any phase can be skipped for ablation. Everything evaluated goes
through one memoizing cache so repeat configurations are free and the
reported call counts are honest.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .bayes import RefineRecord, refine
from .evaluators.base import EvalCounters, Evaluator, MemoCache
from .evaluators.external import ExternalEvaluator
from .evaluators.synthetic import SyntheticEvaluator, SyntheticModel
from .evolve import (
    Archive,
    EvolveParams,
    Individual,
    non_dominated_sort,
    evolve,
)
from .profiling import (
    SensitivityProfile,
    repair_to_budget,
    seed_configuration,
    sensitivity_profile,
)
from .space import (
    ModelConfig,
    ModelGeometry,
    SearchSpace,
    average_bit,
    average_rank,
    mean_rank,
    memory_footprint,
)

SEED_ENV_VAR = "QR_SEED"


class InfeasibleBudgetError(ValueError):
    """The budget is below the cheapest admissible configuration."""


PRESETS: dict[str, EvolveParams] = {
    "appendix": EvolveParams(population_size=10, generations=5),
    "main-text": EvolveParams(population_size=5, generations=5, offspring_size=1),
}


@dataclass(frozen=True)
class RunSpec:
    space: SearchSpace = field(default_factory=SearchSpace)
    budget_bytes: int | None = None
    budget_avg_bits: float | None = None
    evolve: EvolveParams = field(default_factory=lambda: PRESETS["appendix"])
    bo_iters_per_config: int = 5
    synthetic: Mapping[str, Any] | None = None
    evaluator_cmd: str | None = None
    evaluator_timeout: float = 600.0
    geometry_path: str | None = None
    calib_size: int | None = None
    skip_phase1: bool = False
    skip_phase2: bool = False
    skip_phase3: bool = False
    seed: int = 0
    deterministic: bool = True
    parallel: int = 1
    out_dir: str | None = None
    uniform_baseline: bool = True

    def __post_init__(self) -> None:
        if self.skip_phase1 and self.skip_phase2 and self.skip_phase3:
            raise ValueError("at least one phase must be enabled")
        if self.budget_bytes is None and self.budget_avg_bits is None:
            object.__setattr__(self, "budget_avg_bits", 4.0)
        if self.parallel < 1:
            raise ValueError("parallel must be >= 1")


@dataclass(frozen=True)
class TraceRow:
    phase: str
    step: int
    best_perf: float
    evals: int


@dataclass
class RunReport:
    space: SearchSpace
    budget_bytes: int
    seed: int
    layers: int
    phases: dict[str, bool]
    profile: SensitivityProfile | None
    trace: list[TraceRow]
    bo_rounds: list[RefineRecord]
    pareto: list[Individual]
    best: Individual | None
    geometry: ModelGeometry
    counters: EvalCounters
    baseline_evaluations: int
    baseline_uniform: dict[str, Any] | None
    pearson_bits_sensitivity: float | None
    pearson_note: str | None
    status: str  # "ok" | "partial" | "failed"

    def best_summary(self) -> dict[str, Any] | None:
        if self.best is None or self.best.result is None:
            return None
        cfg = self.best.config
        return {
            "performance": self.best.result.performance,
            "memory_bytes": self.best.result.memory_bytes,
            "avg_bit": average_bit(cfg, self.geometry),
            "avg_rank": average_rank(cfg, self.geometry),
            "avg_rank_unweighted": mean_rank(cfg),
            "config": cfg.to_wire(),
        }


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ValueError("need at least two points")
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt(np.sum(dx**2)))
    sy = float(np.sqrt(np.sum(dy**2)))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation undefined: zero variance")
    return float(np.sum(dx * dy) / (sx * sy))


def budget_from_avg_bits(avg_bits: float, geom: ModelGeometry, space: SearchSpace) -> int:
    """Convert a target average bit-width to bytes, pricing every adapter at
    the space's median rank."""
    if avg_bits <= 0:
        raise ValueError("budget_avg_bits must be positive")
    rank = space.median_rank
    total = 0
    for lg in geom.layers:
        frozen = math.ceil(lg.frozen_params * avg_bits / 8)
        adapters = geom.adapter_bytes_per_param * sum(
            rank * (din + dout) for din, dout in zip(lg.adapter_in_dims, lg.adapter_out_dims)
        )
        total += frozen + adapters + lg.fixed_overhead_bytes
    return total


def uniform_median_config(space: SearchSpace, n_layers: int) -> ModelConfig:
    return space.uniform(n_layers, space.median_bit, space.median_rank)


def make_evaluator(spec: RunSpec) -> Evaluator:
    if spec.evaluator_cmd:
        return ExternalEvaluator(
            spec.evaluator_cmd,
            connections=1 if spec.deterministic else spec.parallel,
            timeout=spec.evaluator_timeout,
        )
    params = dict(spec.synthetic or {})
    params.setdefault("space", spec.space)
    return SyntheticEvaluator(SyntheticModel(**params))


def uniform_sweep(
    memo: MemoCache, space: SearchSpace, n_layers: int, budget: int, proxy_steps: int
) -> dict[str, Any] | None:
    """Exhaustively score every feasible uniform (bit, rank) configuration."""
    best: dict[str, Any] | None = None
    for bit in space.bits:
        for rank in space.ranks:
            config = space.uniform(n_layers, bit, rank)
            if memory_footprint(config, memo.geometry) > budget:
                continue
            result = memo.evaluate(config, proxy_steps)
            if result.failed:
                continue
            if best is None or result.performance > best["performance"]:
                best = {
                    "bit": bit,
                    "rank": rank,
                    "performance": result.performance,
                    "memory_bytes": result.memory_bytes,
                }
    return best


def run(spec: RunSpec, evaluator: Evaluator | None = None) -> RunReport:
    """Execute the enabled phases and assemble the report."""
    owns_evaluator = evaluator is None
    if evaluator is None:
        evaluator = make_evaluator(spec)
    try:
        return _run(spec, evaluator)
    finally:
        if owns_evaluator and hasattr(evaluator, "close"):
            evaluator.close()


def _run(spec: RunSpec, evaluator: Evaluator) -> RunReport:
    space = spec.space
    meta = evaluator.meta()
    geometry = (
        ModelGeometry.load(spec.geometry_path) if spec.geometry_path else meta.geometry
    )
    if len(geometry) != meta.layers:
        raise ValueError(
            f"geometry describes {len(geometry)} layers, evaluator reports {meta.layers}"
        )
    n_layers = meta.layers
    workers = 1 if spec.deterministic else spec.parallel
    memo = MemoCache(evaluator, geometry, workers=workers)

    budget = (
        spec.budget_bytes
        if spec.budget_bytes is not None
        else budget_from_avg_bits(spec.budget_avg_bits, geometry, space)
    )
    min_footprint = memory_footprint(space.min_config(n_layers), geometry)
    if budget < min_footprint:
        raise InfeasibleBudgetError(
            f"budget {budget} B is below the minimal footprint {min_footprint} B"
        )

    rng = np.random.default_rng(spec.seed)
    evolve_params = replace(spec.evolve, rng_seed=spec.seed)
    proxy_steps = evolve_params.proxy_steps
    archive = Archive()
    trace: list[TraceRow] = []

    # Phase I: sensitivity profile and seed.
    profile: SensitivityProfile | None = None
    priorities: Sequence[float] | None = None
    if not spec.skip_phase1:
        calib = spec.calib_size if spec.calib_size is not None else meta.calib_size
        profile = sensitivity_profile(memo, space, calib)
        seed_config = seed_configuration(profile, space)
        priorities = profile.normalized
    else:
        seed_config = uniform_median_config(space, n_layers)
    if memory_footprint(seed_config, geometry) > budget:
        seed_config = repair_to_budget(seed_config, geometry, space, budget, priorities)
    seed_result = memo.evaluate(seed_config, proxy_steps)
    seed_individual = archive.record(seed_config, seed_result)
    if not spec.skip_phase1:
        best_now = archive.best()
        trace.append(
            TraceRow(
                phase="phase1",
                step=0,
                best_perf=best_now.result.performance if best_now else math.nan,
                evals=memo.counters.evaluate_calls,
            )
        )

    # Phase II: evolutionary exploration.
    if not spec.skip_phase2:
        outcome = evolve(
            seed_config,
            evolve_params,
            memo,
            budget,
            space,
            priorities=priorities,
            rng=rng,
            archive=archive,
        )
        front = outcome.front
        trace.extend(
            TraceRow("phase2", rec.generation, rec.best_performance, rec.evaluations)
            for rec in outcome.trace
        )
    else:
        if not seed_individual.ok:
            raise RuntimeError("seed evaluation failed and the genetic phase is disabled")
        front = [seed_individual]

    # Phase III: Bayesian refinement.
    bo_rounds: list[RefineRecord] = []
    if not spec.skip_phase3 and front:
        evals_before = memo.counters.evaluate_calls
        prior = [ind.result.performance for ind in archive.entries if ind.ok]
        best_so_far = max(prior) if prior else -math.inf
        outcome3 = refine(
            front,
            archive,
            spec.bo_iters_per_config,
            memo,
            budget,
            space,
            proxy_steps,
            rng,
        )
        bo_rounds = outcome3.rounds
        # Each refinement round evaluates a previously unseen config, so the
        # cumulative call count advances by one per recorded round.
        for i, rec in enumerate(bo_rounds):
            if not rec.failed:
                best_so_far = max(best_so_far, rec.performance)
            trace.append(
                TraceRow(
                    phase="phase3",
                    step=i,
                    best_perf=best_so_far if math.isfinite(best_so_far) else math.nan,
                    evals=evals_before + i + 1,
                )
            )

    best = archive.best()
    search_evals = memo.counters.evaluate_calls

    baseline = None
    if spec.uniform_baseline:
        baseline = uniform_sweep(memo, space, n_layers, budget, proxy_steps)
    baseline_evals = memo.counters.evaluate_calls - search_evals

    ok_entries = [ind for ind in archive.entries if ind.ok]
    pareto: list[Individual] = []
    if ok_entries:
        fronts = non_dominated_sort([ind.result for ind in ok_entries])
        pareto = [ok_entries[i] for i in fronts[0]]

    pearson_r: float | None = None
    pearson_note: str | None = None
    if profile is None:
        pearson_note = "sensitivity profiling disabled"
    elif best is None:
        pearson_note = "no successful evaluation"
    else:
        try:
            pearson_r = pearson([float(b) for b in best.config.bits], profile.scores)
        except ValueError as exc:
            pearson_note = str(exc)

    if best is None:
        status = "failed"
    elif memo.counters.failures > 0:
        status = "partial"
    else:
        status = "ok"

    counters = EvalCounters(
        evaluate_calls=search_evals,
        total_proxy_steps=memo.counters.total_proxy_steps,
        failures=memo.counters.failures,
        distribution_calls=memo.counters.distribution_calls,
    )
    return RunReport(
        space=space,
        budget_bytes=budget,
        seed=spec.seed,
        layers=n_layers,
        phases={
            "phase1": not spec.skip_phase1,
            "phase2": not spec.skip_phase2,
            "phase3": not spec.skip_phase3,
        },
        profile=profile,
        trace=trace,
        bo_rounds=bo_rounds,
        pareto=pareto,
        best=best,
        geometry=geometry,
        counters=counters,
        baseline_evaluations=baseline_evals,
        baseline_uniform=baseline,
        pearson_bits_sensitivity=pearson_r,
        pearson_note=pearson_note,
        status=status,
    )


def build_runspec(
    file_values: Mapping[str, Any] | None = None,
    overrides: Mapping[str, Any] | None = None,
    env: Mapping[str, str] | None = None,
) -> RunSpec:
    """Merge a JSON document with flag overrides into a RunSpec.

    Keys mirror the CLI flag names. Flags beat file values; the QR_SEED
    environment variable beats both for the seed.
    """
    merged: dict[str, Any] = {}
    for source in (file_values or {}, overrides or {}):
        merged.update({k: v for k, v in source.items() if v is not None})

    space = SearchSpace(
        bits=tuple(merged.get("space_bits", SearchSpace().bits)),
        ranks=tuple(merged.get("space_ranks", SearchSpace().ranks)),
    )
    params = PRESETS[merged.get("preset", "appendix")]
    if "pop" in merged:
        params = replace(params, population_size=int(merged["pop"]))
    if "gens" in merged:
        params = replace(params, generations=int(merged["gens"]))
    if "proxy_steps" in merged:
        params = replace(params, proxy_steps=int(merged["proxy_steps"]))
    if "mutation_op" in merged:
        params = replace(params, mutation_op=str(merged["mutation_op"]))

    seed = int(merged.get("seed", 0))
    env = os.environ if env is None else env
    if SEED_ENV_VAR in env:
        seed = int(env[SEED_ENV_VAR])

    synthetic = merged.get("synthetic")
    if synthetic in (True, False, None):
        synthetic = {} if merged.get("evaluator_cmd") is None else None

    return RunSpec(
        space=space,
        budget_bytes=merged.get("budget_bytes"),
        budget_avg_bits=merged.get("budget_avg_bits"),
        evolve=params,
        bo_iters_per_config=int(merged.get("bo_iters", 5)),
        synthetic=synthetic,
        evaluator_cmd=merged.get("evaluator_cmd"),
        evaluator_timeout=float(merged.get("timeout", 600.0)),
        geometry_path=merged.get("geometry"),
        calib_size=merged.get("calib_size"),
        skip_phase1=bool(merged.get("skip_phase1", False)),
        skip_phase2=bool(merged.get("skip_phase2", False)),
        skip_phase3=bool(merged.get("skip_phase3", False)),
        seed=seed,
        deterministic=bool(merged.get("deterministic", True)),
        parallel=int(merged.get("parallel", 1)),
        out_dir=merged.get("out"),
        uniform_baseline=bool(merged.get("uniform_baseline", True)),
    )

"""Phase III: Gaussian-process refinement around the evolved Pareto front.

A Matérn-5/2 kernel with per-dimension lengthscales models performance over
a continuous embedding of the discrete configurations. Each refinement round
scores a pool of nearby candidates by Expected Improvement, evaluates the
winner, and refits. Targets are standardized internally; lengthscales come
from the median heuristic (training sets here are far too small for stable
marginal-likelihood maximization).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm

from .evaluators.base import MemoCache
from .evolve import Archive, Individual, layerwise_crossover
from .space import LayerConfig, ModelConfig, SearchSpace, memory_footprint

logger = logging.getLogger(__name__)

# Small enough that jitter * |alpha| stays under the interpolation tolerance;
# escalated multiplicatively when the factorization fails.
BASE_JITTER = 1e-8
MAX_JITTER = 1e-2
LENGTHSCALE_FLOOR = 1e-3
POOL_CAP = 512


def encode_config(config: ModelConfig, space: SearchSpace) -> np.ndarray:
    """Embed a configuration as 2L features in (0, 1]: log-scaled bit and
    linearly scaled rank per layer."""
    max_bit = space.bits[-1]
    max_rank = space.ranks[-1]
    if max_bit < 2:
        raise ValueError("bit encoding requires a maximum bit-width of at least 2")
    feats = np.empty(2 * len(config))
    for i, lc in enumerate(config.layers):
        feats[2 * i] = math.log2(lc.bit) / math.log2(max_bit)
        feats[2 * i + 1] = lc.rank / max_rank
    return feats


def matern52(
    x: np.ndarray, z: np.ndarray, lengthscales: np.ndarray, signal_variance: float
) -> float:
    """Matérn-5/2 covariance with per-dimension (ARD) lengthscales."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    ls = np.asarray(lengthscales, dtype=float)
    if x.shape != z.shape or x.shape != ls.shape:
        raise ValueError("encoding and lengthscale dimensions must match")
    if signal_variance <= 0 or np.any(ls <= 0):
        raise ValueError("kernel hyperparameters must be positive")
    d = math.sqrt(float(np.sum(((x - z) / ls) ** 2)))
    s5d = math.sqrt(5.0) * d
    return signal_variance * (1.0 + s5d + 5.0 * d * d / 3.0) * math.exp(-s5d)


def _gram(X: np.ndarray, ls: np.ndarray, sv: float) -> np.ndarray:
    scaled = X / ls
    sq = np.sum(scaled**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * scaled @ scaled.T, 0.0)
    d = np.sqrt(d2)
    s5d = math.sqrt(5.0) * d
    return sv * (1.0 + s5d + 5.0 * d2 / 3.0) * np.exp(-s5d)


@dataclass
class GpModel:
    train_x: np.ndarray
    train_y: np.ndarray
    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float
    y_mean: float
    y_std: float
    degenerate: bool = False
    _chol: tuple = field(repr=False, default=None)
    _alpha: np.ndarray = field(repr=False, default=None)


def _median_lengthscales(X: np.ndarray) -> np.ndarray:
    # Median over the nonzero pairwise gaps: repeated coordinates are the norm
    # for discrete encodings and a zero gap carries no scale information.
    n, d = X.shape
    ls = np.ones(d)
    if n < 2:
        return ls
    for j in range(d):
        col = X[:, j]
        gaps = np.abs(col[:, None] - col[None, :])[np.triu_indices(n, k=1)]
        gaps = gaps[gaps > 0]
        if gaps.size:
            ls[j] = max(float(np.median(gaps)), LENGTHSCALE_FLOOR)
    return ls


def gp_fit(points: Sequence[tuple[np.ndarray, float]]) -> GpModel:
    """Fit the surrogate: standardized targets, median-heuristic lengthscales,
    unit signal variance, and jitter escalated until the Gram factorizes."""
    if not points:
        raise ValueError("gp_fit needs at least one training point")
    X = np.array([np.asarray(x, dtype=float) for x, _ in points])
    y = np.array([float(v) for _, v in points])
    if not np.all(np.isfinite(y)):
        raise ValueError("training targets must be finite")

    degenerate = bool(len(X) > 1 and np.allclose(X, X[0]))
    if degenerate:
        logger.warning("all GP training inputs are identical; fit is degenerate")

    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std == 0.0:
        y_std = 1.0
    y_n = (y - y_mean) / y_std

    ls = _median_lengthscales(X)
    sv = 1.0
    jitter = BASE_JITTER
    K = _gram(X, ls, sv)
    while True:
        try:
            chol = cho_factor(K + jitter * np.eye(len(X)), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > MAX_JITTER:
                raise RuntimeError(
                    f"GP covariance not positive definite even at jitter {MAX_JITTER}"
                ) from None
    alpha = cho_solve(chol, y_n)
    return GpModel(
        train_x=X,
        train_y=y,
        lengthscales=ls,
        signal_variance=sv,
        noise_variance=jitter,
        y_mean=y_mean,
        y_std=y_std,
        degenerate=degenerate,
        _chol=chol,
        _alpha=alpha,
    )


def _kvec(model: GpModel, x: np.ndarray) -> np.ndarray:
    scaled = (model.train_x - x) / model.lengthscales
    d = np.sqrt(np.sum(scaled**2, axis=1))
    s5d = math.sqrt(5.0) * d
    return model.signal_variance * (1.0 + s5d + 5.0 * d * d / 3.0) * np.exp(-s5d)


def gp_posterior(model: GpModel, x: np.ndarray) -> tuple[float, float]:
    """Posterior mean and variance at one encoding, on the original scale."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.train_x.shape[1],):
        raise ValueError(
            f"query has dimension {x.shape}, model expects ({model.train_x.shape[1]},)"
        )
    k_star = _kvec(model, x)
    mean_n = float(k_star @ model._alpha)
    v = cho_solve(model._chol, k_star)
    var_n = float(model.signal_variance - k_star @ v)
    var_n = max(var_n, 0.0)
    return model.y_mean + model.y_std * mean_n, model.y_std**2 * var_n


def expected_improvement(mean: float, std: float, y_best: float) -> float:
    """E[max(0, f - y_best)] for f ~ N(mean, std^2)."""
    if std < 0:
        raise ValueError("std must be >= 0")
    delta = mean - y_best
    if std == 0.0:
        return max(0.0, delta)
    z = delta / std
    if z > 40.0:  # both tails are numerically exact degenerate cases
        return delta
    if z < -40.0:
        return 0.0
    return float(delta * norm.cdf(z) + std * norm.pdf(z))


@dataclass(frozen=True)
class RefineRecord:
    front_index: int
    round: int
    config: ModelConfig
    ei: float
    performance: float
    failed: bool


@dataclass
class RefineOutcome:
    best: Individual
    archive: list[Individual]
    rounds: list[RefineRecord]


def _proximity_neighbors(config: ModelConfig, space: SearchSpace) -> list[ModelConfig]:
    """Every config reachable by stepping exactly one layer at most one index
    on each axis (bit only, rank only, or both)."""
    out = []
    for i, lc in enumerate(config.layers):
        bi = space.bit_index(lc.bit)
        ri = space.rank_index(lc.rank)
        bit_opts = [bi + s for s in (-1, 0, 1) if 0 <= bi + s < len(space.bits)]
        rank_opts = [ri + s for s in (-1, 0, 1) if 0 <= ri + s < len(space.ranks)]
        for nb in bit_opts:
            for nr in rank_opts:
                if nb == bi and nr == ri:
                    continue
                layers = list(config.layers)
                layers[i] = space.layer(nb, nr)
                out.append(ModelConfig(tuple(layers)))
    return out


def _single_axis_moves(
    config: ModelConfig, space: SearchSpace, direction: int
) -> list[tuple[int, LayerConfig]]:
    moves = []
    for i, lc in enumerate(config.layers):
        bi = space.bit_index(lc.bit)
        ri = space.rank_index(lc.rank)
        if 0 <= bi + direction < len(space.bits):
            moves.append((i, space.layer(bi + direction, ri)))
        if 0 <= ri + direction < len(space.ranks):
            moves.append((i, space.layer(bi, ri + direction)))
    return moves


def _exchange_neighbors(config: ModelConfig, space: SearchSpace) -> list[ModelConfig]:
    """Two layers stepping at once, one up and one down: the budget-neutral
    reallocation moves a one-layer step can never make."""
    out = []
    ups = _single_axis_moves(config, space, +1)
    downs = _single_axis_moves(config, space, -1)
    for i, up_layer in ups:
        for j, down_layer in downs:
            if i == j:
                continue
            layers = list(config.layers)
            layers[i] = up_layer
            layers[j] = down_layer
            out.append(ModelConfig(tuple(layers)))
    return out


RECOMBINATIONS_PER_PAIR = 8


def _candidate_pool(
    focus: ModelConfig,
    others: Sequence[ModelConfig],
    space: SearchSpace,
    budget_bytes: int,
    evaluator: MemoCache,
    known: set[ModelConfig],
    rng: np.random.Generator,
) -> list[ModelConfig]:
    pool: dict[ModelConfig, None] = {}
    for cand in _proximity_neighbors(focus, space):
        pool.setdefault(cand, None)
    for cand in _exchange_neighbors(focus, space):
        pool.setdefault(cand, None)
    for other in others:
        for _ in range(RECOMBINATIONS_PER_PAIR):
            pool.setdefault(layerwise_crossover(focus, other, 1.0, rng), None)
    feasible = [
        c
        for c in pool
        if c not in known and memory_footprint(c, evaluator.geometry) <= budget_bytes
    ]
    if len(feasible) > POOL_CAP:
        picks = rng.choice(len(feasible), size=POOL_CAP, replace=False)
        feasible = [feasible[i] for i in sorted(int(p) for p in picks)]
    return feasible


def refine(
    front: Sequence[Individual],
    archive: Archive,
    iters_per_config: int,
    evaluator: MemoCache,
    budget_bytes: int,
    space: SearchSpace,
    proxy_steps: int,
    rng: np.random.Generator,
) -> RefineOutcome:
    """Locally refine each front member for a fixed number of GP/EI rounds."""
    if not front:
        raise ValueError("refine needs a non-empty front")
    if iters_per_config < 0:
        raise ValueError("iters_per_config must be >= 0")

    def training_points() -> list[tuple[np.ndarray, float]]:
        return [
            (encode_config(ind.config, space), ind.result.performance)
            for ind in archive.entries
            if ind.ok
        ]

    members: list[Individual] = []
    seen_configs: set[ModelConfig] = set()
    for ind in front:
        if ind.config not in seen_configs:
            seen_configs.add(ind.config)
            members.append(ind)

    rounds: list[RefineRecord] = []
    model = gp_fit(training_points()) if iters_per_config > 0 else None
    for fi, member in enumerate(members):
        others = [ind.config for j, ind in enumerate(members) if j != fi]
        # The refined configuration is a moving target: whenever a round
        # improves on the trajectory's best, later rounds pool around it.
        center = member.config
        center_perf = member.result.performance if member.ok else -math.inf
        for rnd in range(iters_per_config):
            known = {ind.config for ind in archive.entries}
            pool = _candidate_pool(
                center, others, space, budget_bytes, evaluator, known, rng
            )
            if not pool:
                logger.warning(
                    "no feasible unevaluated candidates around front member %d, round %d",
                    fi,
                    rnd,
                )
                continue
            best_archive = archive.best()
            y_best = best_archive.result.performance if best_archive else 0.0
            scores = []
            for cand in pool:
                mean, var = gp_posterior(model, encode_config(cand, space))
                scores.append(expected_improvement(mean, math.sqrt(var), y_best))
            pick = int(np.argmax(scores))
            candidate = pool[pick]
            result = evaluator.evaluate(candidate, proxy_steps)
            archive.record(candidate, result)
            rounds.append(
                RefineRecord(
                    front_index=fi,
                    round=rnd,
                    config=candidate,
                    ei=float(scores[pick]),
                    performance=result.performance,
                    failed=result.failed,
                )
            )
            if not result.failed:
                model = gp_fit(training_points())
                if result.performance > center_perf:
                    center = candidate
                    center_perf = result.performance

    best = archive.best()
    if best is None:
        raise RuntimeError("refinement has no successful evaluation to return")
    return RefineOutcome(best=best, archive=archive.entries, rounds=rounds)

"""Phase I: per-layer sensitivity scoring and the task-informed seed config.

Each layer's score is the mean KL divergence between the model's baseline
output distribution and the distribution with only that layer degraded to
the minimum bit-width. Normalized scores index into the sorted bit and rank
spaces to produce a deterministic seed configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .evaluators.base import Evaluator
from .space import LayerConfig, ModelConfig, ModelGeometry, SearchSpace, memory_footprint

# q entries at exactly zero while p carries more than this mass mean genuine
# support mismatch and yield the +inf sentinel instead of a floored ratio.
SUPPORT_EPS = 1e-6
FLOOR_EPS = 1e-12


def kl_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    """KL(p || q) in nats, with zero-mass terms dropped and floored ratios.

    Returns +inf when p puts real mass where q has exactly none.
    """
    if len(p) != len(q):
        raise ValueError(f"length mismatch: {len(p)} vs {len(q)}")
    if any(x < 0 for x in p) or any(x < 0 for x in q):
        raise ValueError("probability entries must be non-negative")
    sp, sq = sum(p), sum(q)
    if abs(sp - 1.0) > 1e-6 or abs(sq - 1.0) > 1e-6:
        raise ValueError("inputs must each sum to 1 within 1e-6")
    total = 0.0
    for pi, qi in zip(p, q):
        pi, qi = pi / sp, qi / sq
        if pi == 0.0:
            continue
        if qi == 0.0:
            if pi > SUPPORT_EPS:
                return math.inf
            qi = FLOOR_EPS
        total += pi * math.log(pi / max(qi, FLOOR_EPS))
    return total


@dataclass(frozen=True)
class SensitivityProfile:
    """Per-layer raw scores and their sum-to-one normalization."""

    scores: tuple[float, ...]
    normalized: tuple[float, ...]
    uniform_fallback: bool = False

    def __len__(self) -> int:
        return len(self.scores)

    @classmethod
    def from_scores(cls, scores: Sequence[float]) -> SensitivityProfile:
        scores = tuple(float(s) for s in scores)
        if not scores:
            raise ValueError("profile needs at least one layer")
        if any(s < 0 for s in scores):
            raise ValueError("sensitivity scores must be non-negative")
        n_inf = sum(1 for s in scores if math.isinf(s))
        if n_inf:
            # Limit reading of S_l / sum(S): infinite-score layers share all
            # the mass, finite ones get none.
            norm = tuple(1.0 / n_inf if math.isinf(s) else 0.0 for s in scores)
            return cls(scores, norm, uniform_fallback=False)
        total = sum(scores)
        if total <= 0.0:
            return cls(scores, (1.0 / len(scores),) * len(scores), uniform_fallback=True)
        return cls(scores, tuple(s / total for s in scores))


def sensitivity_profile(evaluator: Evaluator, space: SearchSpace, calib_size: int) -> SensitivityProfile:
    """Score every layer by mean KL against its min-bit perturbation."""
    if calib_size < 1:
        raise ValueError("calib_size must be >= 1")
    meta = evaluator.meta()
    if calib_size > meta.calib_size:
        raise ValueError(f"calib_size {calib_size} exceeds evaluator's {meta.calib_size}")
    min_bit = space.bits[0]
    baselines = [evaluator.distribution(i) for i in range(calib_size)]
    scores = []
    for layer in range(meta.layers):
        acc = 0.0
        for i in range(calib_size):
            perturbed = evaluator.distribution(i, perturbed_layer=layer, perturb_bit=min_bit)
            acc += kl_divergence(baselines[i], perturbed)
        scores.append(acc / calib_size)
    return SensitivityProfile.from_scores(scores)


def seed_configuration(profile: SensitivityProfile, space: SearchSpace) -> ModelConfig:
    """Map each layer's normalized score to an index in both sorted spaces."""
    n_bits, n_ranks = len(space.bits), len(space.ranks)
    layers = []
    for p in profile.normalized:
        idx_b = min(max(math.floor(p * (n_bits - 1)), 0), n_bits - 1)
        idx_r = min(max(math.floor(p * (n_ranks - 1)), 0), n_ranks - 1)
        layers.append(LayerConfig(space.bits[idx_b], space.ranks[idx_r]))
    return ModelConfig(tuple(layers))


def repair_to_budget(
    config: ModelConfig,
    geom: ModelGeometry,
    space: SearchSpace,
    budget_bytes: int,
    priorities: Sequence[float] | None = None,
) -> ModelConfig:
    """Decrement the least-sensitive layers until the config fits the budget.

    Each step picks the lowest-priority layer that still has headroom and
    lowers its bit one step, falling back to its rank once bits are at the
    minimum. High-priority layers keep their resources longest. Uniform
    priorities (ties broken by layer index) are used when none are given.
    """
    if priorities is not None and len(priorities) != len(config):
        raise ValueError("priorities length must match the config")
    prio = list(priorities) if priorities is not None else [0.0] * len(config)

    layers = list(config.layers)
    while memory_footprint(ModelConfig(tuple(layers)), geom) > budget_bytes:
        candidates = [
            i
            for i, lc in enumerate(layers)
            if space.bit_index(lc.bit) > 0 or space.rank_index(lc.rank) > 0
        ]
        if not candidates:
            raise ValueError(
                f"budget {budget_bytes} is below the minimal achievable footprint "
                f"{memory_footprint(space.min_config(len(config)), geom)}"
            )
        target = min(candidates, key=lambda i: (prio[i], i))
        lc = layers[target]
        bi, ri = space.bit_index(lc.bit), space.rank_index(lc.rank)
        if bi > 0:
            layers[target] = LayerConfig(space.bits[bi - 1], lc.rank)
        else:
            layers[target] = LayerConfig(lc.bit, space.ranks[ri - 1])
    return ModelConfig(tuple(layers))

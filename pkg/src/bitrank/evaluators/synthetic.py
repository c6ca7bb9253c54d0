"""Closed-form synthetic evaluator for desk-scale verification.

Models each layer's usable capacity as a logistic score of (supply - demand):
supply grows with adapter rank and with the information retained at the
chosen bit-width, demand grows with quantization noise and the layer's task
demand. The landscape is cheap, deterministic, and reproduces the structural
behavior expected of the real thing (mixed allocations beating uniform ones,
deep-layer sensitivity, monotone response to added resources).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from ..space import (
    LayerConfig,
    LayerGeometry,
    ModelConfig,
    ModelGeometry,
    SearchSpace,
)
from .base import EvaluatorMeta


def quant_noise(bit: int) -> float:
    """Quantization noise proxy, halving with every extra bit."""
    if bit < 1:
        raise ValueError("bit must be >= 1")
    return 2.0 ** (-(bit - 1))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def layer_score(
    lc: LayerConfig,
    task_demand: float,
    alpha: float,
    beta: float,
    max_rank: int,
    sharpness: float = 4.0,
) -> float:
    """Logistic capacity score in (0, 1); 0.5 exactly where supply meets demand."""
    noise = quant_noise(lc.bit)
    demand = alpha * noise + beta * task_demand
    supply = lc.rank / max_rank + (1.0 - noise)
    return _sigmoid(sharpness * (supply - demand))


def _hash_unit(*parts: object) -> float:
    """Stable hash of the parts mapped to [0, 1)."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64


def _derived_rng(*parts: object) -> np.random.Generator:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def task_ramp(n_layers: int, shape: float = 3.5) -> tuple[float, ...]:
    """Monotone shallow-to-deep demand ramp from 0 to 1.

    The default curvature keeps most of the demand in the deep layers, so a
    budget-constrained optimum concentrates its precision there rather than
    spreading it uniformly.
    """
    return tuple(float(t) ** shape for t in np.linspace(0.0, 1.0, n_layers))


@dataclass(frozen=True)
class SyntheticModel:
    """Parameters of the synthetic landscape.

    task_demand defaults to a shallow-to-deep ramp; noise_scale adds a
    hash-seeded deterministic wobble of that amplitude (0 disables it).
    """

    n_layers: int = 6
    task_demand: tuple[float, ...] | None = None
    alpha: float = 1.0
    beta: float = 1.0
    noise_scale: float = 0.0
    dist_dim: int = 32
    rng_seed: int = 0
    space: SearchSpace = field(default_factory=SearchSpace)
    hidden_dim: int = 64
    calib_size: int = 16
    sharpness: float = 4.0
    proxy_tau: float = 3.0
    proxy_steps_full: int = 10
    displacement_scale: float = 4.0

    def __post_init__(self) -> None:
        demand = self.task_demand
        if demand is None:
            demand = task_ramp(self.n_layers)
        demand = tuple(float(t) for t in demand)
        if len(demand) != self.n_layers:
            raise ValueError("task_demand length must equal n_layers")
        if any(t < 0.0 or t > 1.0 for t in demand):
            raise ValueError("task_demand entries must lie in [0, 1]")
        if self.noise_scale < 0.0:
            raise ValueError("noise_scale must be >= 0")
        object.__setattr__(self, "task_demand", demand)

    @property
    def geometry(self) -> ModelGeometry:
        layer = LayerGeometry(
            frozen_params=self.hidden_dim * self.hidden_dim,
            adapter_in_dims=(self.hidden_dim,),
            adapter_out_dims=(self.hidden_dim,),
        )
        return ModelGeometry((layer,) * self.n_layers)


def synthetic_evaluate(model: SyntheticModel, config: ModelConfig, proxy_steps: int) -> float:
    """Demand-weighted mean layer score, attenuated by proxy-tuning length."""
    if len(config) != model.n_layers:
        raise ValueError(f"config has {len(config)} layers, model has {model.n_layers}")
    if proxy_steps < 0:
        raise ValueError("proxy_steps must be >= 0")
    demand = model.task_demand
    weights = [1.0 + t for t in demand]
    wsum = sum(weights)
    base = sum(
        w
        * layer_score(
            lc, t, model.alpha, model.beta, model.space.ranks[-1], model.sharpness
        )
        for lc, t, w in zip(config.layers, demand, weights)
    ) / wsum
    full = 1.0 - math.exp(-model.proxy_steps_full / model.proxy_tau)
    attenuation = min((1.0 - math.exp(-proxy_steps / model.proxy_tau)) / full, 1.0)
    score = base * attenuation
    if model.noise_scale > 0.0:
        wobble = 2.0 * _hash_unit("perf", model.rng_seed, config.bits, config.ranks) - 1.0
        score += model.noise_scale * wobble
    return score


def synthetic_distribution(
    model: SyntheticModel,
    calib_index: int,
    perturbed_layer: int | None = None,
    perturb_bit: int | None = None,
) -> list[float]:
    """Softmax of seeded logits, displaced in proportion to demand and noise."""
    if not 0 <= calib_index < model.calib_size:
        raise IndexError(f"calib_index {calib_index} out of range [0, {model.calib_size})")
    logits = _derived_rng("logits", model.rng_seed, calib_index).normal(size=model.dist_dim)
    if perturbed_layer is not None:
        if not 0 <= perturbed_layer < model.n_layers:
            raise IndexError(f"layer {perturbed_layer} out of range [0, {model.n_layers})")
        bit = model.space.bits[0] if perturb_bit is None else perturb_bit
        direction = _derived_rng("dir", model.rng_seed, calib_index).normal(size=model.dist_dim)
        direction /= np.linalg.norm(direction)
        magnitude = (
            model.displacement_scale
            * model.task_demand[perturbed_layer]
            * quant_noise(bit)
        )
        logits = logits + magnitude * direction
    shifted = logits - logits.max()
    probs = np.exp(shifted)
    probs /= probs.sum()
    return [float(p) for p in probs]


class SyntheticEvaluator:
    """Evaluator-protocol wrapper around a SyntheticModel."""

    def __init__(self, model: SyntheticModel | None = None):
        self.model = model if model is not None else SyntheticModel()

    def meta(self) -> EvaluatorMeta:
        return EvaluatorMeta(
            layers=self.model.n_layers,
            calib_size=self.model.calib_size,
            geometry=self.model.geometry,
        )

    def evaluate(self, config: ModelConfig, proxy_steps: int) -> float:
        return synthetic_evaluate(self.model, config, proxy_steps)

    def distribution(
        self,
        calib_index: int,
        perturbed_layer: int | None = None,
        perturb_bit: int | None = None,
    ) -> list[float]:
        return synthetic_distribution(self.model, calib_index, perturbed_layer, perturb_bit)


def pilot_model(n_layers: int = 28, **overrides) -> SyntheticModel:
    """Landscape for the four-configuration shallow/deep study.

    Uses a linear demand ramp so the shallow and deep halves differ the way
    the study intends; the default landscape's convex ramp would make the
    shallow half nearly free to compress.
    """
    overrides.setdefault("task_demand", task_ramp(n_layers, shape=1.0))
    return SyntheticModel(n_layers=n_layers, **overrides)


def pilot_configs(space: SearchSpace, n_layers: int) -> dict[str, ModelConfig]:
    """The four shallow/deep splits: uniform-low, uniform-high, and the two
    mixed allocations that differ only in where the high bits go."""
    shallow = n_layers // 2
    deep = n_layers - shallow

    def split(front: LayerConfig, back: LayerConfig) -> ModelConfig:
        return ModelConfig((front,) * shallow + (back,) * deep)

    return {
        "A": space.uniform(n_layers, 2, 8),
        "B": space.uniform(n_layers, 4, 8),
        "C": split(LayerConfig(4, 8), LayerConfig(2, 16)),
        "D": split(LayerConfig(2, 16), LayerConfig(4, 8)),
    }

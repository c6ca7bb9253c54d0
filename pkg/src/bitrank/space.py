"""Discrete search space, configuration chromosomes, and the memory model.

A configuration assigns every layer a (bit-width, adapter-rank) tuple drawn
from a shared discrete space. Configurations are priced in bytes against a
model geometry and compared in (performance, memory) objective space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

DEFAULT_BITS: tuple[int, ...] = (2, 4, 8)
DEFAULT_RANKS: tuple[int, ...] = (2, 4, 6, 8, 10, 12, 14, 16)


def _check_ascending(name: str, values: tuple[int, ...]) -> None:
    if not values:
        raise ValueError(f"{name} must be non-empty")
    if any(v <= 0 for v in values):
        raise ValueError(f"{name} must be positive, got {values}")
    if any(b >= a for b, a in zip(values, values[1:])):
        raise ValueError(f"{name} must be strictly ascending, got {values}")


@dataclass(frozen=True)
class SearchSpace:
    """Admissible bit-widths and adapter ranks, each sorted ascending."""

    bits: tuple[int, ...] = DEFAULT_BITS
    ranks: tuple[int, ...] = DEFAULT_RANKS

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", tuple(self.bits))
        object.__setattr__(self, "ranks", tuple(self.ranks))
        _check_ascending("bits", self.bits)
        _check_ascending("ranks", self.ranks)

    @property
    def median_bit(self) -> int:
        return self.bits[(len(self.bits) - 1) // 2]

    @property
    def median_rank(self) -> int:
        return self.ranks[(len(self.ranks) - 1) // 2]

    def bit_index(self, bit: int) -> int:
        try:
            return self.bits.index(bit)
        except ValueError:
            raise ValueError(f"bit {bit} not in space {self.bits}") from None

    def rank_index(self, rank: int) -> int:
        try:
            return self.ranks.index(rank)
        except ValueError:
            raise ValueError(f"rank {rank} not in space {self.ranks}") from None

    def layer(self, bit_idx: int, rank_idx: int) -> LayerConfig:
        return LayerConfig(self.bits[bit_idx], self.ranks[rank_idx])

    def uniform(self, n_layers: int, bit: int, rank: int) -> ModelConfig:
        lc = LayerConfig(bit, rank)
        self.validate_layer(lc)
        return ModelConfig((lc,) * n_layers)

    def min_config(self, n_layers: int) -> ModelConfig:
        return self.uniform(n_layers, self.bits[0], self.ranks[0])

    def validate_layer(self, lc: LayerConfig) -> None:
        if lc.bit not in self.bits:
            raise ValueError(f"bit {lc.bit} not in space {self.bits}")
        if lc.rank not in self.ranks:
            raise ValueError(f"rank {lc.rank} not in space {self.ranks}")

    def validate_config(self, config: ModelConfig) -> None:
        for lc in config.layers:
            self.validate_layer(lc)


@dataclass(frozen=True)
class LayerConfig:
    """One layer's gene: quantization bit-width plus adapter rank."""

    bit: int
    rank: int


@dataclass(frozen=True)
class ModelConfig:
    """Full-model chromosome: one (bit, rank) tuple per layer."""

    layers: tuple[LayerConfig, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a configuration needs at least one layer")

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple(lc.bit for lc in self.layers)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(lc.rank for lc in self.layers)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> ModelConfig:
        return cls(tuple(LayerConfig(b, r) for b, r in pairs))

    def to_wire(self) -> dict[str, list[int]]:
        """Serialize to the evaluator wire schema: {"bits": [...], "ranks": [...]}."""
        return {"bits": list(self.bits), "ranks": list(self.ranks)}

    @classmethod
    def from_wire(cls, obj: Mapping[str, Any]) -> ModelConfig:
        bits = obj["bits"]
        ranks = obj["ranks"]
        if len(bits) != len(ranks):
            raise ValueError(f"bits/ranks length mismatch: {len(bits)} vs {len(ranks)}")
        return cls.from_pairs(zip((int(b) for b in bits), (int(r) for r in ranks)))


@dataclass(frozen=True)
class LayerGeometry:
    """Parameter counts needed to price one layer in bytes.

    fixed_overhead_bytes is a knob for quantizer metadata (scales, zero
    points); it defaults to 0 and is excluded from the canonical model.
    """

    frozen_params: int
    adapter_in_dims: tuple[int, ...] = ()
    adapter_out_dims: tuple[int, ...] = ()
    fixed_overhead_bytes: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "adapter_in_dims", tuple(self.adapter_in_dims))
        object.__setattr__(self, "adapter_out_dims", tuple(self.adapter_out_dims))
        if self.frozen_params < 0:
            raise ValueError("frozen_params must be >= 0")
        if len(self.adapter_in_dims) != len(self.adapter_out_dims):
            raise ValueError("adapter in/out dim lists must have equal length")
        if any(d <= 0 for d in self.adapter_in_dims + self.adapter_out_dims):
            raise ValueError("adapter dimensions must be positive")
        if self.fixed_overhead_bytes < 0:
            raise ValueError("fixed_overhead_bytes must be >= 0")


@dataclass(frozen=True)
class ModelGeometry:
    layers: tuple[LayerGeometry, ...]
    adapter_bytes_per_param: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("geometry needs at least one layer")
        if self.adapter_bytes_per_param <= 0:
            raise ValueError("adapter_bytes_per_param must be positive")

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def total_frozen_params(self) -> int:
        return sum(lg.frozen_params for lg in self.layers)

    def to_dict(self) -> dict[str, Any]:
        return {
            "adapter_bytes_per_param": self.adapter_bytes_per_param,
            "layers": [
                {
                    "frozen_params": lg.frozen_params,
                    "adapter_in_dims": list(lg.adapter_in_dims),
                    "adapter_out_dims": list(lg.adapter_out_dims),
                    **(
                        {"fixed_overhead_bytes": lg.fixed_overhead_bytes}
                        if lg.fixed_overhead_bytes
                        else {}
                    ),
                }
                for lg in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> ModelGeometry:
        layers = tuple(
            LayerGeometry(
                frozen_params=int(entry["frozen_params"]),
                adapter_in_dims=tuple(int(d) for d in entry.get("adapter_in_dims", ())),
                adapter_out_dims=tuple(int(d) for d in entry.get("adapter_out_dims", ())),
                fixed_overhead_bytes=int(entry.get("fixed_overhead_bytes", 0)),
            )
            for entry in obj["layers"]
        )
        return cls(layers, adapter_bytes_per_param=int(obj.get("adapter_bytes_per_param", 2)))

    @classmethod
    def load(cls, path: str | Path) -> ModelGeometry:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class EvalResult:
    """A point in objective space: score (higher is better) plus footprint."""

    performance: float
    memory_bytes: int
    aux: Mapping[str, float] = field(default_factory=dict)
    failed: bool = False


def layer_memory_bytes(lc: LayerConfig, lg: LayerGeometry, adapter_bytes_per_param: int) -> int:
    """Bytes for one layer: frozen weights at `bit` plus 16-bit-style adapters."""
    frozen = math.ceil(lg.frozen_params * lc.bit / 8)
    adapters = adapter_bytes_per_param * sum(
        lc.rank * (din + dout) for din, dout in zip(lg.adapter_in_dims, lg.adapter_out_dims)
    )
    return frozen + adapters + lg.fixed_overhead_bytes


def memory_footprint(config: ModelConfig, geom: ModelGeometry) -> int:
    """Total bytes of a configuration, ceiling applied per layer."""
    if len(config) != len(geom):
        raise ValueError(f"config has {len(config)} layers, geometry has {len(geom)}")
    return sum(
        layer_memory_bytes(lc, lg, geom.adapter_bytes_per_param)
        for lc, lg in zip(config.layers, geom.layers)
    )


def average_bit(config: ModelConfig, geom: ModelGeometry) -> float:
    """Parameter-weighted mean bit-width over frozen weights."""
    if len(config) != len(geom):
        raise ValueError(f"config has {len(config)} layers, geometry has {len(geom)}")
    total = geom.total_frozen_params
    if total == 0:
        raise ValueError("average bit undefined: zero frozen parameters")
    return sum(lc.bit * lg.frozen_params for lc, lg in zip(config.layers, geom.layers)) / total


def average_rank(config: ModelConfig, geom: ModelGeometry) -> float:
    """Parameter-weighted mean adapter rank (same weights as average_bit)."""
    if len(config) != len(geom):
        raise ValueError(f"config has {len(config)} layers, geometry has {len(geom)}")
    total = geom.total_frozen_params
    if total == 0:
        raise ValueError("average rank undefined: zero frozen parameters")
    return sum(lc.rank * lg.frozen_params for lc, lg in zip(config.layers, geom.layers)) / total


def mean_rank(config: ModelConfig) -> float:
    """Unweighted mean rank, reported alongside the weighted one."""
    return sum(config.ranks) / len(config)


def dominates(a: EvalResult, b: EvalResult) -> bool:
    """Pareto dominance: maximize performance, minimize memory."""
    for r in (a, b):
        if r.failed or not math.isfinite(r.performance):
            raise ValueError("dominance undefined for failed or non-finite results")
    if a.performance < b.performance or a.memory_bytes > b.memory_bytes:
        return False
    return a.performance > b.performance or a.memory_bytes < b.memory_bytes

"""Joint per-layer quantization bit-width and adapter-rank search."""

from .bayes import (
    GpModel,
    encode_config,
    expected_improvement,
    gp_fit,
    gp_posterior,
    matern52,
    refine,
)
from .evaluators import (
    Evaluator,
    EvaluatorError,
    ExternalEvaluator,
    MemoCache,
    SyntheticEvaluator,
    SyntheticModel,
)
from .evolve import (
    Archive,
    EvolveParams,
    Individual,
    crowding_distance,
    evolve,
    layerwise_crossover,
    non_dominated_sort,
    proximity_mutation,
    tournament_select,
)
from .pipeline import PRESETS, RunReport, RunSpec, build_runspec, pearson, run
from .profiling import (
    SensitivityProfile,
    kl_divergence,
    repair_to_budget,
    seed_configuration,
    sensitivity_profile,
)
from .space import (
    EvalResult,
    LayerConfig,
    LayerGeometry,
    ModelConfig,
    ModelGeometry,
    SearchSpace,
    average_bit,
    average_rank,
    dominates,
    memory_footprint,
)

__version__ = "0.1.0"

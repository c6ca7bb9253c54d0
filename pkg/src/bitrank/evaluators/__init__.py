from .base import EvalCounters, Evaluator, EvaluatorError, EvaluatorMeta, MemoCache
from .external import EvaluatorUnavailable, ExternalEvaluator, ProtocolError
from .synthetic import (
    SyntheticEvaluator,
    SyntheticModel,
    layer_score,
    pilot_configs,
    pilot_model,
    quant_noise,
    synthetic_distribution,
    synthetic_evaluate,
    task_ramp,
)

__all__ = [
    "EvalCounters",
    "Evaluator",
    "EvaluatorError",
    "EvaluatorMeta",
    "EvaluatorUnavailable",
    "ExternalEvaluator",
    "MemoCache",
    "ProtocolError",
    "SyntheticEvaluator",
    "SyntheticModel",
    "layer_score",
    "pilot_configs",
    "pilot_model",
    "quant_noise",
    "synthetic_distribution",
    "synthetic_evaluate",
    "task_ramp",
]

from .base import Component, ComponentSetting, Role, RunContext, combine
from .labelers import NoisyLabeler, PerfectLabeler
from .ranker import LogisticRegressionRanker, logistic_objective
from .registry import COMPONENTS, build_component
from .samplers import RandomSampler, RelevanceSampler, UncertaintySampler
from .stopping import (
    BatchPrecisionRule,
    BudgetRule,
    FixedRoundRule,
    KneeRule,
    QuantRule,
    TargetSampleRule,
    max_slope_ratio,
)

__all__ = [
    "Component",
    "ComponentSetting",
    "Role",
    "RunContext",
    "combine",
    "PerfectLabeler",
    "NoisyLabeler",
    "LogisticRegressionRanker",
    "logistic_objective",
    "RandomSampler",
    "RelevanceSampler",
    "UncertaintySampler",
    "FixedRoundRule",
    "KneeRule",
    "BudgetRule",
    "BatchPrecisionRule",
    "TargetSampleRule",
    "QuantRule",
    "max_slope_ratio",
    "COMPONENTS",
    "build_component",
]

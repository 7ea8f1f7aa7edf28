"""Declarative component construction: string name + parameter table -> instance."""

from __future__ import annotations

from ..errors import ConfigurationError
from .base import Component
from .labelers import NoisyLabeler, PerfectLabeler
from .ranker import LogisticRegressionRanker
from .samplers import RandomSampler, RelevanceSampler, UncertaintySampler
from .stopping import (
    BatchPrecisionRule,
    BudgetRule,
    FixedRoundRule,
    KneeRule,
    QuantRule,
    TargetSampleRule,
)

__all__ = ["COMPONENTS", "build_component"]

COMPONENTS: dict[str, type[Component]] = {
    cls.name: cls
    for cls in (
        LogisticRegressionRanker,
        RandomSampler,
        RelevanceSampler,
        UncertaintySampler,
        PerfectLabeler,
        NoisyLabeler,
        FixedRoundRule,
        KneeRule,
        BudgetRule,
        BatchPrecisionRule,
        TargetSampleRule,
        QuantRule,
    )
}


def build_component(spec: dict) -> Component:
    """Instantiate a component from ``{"name": <key>, <param>: <value>, ...}``."""
    if "name" not in spec:
        raise ConfigurationError(f"component spec needs a name: {spec!r}")
    params = dict(spec)
    key = params.pop("name")
    try:
        cls = COMPONENTS[key]
    except KeyError:
        raise ConfigurationError(
            f"unknown component {key!r}; known: {', '.join(sorted(COMPONENTS))}"
        ) from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for component {key!r}: {exc}") from None

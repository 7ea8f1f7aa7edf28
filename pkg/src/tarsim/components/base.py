"""Role-based component system.

A component declares the workflow roles it can serve; a
:class:`ComponentSetting` bundles components so that each role is covered by
exactly one of them. One component may own several roles (for example a
stopping rule that also controls batch selection), in which case it receives
a single begin-of-run callback per run.
"""

from __future__ import annotations

import enum
import inspect
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..dataset import Corpus
from ..errors import ConfigurationError

__all__ = ["Role", "Component", "RunContext", "ComponentSetting", "combine"]


class Role(enum.Enum):
    RANKER = "Ranker"
    SAMPLER = "Sampler"
    LABELER = "Labeler"
    STOPPING_RULE = "StoppingRule"


@dataclass
class RunContext:
    """What a component may see at the start of a run.

    ``rng_for(tag)`` returns an independent generator for this run and tag;
    ``request_labels(doc_ids)`` routes a review request through the run's
    labeler without touching the ledger (the labels stay out of training).
    """

    corpus: Corpus
    rng_for: Callable[[str], np.random.Generator]
    request_labels: Callable[[Sequence[int]], np.ndarray]


class Component:
    """Base class for workflow components.

    Subclasses set ``roles`` to the roles they can serve and ``name`` to
    their registry key. Constructor arguments must be stored under the same
    attribute names so :meth:`get_params` can report them.
    """

    roles: frozenset[Role] = frozenset()
    name: str = ""

    def begin_run(self, ctx: RunContext) -> None:
        """Called exactly once per run, before the seed round."""

    def get_params(self) -> dict:
        params = {}
        for pname, p in inspect.signature(type(self).__init__).parameters.items():
            if pname == "self" or p.kind in (p.VAR_POSITIONAL, p.VAR_KEYWORD):
                continue
            params[pname] = getattr(self, pname)
        return params

    def describe(self) -> str:
        """Canonical ``name(param=value, ...)`` string for reporting."""
        params = self.get_params()
        if not params:
            return self.name
        inner = ", ".join(f"{k}={v!r}" for k, v in sorted(params.items()))
        return f"{self.name}({inner})"

    def __repr__(self):
        return self.describe()


@dataclass(frozen=True)
class ComponentSetting:
    """A validated bundle of components covering every workflow role."""

    components: tuple[Component, ...]
    role_map: dict[Role, int] = field(compare=False)

    def __getitem__(self, role: Role) -> Component:
        return self.components[self.role_map[role]]

    @property
    def ranker(self) -> Component:
        return self[Role.RANKER]

    @property
    def sampler(self) -> Component:
        return self[Role.SAMPLER]

    @property
    def labeler(self) -> Component:
        return self[Role.LABELER]

    @property
    def stopping_rule(self) -> Component:
        return self[Role.STOPPING_RULE]

    def begin_run(self, ctx: RunContext) -> None:
        """Dispatch begin-of-run once per distinct component, in list order."""
        seen: set[int] = set()
        for comp in self.components:
            if id(comp) not in seen:
                seen.add(id(comp))
                comp.begin_run(ctx)

    def describe(self) -> dict[str, str]:
        """Role name -> component description, for run reporting."""
        return {role.value: self[role].describe() for role in Role}


def combine(components: Sequence[Component]) -> ComponentSetting:
    """Validate that each role is covered exactly once and build a setting."""
    components = tuple(components)
    role_map: dict[Role, int] = {}
    for idx, comp in enumerate(components):
        for role in comp.roles:
            if role in role_map:
                raise ConfigurationError(
                    f"{role.value} covered twice: by "
                    f"{components[role_map[role]].describe()} and {comp.describe()}"
                )
            role_map[role] = idx
    missing = [role for role in Role if role not in role_map]
    if missing:
        raise ConfigurationError(
            ", ".join(f"{role.value} uncovered" for role in missing)
        )
    return ComponentSetting(components, role_map)

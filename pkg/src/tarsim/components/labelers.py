"""Simulated human review."""

from __future__ import annotations

import numpy as np

from .base import Component, Role

__all__ = ["PerfectLabeler", "NoisyLabeler"]


class _Labeler(Component):
    roles = frozenset({Role.LABELER})

    def label(self, doc_ids, gold_values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class PerfectLabeler(_Labeler):
    """Returns the gold label of every document verbatim."""

    name = "perfect"

    def label(self, doc_ids, gold_values, rng):
        return np.asarray(gold_values, dtype=bool).copy()


class NoisyLabeler(_Labeler):
    """Returns the gold label with probability ``success_prob``, else its flip.

    Draws are independent per document and deterministic under a fixed
    generator state.
    """

    name = "noisy"

    def __init__(self, success_prob: float):
        if not 0.0 <= success_prob <= 1.0:
            raise ValueError("success_prob must be in [0, 1]")
        self.success_prob = float(success_prob)

    def label(self, doc_ids, gold_values, rng):
        gold = np.asarray(gold_values, dtype=bool)
        keep = rng.random(gold.shape[0]) < self.success_prob
        return np.where(keep, gold, ~gold)

    def get_params(self) -> dict:
        return {"success_prob": self.success_prob}

"""Batch selection strategies.

Every sampler draws from the unlabeled candidates only, never returns more
than ``k`` documents, and is deterministic: random selection under a fixed
generator state, score-based selection with ties broken by ascending doc_id.
"""

from __future__ import annotations

import numpy as np

from ..errors import NotTrainedError
from .base import Component, Role

__all__ = ["RandomSampler", "RelevanceSampler", "UncertaintySampler"]


class _Sampler(Component):
    roles = frozenset({Role.SAMPLER})

    def select(self, k: int, candidates: np.ndarray, scores: np.ndarray | None,
               rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class RandomSampler(_Sampler):
    """Uniform sampling without replacement; batch returned sorted ascending."""

    name = "random"

    def select(self, k, candidates, scores, rng):
        if k < 0:
            raise ValueError("k must be >= 0")
        candidates = np.sort(np.asarray(candidates, dtype=np.int64))
        take = min(int(k), candidates.size)
        if take == 0:
            return candidates[:0]
        return np.sort(rng.choice(candidates, size=take, replace=False))


class _ScoreRankedSampler(_Sampler):
    """Common machinery: order candidates by a per-doc key, take the first k."""

    def _keys(self, scores: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def select(self, k, candidates, scores, rng):
        if k < 0:
            raise ValueError("k must be >= 0")
        candidates = np.asarray(candidates, dtype=np.int64)
        if scores is None:
            raise NotTrainedError(f"{self.name} sampling requires scores from a trained model")
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != candidates.shape:
            raise ValueError("scores must cover all candidates")
        order = np.lexsort((candidates, self._keys(scores)))
        return candidates[order[: min(int(k), candidates.size)]]


class RelevanceSampler(_ScoreRankedSampler):
    """Highest-scored candidates first (relevance feedback)."""

    name = "relevance"

    def _keys(self, scores):
        return -scores


class UncertaintySampler(_ScoreRankedSampler):
    """Candidates whose scores are closest to 0.5 first."""

    name = "uncertainty"

    def _keys(self, scores):
        return np.abs(scores - 0.5)

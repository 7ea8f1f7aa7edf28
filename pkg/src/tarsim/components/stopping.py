"""Stopping rules for ending the training phase.

All rules are predicates over the frozen ledger (plus, for score-based
rules, the current model scores). The workflow latches the first True and
never queries the rule again, so rules need not be monotone.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

from ..errors import NotTrainedError
from ..ledger import FrozenLedger
from .base import Component, Role, RunContext

__all__ = [
    "max_slope_ratio",
    "FixedRoundRule",
    "KneeRule",
    "BudgetRule",
    "BatchPrecisionRule",
    "TargetSampleRule",
    "QuantRule",
]


class StoppingRule(Component):
    roles = frozenset({Role.STOPPING_RULE})
    requires_scores = False

    def should_stop(self, ledger: FrozenLedger, scores: np.ndarray | None) -> bool:
        raise NotImplementedError


class FixedRoundRule(StoppingRule):
    """Stop once ``max_round`` training rounds (seed round excluded) are done."""

    name = "fixed"

    def __init__(self, max_round: int):
        if max_round < 0:
            raise ValueError("max_round must be >= 0")
        self.max_round = int(max_round)

    def should_stop(self, ledger, scores):
        return ledger.n_rounds - 1 >= self.max_round

    def get_params(self):
        return {"max_round": self.max_round}


def max_slope_ratio(curve: list[tuple[int, int]]) -> float | None:
    """Largest slope ratio between any prior gain-curve point and the current one.

    For the current point i and each prior point j, the ratio compares the
    average gain rate up to j against the rate from j to i (with one phantom
    positive added to the numerator's tail gain to avoid division by zero):
    rho(j) = (y_j / x_j) / ((y_i - y_j + 1) / (x_i - x_j)). Points with
    x_j = 0 or x_j = x_i are skipped; returns None when no point qualifies.
    """
    if len(curve) < 2:
        return None
    xs = np.asarray([p[0] for p in curve[:-1]], dtype=np.float64)
    ys = np.asarray([p[1] for p in curve[:-1]], dtype=np.float64)
    xi, yi = float(curve[-1][0]), float(curve[-1][1])
    valid = (xs > 0) & (xs < xi)
    if not valid.any():
        return None
    xs, ys = xs[valid], ys[valid]
    rho = (ys / xs) / ((yi - ys + 1.0) / (xi - xs))
    return float(rho.max())


class KneeRule(StoppingRule):
    """Stop when the gain curve shows a knee: the slope ratio reaches a threshold.

    The threshold adapts to the positives found so far (156 - min(y_i, 150))
    unless a fixed value is configured. No decision is made before
    ``min_reviewed`` documents have been reviewed or before two gain-curve
    points exist.
    """

    name = "knee"

    def __init__(self, min_reviewed: int = 1000, threshold: float | None = None):
        self.min_reviewed = int(min_reviewed)
        self.threshold = threshold

    def should_stop(self, ledger, scores):
        curve = ledger.gain_curve()
        if not curve or curve[-1][0] < self.min_reviewed:
            return False
        rho = max_slope_ratio(curve)
        if rho is None:
            return False
        if self.threshold is None:
            thr = 156.0 - min(curve[-1][1], 150)
        else:
            thr = float(self.threshold)
        return rho >= thr

    def get_params(self):
        return {"min_reviewed": self.min_reviewed, "threshold": self.threshold}


class BudgetRule(StoppingRule):
    """Stop after ``budget`` documents are reviewed and a fixed-threshold knee test passes."""

    name = "budget"

    def __init__(self, budget: int, fixed_rho: float = 6.0):
        self.budget = int(budget)
        self.fixed_rho = float(fixed_rho)

    def should_stop(self, ledger, scores):
        curve = ledger.gain_curve()
        if not curve or curve[-1][0] < self.budget:
            return False
        rho = max_slope_ratio(curve)
        return rho is not None and rho >= self.fixed_rho

    def get_params(self):
        return {"budget": self.budget, "fixed_rho": self.fixed_rho}


class BatchPrecisionRule(StoppingRule):
    """Stop when each of the last ``slack`` training batches has positive
    fraction strictly below ``threshold``; the seed round never counts."""

    name = "batch_precision"

    def __init__(self, threshold: float, slack: int = 1):
        if slack < 1:
            raise ValueError("slack must be >= 1")
        self.threshold = float(threshold)
        self.slack = int(slack)

    def should_stop(self, ledger, scores):
        counts = ledger.round_counts()[1:]
        pos = ledger.round_pos_counts()[1:]
        if len(counts) < self.slack:
            return False
        for n, p in zip(counts[-self.slack:], pos[-self.slack:]):
            frac = (p / n) if n else 0.0
            if not frac < self.threshold:
                return False
        return True

    def get_params(self):
        return {"threshold": self.threshold, "slack": self.slack}


class TargetSampleRule(StoppingRule):
    """Stop when the review has covered ``target_recall`` of the positives in
    a pre-drawn control sample.

    The sample (default size 2399) is drawn uniformly once at workflow start
    and labeled outside the ledger; its labels never reach training. The rule
    then watches which sample positives the workflow reviews on its own. With
    zero sample positives the rule is inapplicable and never fires.
    """

    name = "target_sample"

    def __init__(self, target_recall: float, sample_size: int = 2399):
        if not 0.0 <= target_recall <= 1.0:
            raise ValueError("target_recall must be in [0, 1]")
        if sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        self.target_recall = float(target_recall)
        self.sample_size = int(sample_size)
        self._sample_pos: np.ndarray | None = None

    def begin_run(self, ctx: RunContext):
        rng = ctx.rng_for("stopping:control-sample")
        take = min(self.sample_size, ctx.corpus.n_docs)
        sample = np.sort(rng.choice(ctx.corpus.doc_ids, size=take, replace=False))
        labels = ctx.request_labels(sample)
        self._sample_pos = sample[np.asarray(labels, dtype=bool)]

    def should_stop(self, ledger, scores):
        if self._sample_pos is None:
            raise NotTrainedError("control sample not drawn; begin_run was not called")
        if self._sample_pos.size == 0:
            return False
        reviewed = sum(1 for d in self._sample_pos if ledger.is_annotated(int(d)))
        return reviewed / self._sample_pos.size >= self.target_recall

    def get_params(self):
        return {"target_recall": self.target_recall, "sample_size": self.sample_size}


class QuantRule(StoppingRule):
    """Stop when estimated recall reaches the target.

    Total positives are estimated as the positives reviewed plus the sum of
    model scores over unreviewed documents. With ``use_ci`` the estimate is
    penalized by a normal lower confidence bound whose spread is
    sqrt(sum p_i (1 - p_i)) over unreviewed scores, making the rule strictly
    more conservative than the plain estimate.
    """

    name = "quant"
    requires_scores = True

    def __init__(self, target_recall: float, use_ci: bool = False, confidence: float = 0.95):
        if not 0.0 <= target_recall <= 1.0:
            raise ValueError("target_recall must be in [0, 1]")
        if not 0.0 < confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        self.target_recall = float(target_recall)
        self.use_ci = bool(use_ci)
        self.confidence = float(confidence)
        self._doc_ids: np.ndarray | None = None

    def begin_run(self, ctx: RunContext):
        self._doc_ids = ctx.corpus.doc_ids

    def should_stop(self, ledger, scores):
        if scores is None:
            raise NotTrainedError("recall estimation requires scores from a trained model")
        if self._doc_ids is None:
            raise NotTrainedError("begin_run was not called")
        scores = np.asarray(scores, dtype=np.float64)
        unreviewed = np.array(
            [not ledger.is_annotated(int(d)) for d in self._doc_ids], dtype=bool
        )
        p = scores[unreviewed]
        total_est = ledger.n_pos_annotated + float(p.sum())
        if total_est <= 0.0:
            return False
        recall_est = ledger.n_pos_annotated / total_est
        if not self.use_ci:
            return recall_est >= self.target_recall
        z = float(norm.ppf(self.confidence))
        sigma = float(np.sqrt((p * (1.0 - p)).sum()))
        return recall_est - z * sigma / total_est >= self.target_recall

    def get_params(self):
        return {
            "target_recall": self.target_recall,
            "use_ci": self.use_ci,
            "confidence": self.confidence,
        }

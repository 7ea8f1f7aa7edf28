"""Effectiveness metrics, deterministic ranking, and the end-to-end cost model.

All metrics are evaluated on two views of the collection: the full ranking
and the unreviewed-only ranking. Values that are undefined for a view (for
example RPrec when the view holds no positives) are reported as ``None`` and
serialized as nulls, never as 0.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .ledger import _LedgerView

__all__ = [
    "rank",
    "PrecisionAtK",
    "RecallAtK",
    "RPrec",
    "CostStructure",
    "OptimisticCost",
    "parse_measure",
    "optimistic_cost",
    "CostBreakdown",
    "cost_trajectory",
    "MetricRecord",
    "evaluate_measures",
]

# Guard against float noise in target_recall * n_pos before taking the ceiling.
_QUOTA_EPS = 1e-9


def rank(scores: np.ndarray, doc_ids: np.ndarray) -> np.ndarray:
    """Order doc_ids by descending score, ties broken by ascending doc_id."""
    scores = np.asarray(scores, dtype=np.float64)
    doc_ids = np.asarray(doc_ids, dtype=np.int64)
    if scores.shape != doc_ids.shape:
        raise ValueError("scores and doc_ids must align")
    if scores.size and not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    order = np.lexsort((doc_ids, -scores))
    return doc_ids[order]


def _ranked_gold(scores: np.ndarray, doc_ids: np.ndarray, gold: np.ndarray) -> np.ndarray:
    """Gold labels rearranged into ranking order."""
    order = np.lexsort((doc_ids, -np.asarray(scores, dtype=np.float64)))
    return np.asarray(gold, dtype=bool)[order]


class PrecisionAtK:
    """Fraction of the top k that is relevant; ranks beyond the view count as misses."""

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = int(k)

    @property
    def name(self) -> str:
        return f"P@{self.k}"

    def evaluate(self, gold_in_rank_order: np.ndarray) -> float | None:
        hits = int(np.asarray(gold_in_rank_order[: self.k], dtype=bool).sum())
        return hits / self.k


class RecallAtK:
    """Fraction of the view's positives found in the top k."""

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = int(k)

    @property
    def name(self) -> str:
        return f"R@{self.k}"

    def evaluate(self, gold_in_rank_order: np.ndarray) -> float | None:
        gold = np.asarray(gold_in_rank_order, dtype=bool)
        total = int(gold.sum())
        if total == 0:
            return None
        return int(gold[: self.k].sum()) / total


class RPrec:
    """Precision at R, where R is the number of positives in the view."""

    name = "RPrec"

    def evaluate(self, gold_in_rank_order: np.ndarray) -> float | None:
        gold = np.asarray(gold_in_rank_order, dtype=bool)
        r = int(gold.sum())
        if r == 0:
            return None
        return int(gold[:r].sum()) / r


def _fmt_cost_component(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


@dataclass(frozen=True)
class CostStructure:
    """Unit review costs: phase-1 positive/negative, phase-2 positive/negative."""

    a_p: float
    a_n: float
    b_p: float
    b_n: float

    def __post_init__(self):
        for name in ("a_p", "a_n", "b_p", "b_n"):
            if getattr(self, name) < 0:
                raise ValueError(f"cost component {name} must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "CostStructure":
        parts = text.split("-")
        if len(parts) != 4:
            raise ConfigurationError(f"cost structure must be a-b-c-d, got {text!r}")
        try:
            return cls(*(float(p) for p in parts))
        except ValueError:
            raise ConfigurationError(f"bad cost structure {text!r}")

    def __str__(self) -> str:
        return "-".join(_fmt_cost_component(v) for v in (self.a_p, self.a_n, self.b_p, self.b_n))


class OptimisticCost:
    """Cost of reviews so far plus the idealized cost of finishing to a target recall."""

    def __init__(self, target_recall: float, cost_structure: CostStructure | tuple):
        if not 0 <= target_recall <= 1:
            raise ValueError("target_recall must be in [0, 1]")
        self.target_recall = float(target_recall)
        if not isinstance(cost_structure, CostStructure):
            cost_structure = CostStructure(*cost_structure)
        self.cost_structure = cost_structure

    @property
    def name(self) -> str:
        return f"OptCost@{self.target_recall!r};{self.cost_structure}"


_MEASURE_RE = re.compile(r"^(P|R)@(\d+)$")
_OPTCOST_RE = re.compile(r"^OptCost@([^;]+);(.+)$")


def parse_measure(text: str):
    """Parse a measure string: ``P@<k>``, ``R@<k>``, ``RPrec``, or
    ``OptCost@<target>;<a_p>-<a_n>-<b_p>-<b_n>``."""
    if text == "RPrec":
        return RPrec()
    m = _MEASURE_RE.match(text)
    if m:
        cls = PrecisionAtK if m.group(1) == "P" else RecallAtK
        return cls(int(m.group(2)))
    m = _OPTCOST_RE.match(text)
    if m:
        try:
            target = float(m.group(1))
        except ValueError:
            raise ConfigurationError(f"bad target recall in {text!r}")
        return OptimisticCost(target, CostStructure.parse(m.group(2)))
    raise ConfigurationError(f"unknown measure {text!r}")


@dataclass(frozen=True)
class CostBreakdown:
    """Per-bucket costs of one round's state under one cost structure."""

    phase1_pos: float
    phase1_neg: float
    phase2_pos: float
    phase2_neg: float
    depth: int
    shortfall: bool = False

    @property
    def total(self) -> float:
        return self.phase1_pos + self.phase1_neg + self.phase2_pos + self.phase2_neg

    def as_dict(self) -> dict[str, float]:
        return {
            "phase1_pos": self.phase1_pos,
            "phase1_neg": self.phase1_neg,
            "phase2_pos": self.phase2_pos,
            "phase2_neg": self.phase2_neg,
            "total": self.total,
        }


def positive_quota(target_recall: float, n_pos: int) -> int:
    """Number of positives an end-to-end review must find: ceil(target * P)."""
    return max(0, math.ceil(target_recall * n_pos - _QUOTA_EPS))


def optimistic_cost(
    ledger: _LedgerView,
    scores: np.ndarray,
    gold: np.ndarray,
    doc_ids: np.ndarray,
    target_recall: float,
    cs: CostStructure,
) -> CostBreakdown:
    """Phase-1 cost of the reviewed set plus the minimal phase-2 prefix cost.

    The phase-2 prefix is the shortest prefix of the unreviewed ranking that
    contains the positives still needed to reach ``target_recall``. If even
    the full unreviewed list falls short, the full list is costed and the
    breakdown is flagged as a shortfall.
    """
    gold = np.asarray(gold, dtype=bool)
    doc_ids = np.asarray(doc_ids, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if not (gold.shape == doc_ids.shape == scores.shape):
        raise ValueError("gold, doc_ids, and scores must align")

    reviewed_mask = np.array([ledger.is_annotated(int(d)) for d in doc_ids], dtype=bool)
    reviewed = int(reviewed_mask.sum())
    found = int((reviewed_mask & gold).sum())
    n_pos = int(gold.sum())
    need = max(0, positive_quota(target_recall, n_pos) - found)

    if need == 0:
        depth, got, shortfall = 0, 0, False
    else:
        unrev_gold = _ranked_gold(scores[~reviewed_mask], doc_ids[~reviewed_mask], gold[~reviewed_mask])
        csum = np.cumsum(unrev_gold)
        hit = np.nonzero(csum >= need)[0]
        if hit.size:
            depth, got, shortfall = int(hit[0]) + 1, need, False
        else:
            depth, got, shortfall = int(unrev_gold.size), int(csum[-1]) if csum.size else 0, True

    return CostBreakdown(
        phase1_pos=cs.a_p * found,
        phase1_neg=cs.a_n * (reviewed - found),
        phase2_pos=cs.b_p * got,
        phase2_neg=cs.b_n * (depth - got),
        depth=depth,
        shortfall=shortfall,
    )


@dataclass(frozen=True)
class CostTrajectory:
    """Per-round cost breakdowns plus the rounds a cost-dynamics plot marks."""

    rounds: list[CostBreakdown]
    optimal_round: int
    target_round: int | None

    def totals(self) -> list[float]:
        return [b.total for b in self.rounds]


def cost_trajectory(
    states: Sequence[tuple[_LedgerView, np.ndarray]],
    gold: np.ndarray,
    doc_ids: np.ndarray,
    target_recall: float,
    cs: CostStructure,
) -> CostTrajectory:
    """Evaluate :func:`optimistic_cost` for each per-round state.

    ``optimal_round`` is the argmin of total cost (earliest on ties);
    ``target_round`` is the first round whose phase-1 recall reaches the
    target, or None if no round does.
    """
    if not states:
        raise ValueError("at least one round required")
    gold = np.asarray(gold, dtype=bool)
    n_pos = int(gold.sum())
    breakdowns = []
    target_round = None
    for r, (led, scores) in enumerate(states):
        breakdowns.append(optimistic_cost(led, scores, gold, doc_ids, target_recall, cs))
        reviewed_mask = np.array([led.is_annotated(int(d)) for d in doc_ids], dtype=bool)
        recall = ((reviewed_mask & gold).sum() / n_pos) if n_pos else 1.0
        if target_round is None and recall >= target_recall:
            target_round = r
    totals = [b.total for b in breakdowns]
    optimal = int(np.argmin(totals))
    return CostTrajectory(breakdowns, optimal, target_round)


@dataclass
class MetricRecord:
    """One round's evaluation output: measure values per view plus cost buckets."""

    round: int
    n_annotated: int
    n_pos_annotated: int
    recall: float
    values: dict[str, float | None] = field(default_factory=dict)
    cost: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "round": self.round,
            "n_annotated": self.n_annotated,
            "n_pos_annotated": self.n_pos_annotated,
            "recall": self.recall,
            "values": self.values,
            "cost": self.cost,
        }
        return json.dumps(payload, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "MetricRecord":
        data = json.loads(text)
        return cls(
            round=data["round"],
            n_annotated=data["n_annotated"],
            n_pos_annotated=data["n_pos_annotated"],
            recall=data["recall"],
            values=data["values"],
            cost=data["cost"],
        )


def evaluate_measures(
    measures: Sequence,
    ledger: _LedgerView,
    scores: np.ndarray,
    gold: np.ndarray,
    doc_ids: np.ndarray,
    round_index: int,
) -> MetricRecord:
    """Evaluate each measure on the full and unreviewed views of the ranking.

    Cost measures are evaluated once on the run state (reported under the
    ``full`` view, with their bucket breakdown alongside); the unreviewed
    view is absent by definition for them.
    """
    gold = np.asarray(gold, dtype=bool)
    doc_ids = np.asarray(doc_ids, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    reviewed_mask = np.array([ledger.is_annotated(int(d)) for d in doc_ids], dtype=bool)
    n_pos = int(gold.sum())
    found = int((reviewed_mask & gold).sum())

    full_gold = _ranked_gold(scores, doc_ids, gold)
    unrev = ~reviewed_mask
    unrev_gold = _ranked_gold(scores[unrev], doc_ids[unrev], gold[unrev])

    record = MetricRecord(
        round=round_index,
        n_annotated=int(reviewed_mask.sum()),
        n_pos_annotated=ledger.n_pos_annotated,
        recall=(found / n_pos) if n_pos else 1.0,
    )
    for measure in measures:
        measure = parse_measure(measure) if isinstance(measure, str) else measure
        if isinstance(measure, OptimisticCost):
            breakdown = optimistic_cost(
                ledger, scores, gold, doc_ids, measure.target_recall, measure.cost_structure
            )
            record.values[f"{measure.name}/full"] = breakdown.total
            record.values[f"{measure.name}/unreviewed"] = None
            record.cost[measure.name] = breakdown.as_dict()
        else:
            record.values[f"{measure.name}/full"] = measure.evaluate(full_gold)
            record.values[f"{measure.name}/unreviewed"] = (
                measure.evaluate(unrev_gold) if unrev_gold.size else None
            )
    return record

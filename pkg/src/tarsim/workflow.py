"""Round-by-round execution of review workflows.

A workflow is an iterator: each step runs one round (select a batch, look up
labels, record them, retrain, rescore, test the stopping rule) and yields a
:class:`RoundOutcome` holding a frozen ledger. All state that outlives a
round lives in the ledger, so a run can be checkpointed, resumed, and
replayed; randomness is drawn from streams keyed by (seed, role, round), so
components never perturb each other's draws.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .components.base import ComponentSetting, RunContext
from .dataset import Corpus, Task
from .errors import DriftError, IntegrityError, NotTrainedError, ReplayError
from .evaluation import MetricRecord, evaluate_measures, positive_quota, rank
from .ledger import FrozenLedger, Ledger, score_dump_path, write_score_dump
from .rng import stream

__all__ = [
    "WorkflowConfig",
    "RoundOutcome",
    "OnePhaseWorkflow",
    "TwoPhaseWorkflow",
    "PhaseTwoResult",
    "compute_run_hash",
    "compute_metrics",
    "ReplayRound",
    "replay",
    "parse_cutoff_policy",
]

LEDGER_FILENAME = "ledger.jsonl"
METRICS_FILENAME = "metrics.jsonl"


@dataclass(frozen=True)
class WorkflowConfig:
    """Run parameters that, with the component setting and task, identify a run."""

    seed_docs: tuple[int, ...]
    batch_size: int
    random_seed: int
    max_round_exec: int | None = None
    save_scores: bool = False
    checkpoint_every: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "seed_docs", tuple(int(d) for d in self.seed_docs))
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")

    def identity(self) -> dict:
        """The fields that define the run's trajectory (not its outputs)."""
        return {
            "seed_docs": list(self.seed_docs),
            "batch_size": self.batch_size,
            "random_seed": self.random_seed,
            "max_round_exec": self.max_round_exec,
        }


@dataclass(frozen=True)
class RoundOutcome:
    """What one round yields: the frozen ledger, the latched stop flag, scores."""

    round: int
    ledger: FrozenLedger
    stopped: bool
    scores: np.ndarray | None


def compute_run_hash(kind: str, config: WorkflowConfig, setting: ComponentSetting,
                     task: Task, extra: dict | None = None) -> str:
    """Stable digest of (workflow kind, config identity, components, task)."""
    payload = {
        "workflow": kind,
        "config": config.identity(),
        "components": setting.describe(),
        "task": task.identity(),
    }
    if extra:
        payload["extra"] = extra
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def compute_metrics(task: Task, ledger, scores: np.ndarray, measures: Sequence,
                    round_index: int | None = None) -> MetricRecord:
    """Evaluate measures on the full and unreviewed views of a run state."""
    if scores is None:
        raise NotTrainedError("metrics need scores; no round has trained a model yet")
    if round_index is None:
        round_index = ledger.n_rounds - 1
    return evaluate_measures(measures, ledger, scores, task.gold, task.corpus.doc_ids, round_index)


class OnePhaseWorkflow:
    """Iterative review: label batches until the stopping rule fires, the
    collection is exhausted, or the hard round cap is reached."""

    kind = "one-phase"

    def __init__(self, task: Task, setting: ComponentSetting, config: WorkflowConfig,
                 out_dir: str | Path | None = None):
        unknown = set(config.seed_docs) - set(int(d) for d in task.corpus.doc_ids)
        if unknown:
            raise ValueError(f"seed_docs not in corpus: {sorted(unknown)}")
        self.task = task
        self.setting = setting
        self.config = config
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.run_hash = compute_run_hash(self.kind, config, setting, task, self._hash_extra())
        self.ledger = Ledger(run_hash=self.run_hash)
        self._scores: np.ndarray | None = None
        self._began = False
        self._resumed = False
        self._stopped = False
        self._finished = False
        self._expected_annotated = 0
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)

    def _hash_extra(self) -> dict | None:
        return None

    # -- run lifecycle -----------------------------------------------------

    @classmethod
    def resume(cls, task: Task, setting: ComponentSetting, config: WorkflowConfig,
               out_dir: str | Path, **kwargs) -> "OnePhaseWorkflow":
        """Continue from the checkpoint in ``out_dir``.

        The checkpoint must have been written by a run with the same config,
        components, and task; anything else is configuration drift.
        """
        wf = cls(task, setting, config, out_dir=out_dir, **kwargs)
        path = wf.out_dir / LEDGER_FILENAME
        restored = Ledger.restore(path)
        if restored.run_hash != wf.run_hash:
            raise DriftError(
                f"checkpoint {path} was written by run {restored.run_hash[:12]}, "
                f"but this configuration hashes to {wf.run_hash[:12]}"
            )
        wf.ledger = restored
        wf._expected_annotated = restored.n_annotated
        wf._resumed = True
        return wf

    def _rng(self, tag: str, round_index: int) -> np.random.Generator:
        return stream(self.config.random_seed, tag, round_index)

    def _request_labels(self, doc_ids: Sequence[int]) -> np.ndarray:
        """Label documents outside the ledger (for control samples and cutoffs)."""
        gold_vals = self.task.gold[self.task.corpus.index_of(np.asarray(doc_ids, dtype=np.int64))]
        return self.setting.labeler.label(doc_ids, gold_vals, self._rng("labeler:out-of-band", 0))

    def _begin_run(self):
        ctx = RunContext(
            corpus=self.task.corpus,
            rng_for=lambda tag: self._rng(tag, 0),
            request_labels=self._request_labels,
        )
        self.setting.begin_run(ctx)
        self._began = True

    def _annotated_mask(self) -> np.ndarray:
        ann = self.ledger._annotations
        return np.fromiter(
            (int(d) in ann for d in self.task.corpus.doc_ids), bool, self.task.corpus.n_docs
        )

    def _train_and_score(self):
        ids = self.ledger.annotated_ids()
        if not ids:
            self._scores = None
            return
        rows = self.task.corpus.index_of(np.asarray(ids, dtype=np.int64))
        labels = np.fromiter(self.ledger.labels().values(), bool, len(ids))
        self.setting.ranker.fit(self.task.corpus.features[rows], labels)
        self._scores = self.setting.ranker.score_all(self.task.corpus)

    def _evaluate_stop(self, frozen: FrozenLedger) -> bool:
        return bool(self.setting.stopping_rule.should_stop(frozen, self._scores))

    def _checkpoint(self, round_index: int, final: bool):
        if self.out_dir is None:
            return
        if self.config.save_scores and self._scores is not None:
            write_score_dump(score_dump_path(self.out_dir, round_index), self._scores)
        every = self.config.checkpoint_every
        due = every is not None and (round_index + 1) % every == 0
        if due or final:
            self.ledger.persist(self.out_dir / LEDGER_FILENAME)

    def _select_batch(self, round_index: int) -> np.ndarray:
        mask = self._annotated_mask()
        candidates = self.task.corpus.doc_ids[~mask]
        if candidates.size == 0:
            return candidates
        cand_scores = self._scores[~mask] if self._scores is not None else None
        batch = self.setting.sampler.select(
            self.config.batch_size, candidates, cand_scores, self._rng("sampler", round_index)
        )
        batch = np.asarray(batch, dtype=np.int64)
        if batch.size > self.config.batch_size:
            raise IntegrityError(
                f"sampler returned {batch.size} docs for batch_size {self.config.batch_size}"
            )
        if np.unique(batch).size != batch.size:
            raise IntegrityError("sampler returned duplicate doc_ids")
        bad = np.setdiff1d(batch, candidates)
        if bad.size:
            raise IntegrityError(f"sampler returned already-labeled doc_ids {bad.tolist()}")
        return batch

    def _run_round(self, round_index: int) -> RoundOutcome:
        if round_index == 0:
            batch = np.asarray(self.config.seed_docs, dtype=np.int64)
        else:
            batch = self._select_batch(round_index)
        gold_vals = self.task.gold[self.task.corpus.index_of(batch)] if batch.size else np.zeros(0, bool)
        labels = self.setting.labeler.label(batch, gold_vals, self._rng("labeler", round_index))
        self.ledger.new_round()
        self.ledger.annotate(batch, labels)
        self._expected_annotated += batch.size
        if self.ledger.n_annotated != self._expected_annotated:
            raise IntegrityError(
                f"ledger holds {self.ledger.n_annotated} annotations, "
                f"workflow expected {self._expected_annotated}"
            )
        self._train_and_score()
        frozen = self.ledger.freeze()
        self._stopped = self._evaluate_stop(frozen)
        self._checkpoint(round_index, final=False)
        return RoundOutcome(round_index, frozen, self._stopped, self._scores)

    def _exhausted(self) -> bool:
        return self.ledger.n_annotated >= self.task.corpus.n_docs

    def _capped(self) -> bool:
        cap = self.config.max_round_exec
        return cap is not None and self.ledger.n_rounds - 1 >= cap

    def __iter__(self) -> Iterator[RoundOutcome]:
        if not self._began:
            self._begin_run()
        if self._resumed and self.ledger.n_rounds > 0:
            # Rebuild the in-memory model from the checkpoint and re-derive the
            # stop decision for the last completed round.
            self._train_and_score()
            self._stopped = self._evaluate_stop(self.ledger.freeze())
        while True:
            if self._stopped or self._capped() or (self.ledger.n_rounds > 0 and self._exhausted()):
                break
            outcome = self._run_round(self.ledger.n_rounds)
            yield outcome
        self._finish()

    def _finish(self):
        if not self._finished:
            self._finished = True
            if self.out_dir is not None and self.ledger.n_rounds > 0:
                self.ledger.persist(self.out_dir / LEDGER_FILENAME)

    @property
    def finished(self) -> bool:
        return self._finished

    @property
    def stopped(self) -> bool:
        return self._stopped

    @property
    def scores(self) -> np.ndarray | None:
        return self._scores

    def metrics(self, measures: Sequence) -> MetricRecord:
        """Measures on the current round boundary's state."""
        return compute_metrics(self.task, self.ledger.freeze(), self._scores, measures)


def parse_cutoff_policy(policy) -> tuple[str, int | None]:
    """Accept ``"oracle"`` or ``"sample:<n>"`` (n > 0)."""
    if isinstance(policy, (tuple, list)) and len(policy) == 2:
        kind, n = policy
    elif policy == "oracle":
        kind, n = "oracle", None
    elif isinstance(policy, str) and policy.startswith("sample:"):
        kind, n = "sample", policy.split(":", 1)[1]
    else:
        raise ValueError(f"cutoff policy must be 'oracle' or 'sample:<n>', got {policy!r}")
    if kind == "oracle":
        return "oracle", None
    if kind != "sample":
        raise ValueError(f"unknown cutoff policy kind {kind!r}")
    n = int(n)
    if n < 1:
        raise ValueError("sample size must be >= 1")
    return "sample", n


@dataclass(frozen=True)
class PhaseTwoResult:
    """The second-phase review set: a prefix of the final unreviewed ranking."""

    review_ids: np.ndarray
    depth: int
    needed: int
    shortfall: bool
    policy: str


class TwoPhaseWorkflow(OnePhaseWorkflow):
    """Training phase identical to one-phase; afterwards, review the top of
    the final ranking down to a cutoff chosen by the configured policy."""

    kind = "two-phase"

    def __init__(self, task, setting, config, target_recall: float,
                 cutoff_policy: str = "oracle", out_dir=None):
        self.target_recall = float(target_recall)
        self.cutoff_policy = parse_cutoff_policy(cutoff_policy)
        super().__init__(task, setting, config, out_dir=out_dir)

    def _hash_extra(self):
        return {
            "target_recall": self.target_recall,
            "cutoff_policy": list(self.cutoff_policy),
        }

    def phase_two(self) -> PhaseTwoResult:
        """Compute the phase-two review set; callable once training has ended."""
        if not self._finished:
            raise IntegrityError("phase two starts only after the training iterator ends")
        if self._scores is None:
            raise NotTrainedError("phase two needs a trained model ranking")
        corpus, gold = self.task.corpus, self.task.gold
        mask = self._annotated_mask()
        found = int((mask & gold).sum())
        need = max(0, positive_quota(self.target_recall, int(gold.sum())) - found)
        unrev_ids = corpus.doc_ids[~mask]
        unrev_scores = self._scores[~mask]
        ranked = rank(unrev_scores, unrev_ids)

        if need == 0:
            result = PhaseTwoResult(ranked[:0], 0, 0, False, self.cutoff_policy[0])
        elif self.cutoff_policy[0] == "oracle":
            gold_by_id = dict(zip(corpus.doc_ids.tolist(), gold.tolist()))
            csum = np.cumsum([gold_by_id[int(d)] for d in ranked])
            hit = np.nonzero(csum >= need)[0]
            if hit.size:
                depth = int(hit[0]) + 1
                result = PhaseTwoResult(ranked[:depth], depth, need, False, "oracle")
            else:
                result = PhaseTwoResult(ranked, int(ranked.size), need, True, "oracle")
        else:
            result = self._sample_cutoff(ranked, need)

        if self.out_dir is not None:
            payload = {
                "policy": result.policy,
                "target_recall": self.target_recall,
                "needed": result.needed,
                "depth": result.depth,
                "shortfall": result.shortfall,
                "review_ids": [int(d) for d in result.review_ids],
            }
            (self.out_dir / "phase2.json").write_text(
                json.dumps(payload, separators=(",", ":")) + "\n", encoding="utf-8"
            )
        return result

    def _sample_cutoff(self, ranked: np.ndarray, need: int) -> PhaseTwoResult:
        """Estimate the cutoff from a labeled random sample, assuming positives
        are spread uniformly within each of 10 equal-depth rank strata."""
        n_sample = self.cutoff_policy[1]
        rng = self._rng("phase2:sample", self.ledger.n_rounds)
        take = min(n_sample, ranked.size)
        sample = np.sort(rng.choice(ranked, size=take, replace=False))
        sample_labels = np.asarray(
            self.setting.labeler.label(
                sample,
                self.task.gold[self.task.corpus.index_of(sample)],
                self._rng("labeler:phase2", self.ledger.n_rounds),
            ),
            dtype=bool,
        )
        sample_pos = set(sample[sample_labels].tolist())
        sample_all = set(sample.tolist())

        strata = np.array_split(ranked, min(10, ranked.size) or 1)
        cum = 0.0
        depth_before = 0
        for stratum in strata:
            members = [int(d) for d in stratum if int(d) in sample_all]
            hits = sum(1 for d in members if d in sample_pos)
            est = stratum.size * (hits / len(members)) if members else 0.0
            if est > 0 and cum + est >= need:
                per_doc = est / stratum.size
                within = math.ceil((need - cum) / per_doc)
                depth = depth_before + min(within, stratum.size)
                return PhaseTwoResult(ranked[:depth], depth, need, False, "sample")
            cum += est
            depth_before += stratum.size
        return PhaseTwoResult(ranked, int(ranked.size), need, True, "sample")


@dataclass(frozen=True)
class ReplayRound:
    """One round of a frozen-mode replay."""

    round: int
    ledger: FrozenLedger
    record: MetricRecord | None
    stopped: bool | None


def replay(
    ledger,
    scores_by_round: Callable[[int], np.ndarray | None] | None = None,
    measures: Sequence = (),
    gold: np.ndarray | None = None,
    doc_ids: np.ndarray | None = None,
    stopping_rule=None,
    corpus: Corpus | None = None,
    random_seed: int = 0,
    request_labels: Callable | None = None,
) -> Iterator[ReplayRound]:
    """Re-emit a completed run's per-round states without sampling, training,
    or scoring, evaluating measures and (optionally) a new stopping rule.

    ``scores_by_round`` loads the persisted score dump for a round, or None
    when absent. Rounds that had no annotations yet are reported without
    metrics (there was no model to score with); any other round missing its
    dump raises :class:`ReplayError` naming the round.
    """
    measures = list(measures)
    if measures and (gold is None or doc_ids is None):
        raise ValueError("measure evaluation requires gold and doc_ids")
    if stopping_rule is not None:
        ctx = RunContext(
            corpus=corpus,
            rng_for=lambda tag: stream(random_seed, tag, 0),
            request_labels=request_labels,
        )
        stopping_rule.begin_run(ctx)

    shadow = Ledger(run_hash=ledger.run_hash)
    by_round: dict[int, list[tuple[int, bool]]] = {}
    for doc_id, (rnd, label) in ledger._annotations.items():
        by_round.setdefault(rnd, []).append((doc_id, label))

    for r in range(ledger.n_rounds):
        shadow.new_round()
        recs = by_round.get(r, [])
        shadow.annotate([d for d, _ in recs], [lab for _, lab in recs])
        frozen = shadow.freeze()
        scores = scores_by_round(r) if scores_by_round is not None else None
        trained = frozen.n_annotated > 0

        record = None
        if measures:
            if scores is None and trained:
                raise ReplayError(f"round {r}: score dump required for measure evaluation")
            if trained:
                record = evaluate_measures(measures, frozen, scores, gold, doc_ids, r)

        stopped = None
        if stopping_rule is not None:
            if scores is None and getattr(stopping_rule, "requires_scores", False) and trained:
                raise ReplayError(f"round {r}: score dump required for stopping rule")
            if scores is not None or not getattr(stopping_rule, "requires_scores", False):
                stopped = bool(stopping_rule.should_stop(frozen, scores))
        yield ReplayRound(r, frozen, record, stopped)

"""The labeling record of a run and its on-disk formats.

The ledger is the sufficient statistic of a workflow: which documents were
labeled what, on which round. Persisting it (plus optional per-round score
dumps) is enough to restart a crashed run or to replay a finished one without
re-sampling, re-training, or re-scoring.

File formats
------------
Ledger file (``ledger.jsonl``): line 1 is the header
``{"format":"tarsim-ledger","version":1,"run_hash":<hex>,"n_rounds":R}``,
followed by one record ``{"round":r,"doc_id":d,"label":b}`` per annotation,
in annotation order.

Score dump (``scores.<round>.bin``): an 8-byte little-endian count followed
by that many little-endian 8-byte floats, in corpus doc order.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import IntegrityError, LedgerLoadError

__all__ = [
    "Ledger",
    "FrozenLedger",
    "write_score_dump",
    "read_score_dump",
    "score_dump_path",
]

FORMAT_NAME = "tarsim-ledger"
FORMAT_VERSION = 1


class _LedgerView:
    """Read-only interface shared by live and frozen ledgers."""

    _annotations: dict[int, tuple[int, bool]]
    _round_counts: list[int]
    _round_pos: list[int]
    run_hash: str

    @property
    def n_rounds(self) -> int:
        return len(self._round_counts)

    @property
    def n_annotated(self) -> int:
        return len(self._annotations)

    @property
    def n_pos_annotated(self) -> int:
        return sum(self._round_pos)

    def is_annotated(self, doc_id: int) -> bool:
        return int(doc_id) in self._annotations

    def annotation(self, doc_id: int) -> tuple[int, bool]:
        """Return (round, label) for an annotated document."""
        return self._annotations[int(doc_id)]

    def annotated_ids(self) -> list[int]:
        """Annotated doc ids in annotation order."""
        return list(self._annotations)

    def labels(self) -> dict[int, bool]:
        """doc_id -> recorded label, in annotation order."""
        return {d: lab for d, (_, lab) in self._annotations.items()}

    def round_of(self, doc_id: int) -> int:
        return self._annotations[int(doc_id)][0]

    def round_counts(self) -> tuple[int, ...]:
        """Annotations recorded per round."""
        return tuple(self._round_counts)

    def round_pos_counts(self) -> tuple[int, ...]:
        """Positive annotations recorded per round."""
        return tuple(self._round_pos)

    def gain_curve(self) -> list[tuple[int, int]]:
        """Per-round cumulative (docs reviewed, positives found)."""
        out, x, y = [], 0, 0
        for n, p in zip(self._round_counts, self._round_pos):
            x += n
            y += p
            out.append((x, y))
        return out

    def _records(self) -> Iterable[tuple[int, int, bool]]:
        for doc_id, (rnd, label) in self._annotations.items():
            yield rnd, doc_id, label

    def persist(self, path: str | Path) -> None:
        """Write the ledger file atomically (temp file + rename)."""
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            header = {
                "format": FORMAT_NAME,
                "version": FORMAT_VERSION,
                "run_hash": self.run_hash,
                "n_rounds": self.n_rounds,
            }
            fh.write(json.dumps(header, separators=(",", ":")) + "\n")
            for rnd, doc_id, label in self._records():
                rec = {"round": rnd, "doc_id": doc_id, "label": bool(label)}
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
        os.replace(tmp, path)

    def _structure(self):
        return (dict(self._annotations), tuple(self._round_counts), tuple(self._round_pos))

    def __eq__(self, other) -> bool:
        if not isinstance(other, _LedgerView):
            return NotImplemented
        return self._structure() == other._structure()

    def __repr__(self):
        return (
            f"{type(self).__name__}(n_rounds={self.n_rounds}, "
            f"n_annotated={self.n_annotated}, n_pos_annotated={self.n_pos_annotated})"
        )


class FrozenLedger(_LedgerView):
    """Immutable snapshot of a ledger; safe to share and keep."""

    def __init__(self, annotations: dict[int, tuple[int, bool]],
                 round_counts: Sequence[int], round_pos: Sequence[int], run_hash: str):
        self._annotations = dict(annotations)
        self._round_counts = list(round_counts)
        self._round_pos = list(round_pos)
        self.run_hash = run_hash


class Ledger(_LedgerView):
    """Mutable labeling record; single-writer, one per workflow."""

    def __init__(self, run_hash: str = "0"):
        self._annotations = {}
        self._round_counts = []
        self._round_pos = []
        self.run_hash = run_hash

    def new_round(self) -> int:
        """Open the next round and return its index (the seed round is 0)."""
        self._round_counts.append(0)
        self._round_pos.append(0)
        return len(self._round_counts) - 1

    def annotate(self, doc_ids: Sequence[int], labels: Sequence[bool]) -> tuple[int, int]:
        """Record labels for ``doc_ids`` under the current round.

        Returns (n_annotated, n_pos_annotated) after the update. A document
        may be annotated only once, ever.
        """
        if len(doc_ids) != len(labels):
            raise ValueError(f"{len(doc_ids)} doc_ids but {len(labels)} labels")
        if not self._round_counts:
            raise IntegrityError("no round open; call new_round() first")
        current = len(self._round_counts) - 1
        for doc_id, label in zip(doc_ids, labels):
            d = int(doc_id)
            if d in self._annotations:
                raise IntegrityError(f"doc_id {d} already annotated")
            self._annotations[d] = (current, bool(label))
            self._round_counts[current] += 1
            if label:
                self._round_pos[current] += 1
        return self.n_annotated, self.n_pos_annotated

    def freeze(self) -> FrozenLedger:
        return FrozenLedger(self._annotations, self._round_counts, self._round_pos, self.run_hash)

    @classmethod
    def restore(cls, path: str | Path) -> "Ledger":
        """Rebuild a ledger from :meth:`persist` output."""
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise LedgerLoadError(f"{path}: empty ledger file")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError:
            raise LedgerLoadError(f"{path}: corrupt header")
        if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
            raise LedgerLoadError(f"{path}: not a {FORMAT_NAME} file")
        if header.get("version") != FORMAT_VERSION:
            raise LedgerLoadError(f"{path}: unsupported version {header.get('version')!r}")
        n_rounds = header.get("n_rounds")
        if not isinstance(n_rounds, int) or n_rounds < 0:
            raise LedgerLoadError(f"{path}: bad n_rounds {n_rounds!r}")

        ledger = cls(run_hash=str(header.get("run_hash", "0")))
        for idx, line in enumerate(lines[1:]):
            try:
                rec = json.loads(line)
                rnd, doc_id, label = rec["round"], rec["doc_id"], rec["label"]
                if not (isinstance(rnd, int) and isinstance(doc_id, int) and isinstance(label, bool)):
                    raise TypeError
            except (json.JSONDecodeError, KeyError, TypeError):
                raise LedgerLoadError(f"{path}: corrupt record {idx}")
            if rnd >= n_rounds or rnd < ledger.n_rounds - 1:
                raise LedgerLoadError(f"{path}: record {idx} has out-of-order round {rnd}")
            while ledger.n_rounds <= rnd:
                ledger.new_round()
            try:
                ledger.annotate([doc_id], [label])
            except IntegrityError as exc:
                raise LedgerLoadError(f"{path}: record {idx}: {exc}")
        while ledger.n_rounds < n_rounds:
            ledger.new_round()
        return ledger


def score_dump_path(directory: str | Path, round_index: int) -> Path:
    return Path(directory) / f"scores.{round_index}.bin"


def write_score_dump(path: str | Path, scores: np.ndarray) -> None:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ValueError("scores must be one-dimensional")
    if scores.size and not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(struct.pack("<Q", scores.size))
        fh.write(scores.astype("<f8").tobytes())
    os.replace(tmp, path)


def read_score_dump(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise LedgerLoadError(f"{path}: truncated score dump")
    (count,) = struct.unpack("<Q", raw[:8])
    if len(raw) != 8 + 8 * count:
        raise LedgerLoadError(f"{path}: expected {count} scores, found {(len(raw) - 8) // 8}")
    scores = np.frombuffer(raw[8:], dtype="<f8").astype(np.float64)
    if scores.size and not np.all(np.isfinite(scores)):
        raise LedgerLoadError(f"{path}: non-finite scores")
    return scores

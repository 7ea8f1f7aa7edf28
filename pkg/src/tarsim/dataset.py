"""Document collections, gold labels, and the task stream.

A :class:`Corpus` is an immutable collection of documents with sparse feature
vectors; a :class:`Task` pairs it with one binary gold labeling. Corpora can
be read from and written to a plain-text sparse format (one line per document,
``doc_id feat:val feat:val ...``) that round-trips float weights bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, CorpusFormatError, IntegrityError

__all__ = [
    "Corpus",
    "LabelStore",
    "Task",
    "ingest_sparse",
    "write_sparse",
    "build_tfidf",
    "load_labels",
    "task_feeder",
]


@dataclass(frozen=True)
class Corpus:
    """Immutable document collection.

    ``doc_ids`` are unique, sorted ascending; row ``i`` of ``features`` holds
    the vector of document ``doc_ids[i]``.
    """

    doc_ids: np.ndarray
    features: sp.csr_matrix
    _hash_cache: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        ids = np.asarray(self.doc_ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ValueError("doc_ids must be one-dimensional")
        if ids.size and ids.min() < 0:
            raise IntegrityError("doc_ids must be non-negative")
        if ids.size != np.unique(ids).size:
            raise IntegrityError("doc_ids must be unique")
        if not np.all(ids[:-1] < ids[1:]):
            raise IntegrityError("doc_ids must be sorted ascending")
        feats = sp.csr_matrix(self.features, dtype=np.float64)
        if feats.shape[0] != ids.size:
            raise IntegrityError("one feature row per document required")
        if feats.nnz and not np.all(np.isfinite(feats.data)):
            raise ValueError("feature values must be finite")
        feats.sort_indices()
        ids.setflags(write=False)
        object.__setattr__(self, "doc_ids", ids)
        object.__setattr__(self, "features", feats)

    @property
    def n_docs(self) -> int:
        return int(self.doc_ids.size)

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    def index_of(self, doc_ids: Sequence[int]) -> np.ndarray:
        """Map document ids to row positions."""
        pos = np.searchsorted(self.doc_ids, doc_ids)
        if np.any(pos >= self.n_docs) or np.any(self.doc_ids[pos] != doc_ids):
            raise KeyError("unknown doc_id in lookup")
        return pos

    def content_hash(self) -> str:
        """Stable hex digest of ids and feature data; cached after first call."""
        if not self._hash_cache:
            h = hashlib.sha256()
            h.update(np.int64(self.n_docs).tobytes())
            h.update(np.int64(self.n_features).tobytes())
            h.update(self.doc_ids.astype("<i8").tobytes())
            h.update(self.features.indptr.astype("<i8").tobytes())
            h.update(self.features.indices.astype("<i8").tobytes())
            h.update(self.features.data.astype("<f8").tobytes())
            self._hash_cache.append(h.hexdigest())
        return self._hash_cache[0]


class LabelStore:
    """Dense gold labels for one or more categories over a document set."""

    def __init__(self, labels: dict[str, dict[int, bool]]):
        self._labels = {cat: dict(col) for cat, col in labels.items()}

    @property
    def categories(self) -> list[str]:
        return list(self._labels)

    def lookup(self, category: str, doc_id: int) -> bool:
        return self._labels[category][doc_id]

    def vector(self, category: str, corpus: Corpus) -> np.ndarray:
        """Gold labels for ``category`` aligned with corpus doc order."""
        try:
            col = self._labels[category]
        except KeyError:
            raise ConfigurationError(f"unknown category {category!r}") from None
        try:
            return np.array([col[int(d)] for d in corpus.doc_ids], dtype=bool)
        except KeyError as exc:
            raise IntegrityError(f"doc_id {exc.args[0]} has no gold label in {category!r}") from None


@dataclass(frozen=True)
class Task:
    """One gold labeling of a corpus: the unit an experiment iterates over."""

    corpus: Corpus
    category: str
    gold: np.ndarray

    def __post_init__(self):
        gold = np.asarray(self.gold, dtype=bool)
        if gold.shape != (self.corpus.n_docs,):
            raise IntegrityError("gold vector must align with corpus doc_ids")
        gold.setflags(write=False)
        object.__setattr__(self, "gold", gold)

    @property
    def n_pos(self) -> int:
        return int(self.gold.sum())

    def identity(self) -> str:
        h = hashlib.sha256()
        h.update(self.corpus.content_hash().encode())
        h.update(self.category.encode())
        h.update(np.packbits(self.gold).tobytes())
        return h.hexdigest()


def ingest_sparse(path: str | Path) -> Corpus:
    """Read a corpus from the sparse text format.

    Each non-blank line is ``doc_id feat:val feat:val ...``. Duplicate doc
    ids are an integrity error; any malformed token is a parse error naming
    the line number.
    """
    rows: dict[int, dict[int, float]] = {}
    n_features = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                doc_id = int(parts[0])
            except ValueError:
                raise CorpusFormatError(f"line {lineno}: bad doc_id {parts[0]!r}")
            if doc_id < 0:
                raise CorpusFormatError(f"line {lineno}: negative doc_id {doc_id}")
            if doc_id in rows:
                raise IntegrityError(f"line {lineno}: duplicate doc_id {doc_id}")
            entries: dict[int, float] = {}
            for tok in parts[1:]:
                feat, sep, val = tok.partition(":")
                if not sep:
                    raise CorpusFormatError(f"line {lineno}: expected feat:val, got {tok!r}")
                try:
                    fidx = int(feat)
                    fval = float(val)
                except ValueError:
                    raise CorpusFormatError(f"line {lineno}: bad feature token {tok!r}")
                if fidx < 0:
                    raise CorpusFormatError(f"line {lineno}: negative feature index {fidx}")
                if not math.isfinite(fval):
                    raise CorpusFormatError(f"line {lineno}: non-finite value {val!r}")
                if fidx in entries:
                    raise CorpusFormatError(f"line {lineno}: repeated feature index {fidx}")
                entries[fidx] = fval
                n_features = max(n_features, fidx + 1)
            rows[doc_id] = entries

    doc_ids = sorted(rows)
    mat = sp.lil_matrix((len(doc_ids), n_features), dtype=np.float64)
    for i, d in enumerate(doc_ids):
        for fidx, fval in rows[d].items():
            mat[i, fidx] = fval
    return Corpus(np.array(doc_ids, dtype=np.int64), mat.tocsr())


def write_sparse(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus in the sparse text format; inverse of :func:`ingest_sparse`.

    Values are written with ``repr`` so finite floats round-trip bit-exactly.
    """
    feats = corpus.features
    with open(path, "w", encoding="utf-8") as fh:
        for i, d in enumerate(corpus.doc_ids):
            start, end = feats.indptr[i], feats.indptr[i + 1]
            toks = [
                f"{feats.indices[k]}:{float(feats.data[k])!r}" for k in range(start, end)
            ]
            fh.write(" ".join([str(int(d))] + toks) + "\n")


def build_tfidf(tokenized_docs: Sequence[Sequence[str]]) -> Corpus:
    """Vectorize tokenized documents with log-tf, ln(N/df) idf, L2-normalized rows.

    Vocabulary indices follow first appearance, so the output is deterministic
    for a given input order. Documents are assigned ids 0..N-1.
    """
    if len(tokenized_docs) == 0:
        raise ValueError("at least one document required")
    vocab: dict[str, int] = {}
    counts: list[dict[int, int]] = []
    for doc in tokenized_docs:
        tf: dict[int, int] = {}
        for tok in doc:
            idx = vocab.setdefault(tok, len(vocab))
            tf[idx] = tf.get(idx, 0) + 1
        counts.append(tf)

    n_docs = len(tokenized_docs)
    df = np.zeros(len(vocab), dtype=np.int64)
    for tf in counts:
        for idx in tf:
            df[idx] += 1
    idf = np.log(n_docs / df) if len(vocab) else np.zeros(0)

    mat = sp.lil_matrix((n_docs, len(vocab)), dtype=np.float64)
    for i, tf in enumerate(counts):
        row = {idx: (1.0 + math.log(c)) * idf[idx] for idx, c in tf.items()}
        norm = math.sqrt(sum(v * v for v in row.values()))
        if norm > 0:
            for idx, v in row.items():
                mat[i, idx] = v / norm
    return Corpus(np.arange(n_docs, dtype=np.int64), mat.tocsr())


def load_labels(path: str | Path) -> LabelStore:
    """Read gold labels from CSV with header ``doc_id,<cat1>,<cat2>,...``."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CorpusFormatError("label file is empty")
        if not header or header[0] != "doc_id":
            raise CorpusFormatError("label file header must start with doc_id")
        cats = header[1:]
        labels: dict[str, dict[int, bool]] = {c: {} for c in cats}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CorpusFormatError(f"line {lineno}: expected {len(header)} fields")
            try:
                doc_id = int(row[0])
            except ValueError:
                raise CorpusFormatError(f"line {lineno}: bad doc_id {row[0]!r}")
            for cat, val in zip(cats, row[1:]):
                if val not in ("0", "1"):
                    raise CorpusFormatError(f"line {lineno}: label must be 0 or 1, got {val!r}")
                labels[cat][doc_id] = val == "1"
    return LabelStore(labels)


def task_feeder(corpus: Corpus, labels: LabelStore, categories: Sequence[str]) -> Iterator[Task]:
    """Yield one :class:`Task` per category, sharing ``corpus`` by reference.

    Unknown categories raise before the first task is yielded.
    """
    gold_vectors = [labels.vector(cat, corpus) for cat in categories]

    def _gen():
        for cat, gold in zip(categories, gold_vectors):
            yield Task(corpus, cat, gold)

    return _gen()

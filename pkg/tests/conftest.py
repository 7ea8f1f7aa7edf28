import csv

import numpy as np
import pytest
import scipy.sparse as sp

from tarsim import Corpus, Ledger, Task


def make_separable_task(n_docs=200, prevalence=0.1, n_features=30, seed=5,
                        category="topic", force_positive=()):
    """Synthetic linearly separable task: positives light up feature 0,
    negatives light up feature 1, everything shares background features."""
    rng = np.random.default_rng(seed)
    n_pos = max(1, round(n_docs * prevalence))
    pos_rows = set(rng.choice(n_docs, size=n_pos, replace=False).tolist())
    for doc in force_positive:
        pos_rows.add(int(doc))
    gold = np.zeros(n_docs, dtype=bool)
    gold[sorted(pos_rows)] = True

    mat = sp.lil_matrix((n_docs, n_features), dtype=np.float64)
    for i in range(n_docs):
        for j in rng.choice(np.arange(2, n_features), size=5, replace=False):
            mat[i, int(j)] = rng.uniform(0.1, 1.0)
        signal = 0 if gold[i] else 1
        mat[i, signal] = rng.uniform(0.8, 1.2)
    corpus = Corpus(np.arange(n_docs, dtype=np.int64), mat.tocsr())
    return Task(corpus, category, gold)


def write_dataset_files(tmp_path, tasks):
    """Write one corpus file plus a label CSV covering all tasks' categories."""
    from tarsim import write_sparse

    corpus = tasks[0].corpus
    corpus_path = tmp_path / "corpus.txt"
    write_sparse(corpus, corpus_path)
    labels_path = tmp_path / "labels.csv"
    with open(labels_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["doc_id"] + [t.category for t in tasks])
        for i, doc_id in enumerate(corpus.doc_ids):
            writer.writerow([int(doc_id)] + [int(t.gold[i]) for t in tasks])
    return corpus_path, labels_path


def ledger_from_rounds(rounds, start_id=0):
    """Build a ledger whose rounds have the given (n_docs, n_pos) shapes."""
    ledger = Ledger()
    next_id = start_id
    for n, p in rounds:
        ledger.new_round()
        ids = list(range(next_id, next_id + n))
        labels = [i - next_id < p for i in ids]
        ledger.annotate(ids, labels)
        next_id += n
    return ledger


@pytest.fixture
def small_task():
    return make_separable_task(n_docs=120, prevalence=0.15, seed=3)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tarsim import (
    CostStructure,
    Ledger,
    OptimisticCost,
    PrecisionAtK,
    RecallAtK,
    RPrec,
    cost_trajectory,
    optimistic_cost,
    parse_measure,
    rank,
)
from tarsim.errors import ConfigurationError
from tarsim.evaluation import MetricRecord, evaluate_measures, positive_quota


class TestRank:
    def test_descending_scores(self):
        assert rank(np.array([0.2, 0.9]), np.array([1, 2])).tolist() == [2, 1]

    def test_ties_ascending_doc_id(self):
        assert rank(np.array([0.5, 0.5, 0.5]), np.array([5, 3, 9])).tolist() == [3, 5, 9]

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            rank(np.array([np.nan]), np.array([1]))

    @settings(max_examples=50, deadline=None)
    @given(perm_seed=st.integers(0, 2**31), n=st.integers(1, 30), seed=st.integers(0, 2**31))
    def test_permutation_invariance(self, perm_seed, n, seed):
        rng = np.random.default_rng(seed)
        ids = np.arange(0, 2 * n, 2)
        scores = np.round(rng.random(n), 1)  # coarse grid forces ties
        order = np.random.default_rng(perm_seed).permutation(n)
        np.testing.assert_array_equal(rank(scores, ids), rank(scores[order], ids[order]))


def naive_rank_metrics(scores, ids, gold_by_id, k):
    """Reference implementation via plain sorting and counting."""
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    ranked_gold = [gold_by_id[ids[i]] for i in order]
    total_pos = sum(ranked_gold)
    p_at_k = sum(ranked_gold[:k]) / k
    r_at_k = (sum(ranked_gold[:k]) / total_pos) if total_pos else None
    rprec = (sum(ranked_gold[:total_pos]) / total_pos) if total_pos else None
    return p_at_k, r_at_k, rprec


class TestRankMetrics:
    def test_perfect_ranking_rprec(self):
        gold = np.array([True, True, False, False])
        assert RPrec().evaluate(gold) == 1.0

    def test_p_at_2_example(self):
        gold = np.array([True, False, True, False])
        assert PrecisionAtK(2).evaluate(gold) == 0.5

    def test_k_beyond_view_counts_misses(self):
        gold = np.array([True])
        assert PrecisionAtK(4).evaluate(gold) == 0.25

    def test_absent_when_no_positives(self):
        gold = np.zeros(5, dtype=bool)
        assert RPrec().evaluate(gold) is None
        assert RecallAtK(3).evaluate(gold) is None

    def test_matches_naive_reference_on_random_instances(self):
        rng = np.random.default_rng(404)
        for _ in range(1000):
            n = 20
            ids = np.sort(rng.choice(1000, size=n, replace=False))
            scores = np.round(rng.random(n), 1)
            gold = rng.random(n) < 0.3
            gold_by_id = dict(zip(ids.tolist(), gold.tolist()))
            k = int(rng.integers(1, 25))
            ranked_gold = gold[np.lexsort((ids, -scores))]
            expected = naive_rank_metrics(scores.tolist(), ids.tolist(), gold_by_id, k)
            assert PrecisionAtK(k).evaluate(ranked_gold) == expected[0]
            assert RecallAtK(k).evaluate(ranked_gold) == expected[1]
            assert RPrec().evaluate(ranked_gold) == expected[2]


class TestMeasureStrings:
    def test_parse_and_name_roundtrip(self):
        for text in ("P@10", "R@5", "RPrec", "OptCost@0.8;25-5-5-1", "OptCost@0.75;1-1-1-1"):
            assert parse_measure(text).name == text

    def test_unknown_measure(self):
        with pytest.raises(ConfigurationError):
            parse_measure("nDCG@10")

    def test_bad_cost_structure(self):
        with pytest.raises(ConfigurationError):
            parse_measure("OptCost@0.8;1-2-3")

    def test_cost_structure_str_trims_integers(self):
        assert str(CostStructure(25, 5, 5, 1)) == "25-5-5-1"
        assert str(CostStructure(2.5, 1, 0.5, 1)) == "2.5-1-0.5-1"

    def test_negative_cost_rejected(self):
        with pytest.raises(ValueError):
            CostStructure(-1, 0, 0, 0)


def brute_force_optimistic_cost(reviewed, gold_by_id, scores_by_id, target, cs):
    """Search every phase-2 prefix for the cheapest one meeting the quota."""
    all_ids = sorted(gold_by_id)
    n_pos = sum(gold_by_id[d] for d in all_ids)
    found = sum(1 for d in reviewed if gold_by_id[d])
    quota = max(0, math.ceil(target * n_pos - 1e-9))
    phase1 = cs.a_p * found + cs.a_n * (len(reviewed) - found)
    unreviewed = sorted(
        (d for d in all_ids if d not in reviewed),
        key=lambda d: (-scores_by_id[d], d),
    )
    best = None
    for depth in range(len(unreviewed) + 1):
        prefix = unreviewed[:depth]
        pos = sum(1 for d in prefix if gold_by_id[d])
        if found + pos >= quota:
            cost = phase1 + cs.b_p * pos + cs.b_n * (depth - pos)
            best = cost if best is None else min(best, cost)
            break  # deeper prefixes only cost more
    if best is None:  # quota unreachable: cost the full list
        pos = sum(1 for d in unreviewed if gold_by_id[d])
        best = phase1 + cs.b_p * pos + cs.b_n * (len(unreviewed) - pos)
    return best


def _ledger_with(reviewed, labels):
    ledger = Ledger()
    ledger.new_round()
    ledger.annotate(list(reviewed), list(labels))
    return ledger.freeze()


class TestOptimisticCost:
    def _worked_example(self):
        # ten docs; gold positives {1, 2, 3}; reviewed doc 1 (pos) and doc 4 (neg);
        # scores put the unreviewed ranking as [2, 5, 3, ...]
        doc_ids = np.arange(1, 11)
        gold = np.isin(doc_ids, [1, 2, 3])
        scores = np.array([0.99, 0.95, 0.85, 0.98, 0.90, 0.5, 0.4, 0.3, 0.2, 0.1])
        ledger = _ledger_with([1, 4], [True, False])
        return ledger, scores, gold, doc_ids

    def test_worked_example_total_41(self):
        ledger, scores, gold, doc_ids = self._worked_example()
        bk = optimistic_cost(ledger, scores, gold, doc_ids, 0.8, CostStructure(25, 5, 5, 1))
        assert bk.total == 41.0
        assert bk.as_dict() == {
            "phase1_pos": 25.0,
            "phase1_neg": 5.0,
            "phase2_pos": 10.0,
            "phase2_neg": 1.0,
            "total": 41.0,
        }
        assert bk.depth == 3 and not bk.shortfall

    def test_target_zero_phase1_only(self):
        ledger, scores, gold, doc_ids = self._worked_example()
        bk = optimistic_cost(ledger, scores, gold, doc_ids, 0.0, CostStructure(25, 5, 5, 1))
        assert bk.total == 30.0 and bk.depth == 0

    def test_unit_costs_count_documents(self):
        ledger, scores, gold, doc_ids = self._worked_example()
        bk = optimistic_cost(ledger, scores, gold, doc_ids, 0.8, CostStructure(1, 1, 1, 1))
        assert bk.total == 2 + bk.depth

    def test_lowering_target_never_raises_cost(self):
        ledger, scores, gold, doc_ids = self._worked_example()
        cs = CostStructure(25, 5, 5, 1)
        totals = [
            optimistic_cost(ledger, scores, gold, doc_ids, t, cs).total
            for t in (1.0, 0.8, 0.5, 0.2, 0.0)
        ]
        assert totals == sorted(totals, reverse=True) or all(
            a >= b for a, b in zip(totals, totals[1:])
        )

    def test_full_review_terminal_cost(self):
        doc_ids = np.arange(6)
        gold = np.array([True, False, True, False, False, False])
        ledger = _ledger_with(range(6), gold.tolist())
        bk = optimistic_cost(ledger, np.zeros(6), gold, doc_ids, 1.0, CostStructure(25, 5, 5, 1))
        assert bk.total == 25 * 2 + 5 * 4

    def test_quota_ceiling_robust_to_float_noise(self):
        assert positive_quota(0.8, 3) == 3  # 2.4 -> 3
        assert positive_quota(0.8, 5) == 4  # exactly 4.0
        assert positive_quota(0.8, 55) == 44
        assert positive_quota(1.0, 7) == 7
        assert positive_quota(0.0, 7) == 0

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(1234)
        for _ in range(1000):
            n = int(rng.integers(1, 13))
            doc_ids = np.sort(rng.choice(40, size=n, replace=False))
            gold = rng.random(n) < 0.4
            scores = np.round(rng.random(n), 1)
            n_reviewed = int(rng.integers(0, n + 1))
            reviewed_rows = rng.choice(n, size=n_reviewed, replace=False)
            reviewed = [int(doc_ids[i]) for i in reviewed_rows]
            labels = [bool(gold[i]) for i in reviewed_rows]
            ledger = _ledger_with(reviewed, labels)
            target = float(rng.choice([0.0, 0.2, 0.5, 0.8, 1.0]))
            cs = CostStructure(*rng.integers(0, 26, size=4).tolist())
            got = optimistic_cost(ledger, scores, gold, doc_ids, target, cs)
            expected = brute_force_optimistic_cost(
                set(reviewed),
                dict(zip(doc_ids.tolist(), gold.tolist())),
                dict(zip(doc_ids.tolist(), scores.tolist())),
                target,
                cs,
            )
            assert got.total == expected


class TestCostTrajectory:
    def _states(self):
        doc_ids = np.arange(10)
        gold = np.isin(doc_ids, [0, 1, 2, 3])
        scores = np.linspace(1.0, 0.1, 10)
        ledger = Ledger()
        states = []
        reviewed_per_round = [[0], [1, 4], [2, 5], [3, 6], [7, 8]]
        for batch in reviewed_per_round:
            ledger.new_round()
            ledger.annotate(batch, [bool(gold[d]) for d in batch])
            states.append((ledger.freeze(), scores))
        return states, gold, doc_ids

    def test_bucket_sums_equal_totals(self):
        states, gold, doc_ids = self._states()
        cs = CostStructure(10, 10, 10, 1)
        traj = cost_trajectory(states, gold, doc_ids, 0.8, cs)
        for r, bk in enumerate(traj.rounds):
            again = optimistic_cost(states[r][0], states[r][1], gold, doc_ids, 0.8, cs)
            assert bk.total == again.total == sum(
                (bk.phase1_pos, bk.phase1_neg, bk.phase2_pos, bk.phase2_neg)
            )

    def test_target_round_first_recall_hit(self):
        states, gold, doc_ids = self._states()
        traj = cost_trajectory(states, gold, doc_ids, 0.8, CostStructure(1, 1, 1, 1))
        # positives found per round: 1, 2, 3, 4 -> 0.75 at round 2, 1.0 at round 3
        assert traj.target_round == 3

    def test_after_target_phase2_zero_and_total_growing(self):
        states, gold, doc_ids = self._states()
        traj = cost_trajectory(states, gold, doc_ids, 0.8, CostStructure(1, 1, 1, 1))
        tr = traj.target_round
        tail = traj.rounds[tr:]
        for bk in tail:
            assert bk.phase2_pos == 0 and bk.phase2_neg == 0
        totals = [bk.total for bk in tail]
        assert all(a <= b for a, b in zip(totals, totals[1:]))

    def test_optimal_round_ties_earliest(self):
        doc_ids = np.arange(4)
        gold = np.array([True, False, False, False])
        scores = np.array([0.9, 0.5, 0.4, 0.3])
        ledger = Ledger()
        states = []
        ledger.new_round()
        ledger.annotate([0], [True])
        states.append((ledger.freeze(), scores))
        ledger.new_round()
        states.append((ledger.freeze(), scores))  # empty round: same cost
        traj = cost_trajectory(states, gold, doc_ids, 1.0, CostStructure(1, 1, 1, 1))
        assert traj.rounds[0].total == traj.rounds[1].total
        assert traj.optimal_round == 0


class TestEvaluateMeasures:
    def test_views_and_cost_buckets(self):
        doc_ids = np.arange(6)
        gold = np.array([True, True, False, False, False, False])
        scores = np.array([0.9, 0.2, 0.8, 0.7, 0.1, 0.05])
        ledger = _ledger_with([0], [True])
        record = evaluate_measures(
            ["RPrec", OptimisticCost(0.8, (25, 5, 5, 1))], ledger, scores, gold, doc_ids, 4
        )
        assert record.round == 4
        assert record.recall == 0.5
        assert record.values["RPrec/full"] == 0.5
        # unreviewed view: docs 1..5, one positive (doc 1) ranked below the negatives
        assert record.values["RPrec/unreviewed"] == 0.0
        name = "OptCost@0.8;25-5-5-1"
        assert record.values[f"{name}/unreviewed"] is None
        bk = record.cost[name]
        assert bk["total"] == sum(v for k, v in bk.items() if k != "total")

    def test_all_reviewed_unreviewed_view_absent(self):
        doc_ids = np.arange(3)
        gold = np.array([True, False, False])
        ledger = _ledger_with([0, 1, 2], [True, False, False])
        record = evaluate_measures(["RPrec", "P@2"], ledger, np.ones(3) / 2, gold, doc_ids, 0)
        assert record.values["RPrec/unreviewed"] is None
        assert record.values["P@2/unreviewed"] is None

    def test_round0_views_agree_before_any_labels(self):
        doc_ids = np.arange(4)
        gold = np.array([True, False, True, False])
        ledger = Ledger()
        ledger.new_round()
        record = evaluate_measures(
            ["P@2", "RPrec"], ledger.freeze(), np.array([0.9, 0.8, 0.7, 0.6]), gold, doc_ids, 0
        )
        assert record.values["P@2/full"] == record.values["P@2/unreviewed"]
        assert record.values["RPrec/full"] == record.values["RPrec/unreviewed"]

    def test_json_nulls_for_absent(self):
        doc_ids = np.arange(2)
        gold = np.zeros(2, dtype=bool)
        ledger = _ledger_with([0], [False])
        record = evaluate_measures(["RPrec"], ledger, np.array([0.5, 0.5]), gold, doc_ids, 1)
        payload = record.to_json()
        assert '"RPrec/full":null' in payload
        assert MetricRecord.from_json(payload) == record

    def test_metric_record_roundtrip(self):
        doc_ids = np.arange(5)
        gold = np.array([True, False, True, False, False])
        ledger = _ledger_with([0, 3], [True, False])
        record = evaluate_measures(
            ["P@3", "R@2", "RPrec", "OptCost@0.8;25-5-5-1"],
            ledger, np.linspace(1, 0, 5), gold, doc_ids, 2,
        )
        assert MetricRecord.from_json(record.to_json()) == record

import numpy as np
import pytest
import scipy.sparse as sp

from tarsim import (
    BatchPrecisionRule,
    BudgetRule,
    Corpus,
    FixedRoundRule,
    KneeRule,
    QuantRule,
    TargetSampleRule,
)
from tarsim.components import RunContext, max_slope_ratio
from tarsim.errors import NotTrainedError

from conftest import ledger_from_rounds


def brute_force_max_rho(curve):
    """Independent pure-Python slope-ratio search over all prior points."""
    if len(curve) < 2:
        return None
    xi, yi = curve[-1]
    best = None
    for xj, yj in curve[:-1]:
        if xj <= 0 or xj >= xi:
            continue
        rho = (yj / xj) / ((yi - yj + 1) / (xi - xj))
        if best is None or rho > best:
            best = rho
    return best


def random_gain_curves(n_curves, rng, max_rounds=12):
    for _ in range(n_curves):
        rounds = rng.integers(2, max_rounds + 1)
        curve, x, y = [], 0, 0
        for _ in range(rounds):
            dx = int(rng.integers(0, 50))
            dy = int(rng.integers(0, dx + 1))
            x, y = x + dx, y + dy
            curve.append((x, y))
        yield curve


class TestFixedRound:
    def test_fires_after_configured_training_rounds(self):
        ledger = ledger_from_rounds([(1, 1)] + [(5, 1)] * 20)
        assert FixedRoundRule(max_round=20).should_stop(ledger.freeze(), None)

    def test_zero_rounds_fires_after_seed(self):
        ledger = ledger_from_rounds([(1, 1)])
        assert FixedRoundRule(max_round=0).should_stop(ledger.freeze(), None)

    def test_not_before_the_cap(self):
        ledger = ledger_from_rounds([(1, 1)] + [(5, 1)] * 19)
        assert not FixedRoundRule(max_round=20).should_stop(ledger.freeze(), None)


def _curve_ledger(points):
    """Ledger whose cumulative gain curve equals the given points."""
    rounds = []
    px = py = 0
    for x, y in points:
        rounds.append((x - px, y - py))
        px, py = x, y
    return ledger_from_rounds(rounds)


class TestKnee:
    def test_hand_worked_example(self):
        curve = [(100, 90), (200, 95), (300, 96)]
        assert max_slope_ratio(curve) == pytest.approx(25.71428571428571)
        ledger = _curve_ledger(curve).freeze()
        # adaptive threshold = 156 - min(96, 150) = 60 > 25.71: keep going
        assert not KneeRule(min_reviewed=0).should_stop(ledger, None)

    def test_fires_on_sharp_knee(self):
        # early rate 1.0, tail rate (1+1)/400: rho = 200 >= 156 - 100
        ledger = _curve_ledger([(100, 100), (500, 101)]).freeze()
        assert KneeRule(min_reviewed=0).should_stop(ledger, None)

    def test_min_reviewed_gates(self):
        ledger = _curve_ledger([(100, 100), (500, 101)]).freeze()
        assert not KneeRule(min_reviewed=1000).should_stop(ledger, None)

    def test_no_positives_never_stops(self):
        ledger = _curve_ledger([(100, 0), (200, 0), (300, 0)]).freeze()
        assert not KneeRule(min_reviewed=0, threshold=None).should_stop(ledger, None)

    def test_single_round_no_decision(self):
        assert max_slope_ratio([(100, 10)]) is None
        ledger = _curve_ledger([(100, 10)]).freeze()
        assert not KneeRule(min_reviewed=0).should_stop(ledger, None)

    def test_zero_x_prior_points_skipped(self):
        assert max_slope_ratio([(0, 0), (100, 10)]) is None

    def test_matches_brute_force_on_random_curves(self):
        rng = np.random.default_rng(2024)
        checked = 0
        for curve in random_gain_curves(1000, rng):
            for i in range(2, len(curve) + 1):
                prefix = curve[:i]
                assert max_slope_ratio(prefix) == brute_force_max_rho(prefix)
                checked += 1
        assert checked > 1000


class TestBudget:
    def test_budget_gates_until_reviewed(self):
        ledger = _curve_ledger([(100, 100), (500, 101)]).freeze()
        assert not BudgetRule(budget=1000, fixed_rho=6.0).should_stop(ledger, None)
        assert BudgetRule(budget=500, fixed_rho=6.0).should_stop(ledger, None)

    def test_degenerate_config_fires_at_first_computable_round(self):
        # empty seed round: the first slope ratio exists at round 2
        rounds = [(0, 0), (10, 5), (10, 3)]
        rules = BudgetRule(budget=0, fixed_rho=0.0)
        states = []
        for upto in range(1, len(rounds) + 1):
            ledger = ledger_from_rounds(rounds[:upto]).freeze()
            states.append(rules.should_stop(ledger, None))
        assert states == [False, False, True]

    def test_agrees_with_brute_force_at_fixed_rho(self):
        rng = np.random.default_rng(77)
        for curve in random_gain_curves(300, rng):
            ledger = _curve_ledger(curve).freeze()
            got = BudgetRule(budget=0, fixed_rho=6.0).should_stop(ledger, None)
            rho = brute_force_max_rho([p for p in ledger.gain_curve()])
            expected = rho is not None and rho >= 6.0
            assert got == expected


class TestBatchPrecision:
    def test_worked_example(self):
        ledger = ledger_from_rounds([(10, 5), (200, 0), (200, 5)])
        assert BatchPrecisionRule(threshold=0.1, slack=2).should_stop(ledger.freeze(), None)

    def test_needs_enough_training_rounds(self):
        ledger = ledger_from_rounds([(10, 5), (200, 0)])
        assert not BatchPrecisionRule(threshold=0.1, slack=2).should_stop(ledger.freeze(), None)

    def test_zero_threshold_never_fires(self):
        ledger = ledger_from_rounds([(10, 5), (200, 0), (200, 0)])
        assert not BatchPrecisionRule(threshold=0.0, slack=2).should_stop(ledger.freeze(), None)

    def test_seed_round_excluded(self):
        # seed round is full of positives; training batches are clean
        ledger = ledger_from_rounds([(10, 10), (50, 0)])
        assert BatchPrecisionRule(threshold=0.5, slack=1).should_stop(ledger.freeze(), None)

    def test_recent_hot_batch_blocks(self):
        ledger = ledger_from_rounds([(10, 5), (100, 0), (100, 60)])
        assert not BatchPrecisionRule(threshold=0.5, slack=2).should_stop(ledger.freeze(), None)


def _context(corpus, gold_by_id, seed=0):
    from tarsim.rng import stream

    def request_labels(ids):
        return np.array([gold_by_id[int(d)] for d in ids], dtype=bool)

    return RunContext(
        corpus=corpus,
        rng_for=lambda tag: stream(seed, tag, 0),
        request_labels=request_labels,
    )


def _tiny_corpus(n):
    return Corpus(np.arange(n, dtype=np.int64), sp.csr_matrix((n, 2)))


class TestTargetSample:
    def test_default_sample_size(self):
        assert TargetSampleRule(target_recall=0.8).sample_size == 2399

    def test_partial_review_below_target(self):
        corpus = _tiny_corpus(6)
        gold = {0: True, 1: True, 2: True, 3: False, 4: False, 5: False}
        rule = TargetSampleRule(target_recall=0.8, sample_size=6)
        rule.begin_run(_context(corpus, gold))
        assert set(rule._sample_pos.tolist()) == {0, 1, 2}
        ledger = ledger_from_rounds([])
        ledger.new_round()
        ledger.annotate([0, 1], [True, True])  # 2/3 < 0.8
        assert not rule.should_stop(ledger.freeze(), None)
        ledger.new_round()
        ledger.annotate([2], [True])  # 3/3 >= 0.8
        assert rule.should_stop(ledger.freeze(), None)

    def test_target_zero_fires_immediately(self):
        corpus = _tiny_corpus(4)
        rule = TargetSampleRule(target_recall=0.0, sample_size=4)
        rule.begin_run(_context(corpus, {0: True, 1: False, 2: False, 3: False}))
        ledger = ledger_from_rounds([(1, 0)])
        assert rule.should_stop(ledger.freeze(), None)

    def test_zero_sample_positives_never_fires(self):
        corpus = _tiny_corpus(4)
        rule = TargetSampleRule(target_recall=0.0, sample_size=4)
        rule.begin_run(_context(corpus, {i: False for i in range(4)}))
        ledger = ledger_from_rounds([(4, 0)])
        assert not rule.should_stop(ledger.freeze(), None)

    def test_sample_capped_at_corpus(self):
        corpus = _tiny_corpus(10)
        rule = TargetSampleRule(target_recall=0.5)
        rule.begin_run(_context(corpus, {i: i < 2 for i in range(10)}))
        assert rule._sample_pos.size == 2


class TestQuant:
    def _rule_with_docs(self, n, **kwargs):
        rule = QuantRule(**kwargs)
        rule.begin_run(_context(_tiny_corpus(n), {}))
        return rule

    def test_worked_example(self):
        # 10 positives reviewed, unreviewed scores sum 2.5 -> estimate 0.8
        rule = self._rule_with_docs(15, target_recall=0.8)
        ledger = ledger_from_rounds([(10, 10)])  # docs 0..9 reviewed, all positive
        scores = np.concatenate([np.full(10, 0.9), np.full(5, 0.5)])
        assert rule.should_stop(ledger.freeze(), scores)
        strict = self._rule_with_docs(15, target_recall=0.81)
        assert not strict.should_stop(ledger.freeze(), scores)

    def test_zero_unreviewed_scores_estimate_one(self):
        rule = self._rule_with_docs(12, target_recall=1.0)
        ledger = ledger_from_rounds([(4, 2)])
        scores = np.concatenate([np.full(4, 0.7), np.zeros(8)])
        assert rule.should_stop(ledger.freeze(), scores)

    def test_no_evidence_never_fires(self):
        rule = self._rule_with_docs(5, target_recall=0.1)
        ledger = ledger_from_rounds([(2, 0)])
        assert not rule.should_stop(ledger.freeze(), np.zeros(5))

    def test_ci_variant_is_more_conservative(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            n = int(rng.integers(3, 30))
            reviewed = int(rng.integers(1, n))
            pos = int(rng.integers(0, reviewed + 1))
            scores = rng.random(n)
            target = float(rng.random())
            ledger = ledger_from_rounds([(reviewed, pos)])
            plain = self._rule_with_docs(n, target_recall=target)
            ci = self._rule_with_docs(n, target_recall=target, use_ci=True)
            frozen = ledger.freeze()
            if ci.should_stop(frozen, scores):
                assert plain.should_stop(frozen, scores)

    def test_requires_scores(self):
        rule = self._rule_with_docs(5, target_recall=0.5)
        with pytest.raises(NotTrainedError):
            rule.should_stop(ledger_from_rounds([(2, 1)]).freeze(), None)

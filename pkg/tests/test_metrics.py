import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrvadapt.errors import DataError, MetricError, PlanError, ValidationError
from hrvadapt.metrics import (
    PredictionSet,
    auc_variance_bound,
    concat_predictions,
    loso_folds,
    pooled_evaluate,
    pr_auc,
    roc_auc,
)


def pset(scores, labels, subject="s"):
    scores = np.asarray(scores, dtype=float)
    return PredictionSet(
        subject_ids=tuple(subject for _ in scores),
        window_indices=np.arange(scores.size),
        scores=scores,
        labels=np.asarray(labels),
    )


def brute_roc(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (pos.size * neg.size)


def brute_pr(scores, labels):
    # threshold enumeration over descending unique scores, stepwise area
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int(labels.sum())
    area, prev_recall = 0.0, 0.0
    for thr in sorted(set(scores), reverse=True):
        keep = scores >= thr
        tp = int(labels[keep].sum())
        recall = tp / n_pos
        precision = tp / int(keep.sum())
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


class TestRocAuc:
    def test_four_point_case(self):
        assert roc_auc(pset([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])) == pytest.approx(0.75)
        assert brute_roc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)

    def test_perfect_separation(self):
        assert roc_auc(pset([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])) == 1.0

    def test_all_ties_give_half(self):
        assert roc_auc(pset([0.5] * 6, [1, 0, 1, 0, 1, 0])) == pytest.approx(0.5)

    def test_single_class_rejected(self):
        with pytest.raises(MetricError):
            roc_auc(pset([0.1, 0.2], [1, 1]))

    @given(seed=st.integers(0, 10**6))
    @settings(max_examples=40, deadline=None)
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = rng.integers(4, 60)
        labels = rng.integers(0, 2, n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        scores = rng.normal(size=n).round(2)  # rounding forces ties
        a = roc_auc(pset(scores, labels))
        b = roc_auc(pset(np.exp(3.0 * scores), labels))
        assert a == pytest.approx(b, abs=1e-12)

    def test_complement_under_negation(self):
        rng = np.random.default_rng(5)
        scores = rng.permutation(20) / 20.0  # tie-free
        labels = rng.integers(0, 2, 20)
        labels[0], labels[1] = 0, 1
        a = roc_auc(pset(scores, labels))
        b = roc_auc(pset(-scores, labels))
        assert a + b == pytest.approx(1.0, abs=1e-12)


class TestPrAuc:
    def test_perfect_separation(self):
        assert pr_auc(pset([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])) == 1.0

    def test_constant_scores_give_prevalence(self):
        assert pr_auc(pset([0.5] * 10, [1, 1, 0, 0, 0, 0, 0, 0, 0, 0])) == pytest.approx(0.2)

    def test_random_scores_approach_prevalence(self):
        rng = np.random.default_rng(17)
        n = 10**5
        labels = (rng.random(n) < 0.2).astype(int)
        scores = rng.random(n)
        assert pr_auc(pset(scores, labels)) == pytest.approx(0.2, abs=0.01)

    def test_six_point_hand_case_vs_enumeration(self):
        scores = [0.9, 0.8, 0.8, 0.4, 0.3, 0.1]
        labels = [1, 0, 1, 1, 0, 0]
        assert pr_auc(pset(scores, labels)) == pytest.approx(brute_pr(scores, labels), abs=1e-15)

    def test_no_positives_rejected(self):
        with pytest.raises(MetricError):
            pr_auc(pset([0.1, 0.2], [0, 0]))


def test_both_aucs_match_brute_force_on_random_instances():
    rng = np.random.default_rng(99)
    for _ in range(100):
        n = int(rng.integers(4, 101))
        labels = rng.integers(0, 2, n)
        if labels.sum() == 0:
            labels[0] = 1
        if labels.sum() == n:
            labels[0] = 0
        scores = rng.choice(np.linspace(0, 1, max(2, n // 2)), size=n)  # heavy ties
        ps = pset(scores, labels)
        assert roc_auc(ps) == pytest.approx(brute_roc(scores, labels), abs=1e-12)
        assert pr_auc(ps) == pytest.approx(brute_pr(scores, labels), abs=1e-12)


class TestVarianceBound:
    def test_perfect_classifier_degenerates(self):
        # Hanley-McNeil term is exactly 0 at A=1; so is the distribution-free
        assert auc_variance_bound(1.0, 50, 50) == 0.0

    def test_magnitude_against_direct_formula(self):
        a, n_pos, n_neg = 0.80, 6000, 54000
        q1 = a / (2 - a)
        q2 = 2 * a * a / (1 + a)
        hanley = (a * (1 - a) + (n_pos - 1) * (q1 - a * a) + (n_neg - 1) * (q2 - a * a)) / (
            n_pos * n_neg
        )
        expected = max(hanley, a * (1 - a) / min(n_pos, n_neg))
        got = auc_variance_bound(a, n_pos, n_neg)
        assert got == pytest.approx(expected, rel=1e-12)
        assert 1e-6 < got < 1e-4  # same order as the published footnote bound

    def test_distribution_free_term_symmetric(self):
        assert auc_variance_bound(0.7, 10, 1000) >= 0.7 * 0.3 / 10
        assert auc_variance_bound(0.7, 1000, 10) >= 0.7 * 0.3 / 10

    def test_rejects_out_of_range(self):
        with pytest.raises(ValidationError):
            auc_variance_bound(1.2, 10, 10)


class TestFolds:
    def test_seventeen_subjects_seventeen_folds(self):
        plan = loso_folds([f"s{i}" for i in range(17)])
        assert len(plan) == 17

    def test_validation_sets_partition(self):
        ids = ["a", "b", "c", "d"]
        plan = loso_folds(ids)
        seen = [v for val, _ in plan.folds for v in val]
        assert sorted(seen) == sorted(ids)
        for val, train in plan.folds:
            assert not set(val) & set(train)
            assert sorted(set(val) | set(train)) == sorted(ids)

    def test_single_subject_rejected(self):
        with pytest.raises(PlanError):
            loso_folds(["only"])


class TestPooled:
    def test_single_fold_equals_direct(self):
        ps = pset([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        row = pooled_evaluate([ps], variant="x")
        assert row.roc_auc == pytest.approx(roc_auc(ps))
        assert row.pr_auc == pytest.approx(pr_auc(ps))
        assert (row.n_pos, row.n_neg) == (2, 2)

    def test_pooled_equals_concatenated_recomputation(self):
        rng = np.random.default_rng(3)
        folds = [
            pset(rng.random(30), rng.integers(0, 2, 30), subject=f"s{i}") for i in range(4)
        ]
        row = pooled_evaluate(folds, variant="x")
        pooled = concat_predictions(folds)
        assert row.roc_auc == pytest.approx(roc_auc(pooled), abs=1e-15)
        assert row.pr_auc == pytest.approx(pr_auc(pooled), abs=1e-15)

    def test_duplicate_keys_rejected(self):
        a = pset([0.1, 0.2], [0, 1], subject="same")
        b = pset([0.3, 0.4], [1, 0], subject="same")
        with pytest.raises(DataError):
            pooled_evaluate([a, b])

import numpy as np
import pytest

from hsipipe.errors import ConfigError, DataError
from hsipipe.metrics import ConfusionMatrix, compute_metrics, cross_validate, stratified_folds
from hsipipe.svm import LabeledDataset

# fixed 4x4 fixture; rows = true class (1..4), cols = predicted
FIXTURE = np.array(
    [
        [8, 2, 0, 0],
        [1, 9, 0, 0],
        [0, 1, 9, 0],
        [0, 0, 0, 10],
    ],
    dtype=np.int64,
)


def hand_one_vs_all(counts, i):
    tp = counts[i, i]
    fn = counts[i].sum() - tp
    fp = counts[:, i].sum() - tp
    tn = counts.sum() - tp - fn - fp
    return tp, fp, tn, fn


class TestComputeMetrics:
    def test_sensitivity_eq(self):
        # class with TP=8, FN=2 -> sensitivity 0.8
        cm = ConfusionMatrix(FIXTURE)
        report = compute_metrics(cm)
        assert report.sensitivity[1] == 8 / 10
        tp, fp, tn, fn = hand_one_vs_all(FIXTURE, 0)
        assert report.sensitivity[1] == tp / (tp + fn)

    def test_specificity_eq(self):
        counts = np.array([[5, 0], [1, 9]])
        cm9 = ConfusionMatrix(
            np.array([[8, 0, 0, 0], [0, 5, 0, 0], [1, 0, 9, 0], [0, 0, 0, 0]])
        )
        report = compute_metrics(cm9)
        # for class 2 (index 1): TN = 18, FP = 0
        tp, fp, tn, fn = hand_one_vs_all(cm9.counts, 1)
        assert report.specificity[2] == tn / (tn + fp)

    def test_specificity_nine_of_ten(self):
        # class 1 sees TN=9, FP=1 -> specificity 0.9
        counts = np.array([[2, 0, 0, 0], [1, 9, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
        report = compute_metrics(ConfusionMatrix(counts))
        tp, fp, tn, fn = hand_one_vs_all(counts, 0)
        assert (tn, fp) == (9, 1)
        assert report.specificity[1] == 0.9

    def test_diagonal_matrix_perfect(self):
        cm = ConfusionMatrix(np.diag([5, 6, 7, 8]))
        report = compute_metrics(cm)
        assert report.accuracy == 1.0
        for c in (1, 2, 3, 4):
            assert report.sensitivity[c] == 1.0
            assert report.specificity[c] == 1.0

    def test_accuracy_cross_derivation(self):
        cm = ConfusionMatrix(FIXTURE)
        report = compute_metrics(cm)
        trace_form = np.trace(FIXTURE) / FIXTURE.sum()
        tp_sum_form = sum(hand_one_vs_all(FIXTURE, i)[0] for i in range(4)) / FIXTURE.sum()
        assert abs(report.accuracy - trace_form) <= 1e-12
        assert abs(trace_form - tp_sum_form) <= 1e-12

    def test_zero_denominators_undefined(self):
        counts = np.zeros((4, 4), dtype=np.int64)
        counts[0, 0] = 5  # only class 1 present
        report = compute_metrics(ConfusionMatrix(counts))
        assert report.sensitivity[2] is None  # no true class-2 samples
        assert report.specificity[2] == 1.0
        assert report.sensitivity[1] == 1.0

    def test_empty_matrix_rejected(self):
        with pytest.raises(DataError):
            compute_metrics(ConfusionMatrix(np.zeros((4, 4), dtype=np.int64)))

    def test_row_sums_are_class_counts(self):
        true = np.array([1, 1, 2, 3, 4, 4, 4])
        pred = np.array([1, 2, 2, 3, 4, 1, 4])
        cm = ConfusionMatrix.from_predictions(true, pred)
        for i, c in enumerate((1, 2, 3, 4)):
            assert cm.counts[i].sum() == np.count_nonzero(true == c)


class TestFolds:
    def test_each_sample_exactly_once(self):
        labels = np.repeat([1, 2, 3, 4], 25)
        folds = stratified_folds(labels, 10, seed=0)
        seen = np.concatenate(folds)
        assert sorted(seen.tolist()) == list(range(100))

    def test_stratification(self):
        labels = np.repeat([1, 2], 20)
        for fold in stratified_folds(labels, 5, seed=1):
            fold_labels = labels[fold]
            assert np.count_nonzero(fold_labels == 1) == 4
            assert np.count_nonzero(fold_labels == 2) == 4

    def test_class_smaller_than_k_rejected(self):
        labels = np.array([1, 1, 1, 2, 2, 2, 2, 2])
        with pytest.raises(ConfigError):
            stratified_folds(labels, 4, seed=0)

    def test_k_below_two_rejected(self):
        with pytest.raises(ConfigError):
            stratified_folds(np.array([1, 2]), 1, seed=0)


def cv_dataset(n_per_class=30, seed=0):
    rng = np.random.default_rng(seed)
    centers = {1: [0, 0], 2: [4, 0], 3: [0, 4], 4: [4, 4]}
    samples, labels = [], []
    for code, center in centers.items():
        samples.append(np.asarray(center)[None, :] + 0.1 * rng.normal(size=(n_per_class, 2)))
        labels.extend([code] * n_per_class)
    return LabeledDataset(np.vstack(samples), np.array(labels))


class TestCrossValidate:
    def test_separable_high_accuracy(self):
        report, cm = cross_validate(cv_dataset(), k=5, kernel="linear", C=1.0, seed=0)
        assert report.accuracy >= 0.99
        assert cm.total == 120

    def test_leave_one_out_accounting(self):
        data = cv_dataset(n_per_class=5)
        report, cm = cross_validate(data, k=5, kernel="linear", C=1.0, seed=0)
        assert cm.total == data.n_samples
        assert len(report.per_fold) == 5

    def test_deterministic(self):
        data = cv_dataset()
        r1, c1 = cross_validate(data, k=4, kernel="linear", C=1.0, seed=42)
        r2, c2 = cross_validate(data, k=4, kernel="linear", C=1.0, seed=42)
        assert np.array_equal(c1.counts, c2.counts)
        assert r1.per_fold == r2.per_fold

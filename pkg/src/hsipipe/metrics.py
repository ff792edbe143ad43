"""Evaluation: confusion matrices, one-vs-all metrics, stratified k-fold CV."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .labeling import CLASS_NAMES, TISSUE_CLASSES
from .svm import LabeledDataset, train_svm


@dataclass
class ConfusionMatrix:
    """counts[i, j] = samples of true class order[i] predicted as order[j]."""

    counts: np.ndarray
    class_order: tuple = TISSUE_CLASSES

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.class_order)
        if self.counts.shape != (k, k):
            raise DataError("confusion matrix shape must match its class order")
        if np.any(self.counts < 0):
            raise DataError("confusion counts must be >= 0")

    @staticmethod
    def from_predictions(true: np.ndarray, pred: np.ndarray) -> "ConfusionMatrix":
        true = np.asarray(true, dtype=np.int64)
        pred = np.asarray(pred, dtype=np.int64)
        if true.shape != pred.shape:
            raise DataError("true/pred length mismatch")
        k = len(TISSUE_CLASSES)
        counts = np.zeros((k, k), dtype=np.int64)
        for i, ct in enumerate(TISSUE_CLASSES):
            sel = true == ct
            for j, cp in enumerate(TISSUE_CLASSES):
                counts[i, j] = int(np.count_nonzero(pred[sel] == cp))
        return ConfusionMatrix(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def one_vs_all(self, class_code: int) -> dict:
        i = self.class_order.index(class_code)
        tp = int(self.counts[i, i])
        fn = int(self.counts[i].sum() - tp)
        fp = int(self.counts[:, i].sum() - tp)
        tn = self.total - tp - fn - fp
        return {"tp": tp, "fp": fp, "tn": tn, "fn": fn}

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.class_order != other.class_order:
            raise DataError("cannot add confusion matrices with different orders")
        return ConfusionMatrix(self.counts + other.counts)


@dataclass
class MetricsReport:
    """Per-class one-vs-all sensitivity/specificity, overall accuracy,
    optional per-fold accuracies. Undefined ratios (zero denominator) are None."""

    sensitivity: dict
    specificity: dict
    accuracy: float
    per_fold: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "sensitivity": {CLASS_NAMES[c]: self.sensitivity[c] for c in sorted(self.sensitivity)},
            "specificity": {CLASS_NAMES[c]: self.specificity[c] for c in sorted(self.specificity)},
            "per_fold_accuracy": self.per_fold,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def _ratio(num: int, den: int):
    return None if den == 0 else num / den


def compute_metrics(cm: ConfusionMatrix, per_fold: list | None = None) -> MetricsReport:
    if cm.total == 0:
        raise DataError("empty confusion matrix")
    sens = {}
    spec = {}
    for c in cm.class_order:
        parts = cm.one_vs_all(c)
        sens[c] = _ratio(parts["tp"], parts["tp"] + parts["fn"])
        spec[c] = _ratio(parts["tn"], parts["tn"] + parts["fp"])
    accuracy = float(np.trace(cm.counts)) / cm.total
    return MetricsReport(sens, spec, accuracy, per_fold or [])


def stratified_folds(labels: np.ndarray, k: int, seed: int) -> list:
    """Seeded stratified split; every sample lands in exactly one fold."""
    if k < 2:
        raise ConfigError("k-fold CV needs k >= 2")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds: list = [[] for _ in range(k)]
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        if idx.size < k:
            raise ConfigError(f"class {int(c)} has {idx.size} samples, fewer than k={k}")
        perm = rng.permutation(idx)
        for f in range(k):
            folds[f].extend(perm[f::k].tolist())
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


def cross_validate(
    data: LabeledDataset,
    k: int = 10,
    kernel: str = "linear",
    C: float = 1.0,
    params: dict | None = None,
    seed: int = 0,
):
    """Stratified k-fold CV; returns (MetricsReport, aggregate ConfusionMatrix)."""
    folds = stratified_folds(data.labels, k, seed)
    fold_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]
    aggregate = ConfusionMatrix(np.zeros((len(TISSUE_CLASSES),) * 2, dtype=np.int64))
    per_fold = []
    for f, test_idx in enumerate(folds):
        train_mask = np.ones(data.n_samples, dtype=bool)
        train_mask[test_idx] = False
        train_data = LabeledDataset(
            data.samples[train_mask],
            data.labels[train_mask],
            [data.provenance[i] for i in np.nonzero(train_mask)[0]],
        )
        model = train_svm(train_data, kernel=kernel, C=C, params=params, seed=fold_seeds[f])
        pred = model.predict_labels(data.samples[test_idx])
        cm = ConfusionMatrix.from_predictions(data.labels[test_idx], pred)
        aggregate = aggregate + cm
        per_fold.append(float(np.trace(cm.counts)) / max(cm.total, 1))
    report = compute_metrics(aggregate, per_fold)
    return report, aggregate

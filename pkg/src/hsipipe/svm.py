"""Soft-margin SVM with per-class probability outputs.

One binary problem per class (one-vs-rest), each solved by sequential minimal
optimization with maximal-violating-pair selection, then calibrated with a
Platt sigmoid fitted on a held-out split. Stored probabilities follow
P(class | score f) = sigmoid(A*f + B), renormalized across classes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels as K
from .cube import HSCube
from .errors import ConfigError, DataError, NumericError
from .labeling import LabelMap, TISSUE_CLASSES

KKT_TOL = 1e-3
MAX_PAIR_UPDATES = 10_000_000
CALIBRATION_FRACTION = 0.2
N_CLASSES = 4


@dataclass
class LabeledDataset:
    """Training spectra with class codes 1..4 and per-sample provenance tags."""

    samples: np.ndarray  # (n, bands) float64
    labels: np.ndarray  # (n,) int
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim != 2 or self.samples.shape[0] != self.labels.shape[0]:
            raise DataError("samples and labels must align as (n, bands) and (n,)")
        if not self.provenance:
            self.provenance = [""] * self.samples.shape[0]
        if len(self.provenance) != self.samples.shape[0]:
            raise DataError("provenance length must equal sample count")
        present = set(int(v) for v in np.unique(self.labels))
        if not present <= set(TISSUE_CLASSES):
            raise DataError(f"labels outside tissue classes: {sorted(present)}")
        if len(present) < 2:
            raise DataError("training needs at least 2 distinct classes")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_features(self) -> int:
        return self.samples.shape[1]

    @property
    def classes(self) -> list:
        return sorted(int(v) for v in np.unique(self.labels))


def extract_dataset(
    cube: HSCube,
    labels: LabelMap,
    max_per_class: int | None = None,
    seed: int = 0,
    provenance: str = "",
) -> LabeledDataset:
    """Collect labeled pixels (optionally capped per class, seeded subsample)."""
    if (labels.rows, labels.cols) != (cube.rows, cube.cols):
        raise DataError("label map shape does not match cube")
    pixels = cube.pixels()
    flat = labels.codes.ravel()
    rng = np.random.default_rng(seed)
    keep = []
    for c in TISSUE_CLASSES:
        idx = np.nonzero(flat == c)[0]
        if idx.size == 0:
            continue
        if max_per_class is not None and idx.size > max_per_class:
            idx = np.sort(rng.choice(idx, size=max_per_class, replace=False))
        keep.append(idx)
    if not keep:
        raise DataError("no labeled pixels in map")
    sel = np.concatenate(keep)
    return LabeledDataset(pixels[sel], flat[sel], [provenance] * sel.size)


def default_kernel_params(kind: str, n_features: int) -> dict:
    gamma = 1.0 / n_features
    if kind == "linear":
        return {}
    if kind == "rbf":
        return {"gamma": gamma}
    if kind == "polynomial":
        return {"gamma": gamma, "degree": 3, "coef0": 0.0}
    if kind == "sigmoid":
        return {"gamma": gamma, "coef0": 0.0}
    raise ConfigError(f"unknown kernel {kind!r}")


def kernel_matrix(kind: str, params: dict, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Gram matrix K[i, j] = k(X_i, Z_j)."""
    X = np.asarray(X, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    if kind == "linear":
        return X @ Z.T
    if kind == "rbf":
        g = params["gamma"]
        d2 = (
            np.einsum("nd,nd->n", X, X)[:, None]
            - 2.0 * (X @ Z.T)
            + np.einsum("md,md->m", Z, Z)[None, :]
        )
        return np.exp(-g * np.maximum(d2, 0.0))
    if kind == "polynomial":
        return (params["gamma"] * (X @ Z.T) + params["coef0"]) ** params["degree"]
    if kind == "sigmoid":
        return np.tanh(params["gamma"] * (X @ Z.T) + params["coef0"])
    raise ConfigError(f"unknown kernel {kind!r}")


def platt_fit(scores: np.ndarray, positive: np.ndarray, max_iter: int = 100):
    """Fit (A, B) of P(y=1|f) = sigmoid(A*f + B) by damped Newton iterations.

    Targets use the prior-smoothed values (n+ + 1)/(n+ + 2) and 1/(n- + 2),
    which also covers perfectly separated calibration sets.
    """
    f = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positive, dtype=bool)
    prior1 = int(pos.sum())
    prior0 = int(pos.size - prior1)
    hi = (prior1 + 1.0) / (prior1 + 2.0)
    lo = 1.0 / (prior0 + 2.0)
    t = np.where(pos, hi, lo)
    min_step = 1e-10
    sigma = 1e-12

    # Internally uses the decreasing convention p = 1/(1+exp(a*f+b)); the
    # returned pair is negated to the increasing sigmoid(A*f + B) form.
    a = 0.0
    b = np.log((prior0 + 1.0) / (prior1 + 1.0))

    def nll(av, bv):
        fab = f * av + bv
        out = np.where(
            fab >= 0,
            t * fab + np.log1p(np.exp(-fab)),
            (t - 1.0) * fab + np.log1p(np.exp(fab)),
        )
        return float(out.sum())

    fval = nll(a, b)
    for _ in range(max_iter):
        fab = f * a + b
        p = np.where(fab >= 0, np.exp(-fab) / (1.0 + np.exp(-fab)), 1.0 / (1.0 + np.exp(fab)))
        q = 1.0 - p
        d2 = p * q
        h11 = sigma + float(np.sum(f * f * d2))
        h22 = sigma + float(np.sum(d2))
        h21 = float(np.sum(f * d2))
        d1 = t - p
        g1 = float(np.sum(f * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        improved = False
        while step >= min_step:
            na, nb = a + step * da, b + step * db
            nf = nll(na, nb)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                improved = True
                break
            step /= 2.0
        if not improved:
            break
    if not (np.isfinite(a) and np.isfinite(b)):
        raise NumericError("Platt fit diverged to non-finite parameters")
    return -a, -b


@dataclass
class BinaryProblem:
    """One one-vs-rest subproblem: decision function plus Platt parameters."""

    class_code: int
    bias: float
    platt_a: float
    platt_b: float
    weights: np.ndarray | None = None  # (bands,) for the linear kernel
    support_vectors: np.ndarray | None = None  # (m, bands) otherwise
    dual_coef: np.ndarray | None = None  # alpha_i * y_i at the support vectors

    def decision(self, X: np.ndarray, kind: str, params: dict) -> np.ndarray:
        if self.weights is not None:
            return X @ self.weights + self.bias
        km = kernel_matrix(kind, params, X, self.support_vectors)
        return km @ self.dual_coef + self.bias


@dataclass
class SvmModel:
    kernel: str
    params: dict
    C: float
    n_features: int
    problems: list  # BinaryProblem, ordered by class code
    multiclass: str = "one-vs-rest"

    @property
    def classes(self) -> list:
        return [p.class_code for p in self.problems]

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.n_features:
            raise DataError(
                f"input has {X.shape[1]} features, model expects {self.n_features}"
            )
        return np.stack([p.decision(X, self.kernel, self.params) for p in self.problems], axis=1)

    def binary_probabilities(self, X: np.ndarray) -> np.ndarray:
        scores = self.decision_values(X)
        a = np.array([p.platt_a for p in self.problems])
        b = np.array([p.platt_b for p in self.problems])
        z = a[None, :] * scores + b[None, :]
        return 1.0 / (1.0 + np.exp(-z))

    def predict_proba_matrix(self, X: np.ndarray) -> np.ndarray:
        """(n, 4) rows on the probability simplex; absent classes get 0."""
        raw = self.binary_probabilities(X)
        out = np.zeros((raw.shape[0], N_CLASSES), dtype=np.float64)
        for k, code in enumerate(self.classes):
            out[:, code - 1] = raw[:, k]
        out /= out.sum(axis=1, keepdims=True)
        return out

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba_matrix(X), axis=1) + 1

    def to_json(self) -> str:
        from .labeling import CLASS_NAMES

        doc = {
            "kernel": self.kernel,
            "params": self.params,
            "C": self.C,
            "n_features": self.n_features,
            "multiclass": self.multiclass,
            "class_legend": {str(c): CLASS_NAMES[c] for c in self.classes},
            "problems": [
                {
                    "class_code": p.class_code,
                    "bias": p.bias,
                    "platt_a": p.platt_a,
                    "platt_b": p.platt_b,
                    "weights": None if p.weights is None else p.weights.tolist(),
                    "support_vectors": None
                    if p.support_vectors is None
                    else p.support_vectors.tolist(),
                    "dual_coef": None if p.dual_coef is None else p.dual_coef.tolist(),
                }
                for p in self.problems
            ],
        }
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SvmModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"model file is not valid JSON: {exc}") from exc
        try:
            problems = [
                BinaryProblem(
                    class_code=int(p["class_code"]),
                    bias=float(p["bias"]),
                    platt_a=float(p["platt_a"]),
                    platt_b=float(p["platt_b"]),
                    weights=None if p["weights"] is None else np.asarray(p["weights"]),
                    support_vectors=None
                    if p["support_vectors"] is None
                    else np.asarray(p["support_vectors"]),
                    dual_coef=None if p["dual_coef"] is None else np.asarray(p["dual_coef"]),
                )
                for p in doc["problems"]
            ]
            return SvmModel(
                kernel=doc["kernel"],
                params=doc["params"],
                C=float(doc["C"]),
                n_features=int(doc["n_features"]),
                problems=problems,
                multiclass=doc.get("multiclass", "one-vs-rest"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"model file missing/invalid field: {exc}") from exc


@dataclass
class ClassProbabilityMap:
    """Per-pixel probability vector over the 4 classes (channel c <-> code c+1)."""

    rows: int
    cols: int
    probs: np.ndarray  # (rows, cols, 4) float64

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (self.rows, self.cols, N_CLASSES):
            raise DataError("probability map must be (rows, cols, 4)")
        if self.probs.min() < 0:
            raise DataError("probabilities must be non-negative")
        sums = self.probs.sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > 1e-6:
            raise DataError("probability vectors must sum to 1 within 1e-6")

    def flat(self) -> np.ndarray:
        return self.probs.reshape(-1, N_CLASSES)


def _calibration_split(labels: np.ndarray, fraction: float, rng: np.random.Generator):
    """Stratified holdout indices (calibration, training); never empties a class."""
    n = labels.shape[0]
    hold = []
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        take = int(round(idx.size * fraction))
        if take < 1 or idx.size - take < 1:
            return None  # too small to split safely
        hold.append(rng.permutation(idx)[:take])
    hold = np.sort(np.concatenate(hold))
    train = np.setdiff1d(np.arange(n), hold, assume_unique=False)
    return train, hold


def train_svm(
    data: LabeledDataset,
    kernel: str = "linear",
    C: float = 1.0,
    params: dict | None = None,
    seed: int = 0,
    tol: float = KKT_TOL,
    max_updates: int = MAX_PAIR_UPDATES,
    calibration_fraction: float = CALIBRATION_FRACTION,
) -> SvmModel:
    """Train one-vs-rest SVMs with Platt calibration on a held-out split."""
    if C <= 0:
        raise ConfigError("C must be positive")
    merged = default_kernel_params(kernel, data.n_features)
    merged.update(params or {})
    rng = np.random.default_rng(seed)

    split = _calibration_split(data.labels, calibration_fraction, rng)
    if split is None:
        fit_idx = np.arange(data.n_samples)
        cal_idx = fit_idx
    else:
        fit_idx, cal_idx = split
    X_fit = data.samples[fit_idx]
    y_fit = data.labels[fit_idx]
    X_cal = data.samples[cal_idx]
    y_cal = data.labels[cal_idx]

    gram = kernel_matrix(kernel, merged, X_fit, X_fit)
    problems = []
    for code in data.classes:
        y = np.where(y_fit == code, 1.0, -1.0)
        if np.all(y == 1.0) or np.all(y == -1.0):
            # a class can disappear from the fit split only when splitting was
            # skipped, so this is a genuine single-class dataset
            raise DataError(f"binary problem for class {code} has a single label")
        Q = np.outer(y, y) * gram
        alpha, bias, updates, violation = K.smo_solve(Q, y, C, tol, max_updates)
        if violation > tol:
            raise NumericError(
                f"SMO did not converge for class {code}: {updates} pair updates, "
                f"KKT violation {violation:.3e} > {tol}"
            )
        sv = alpha > 0.0
        dual = alpha[sv] * y[sv]
        problem = BinaryProblem(class_code=code, bias=bias, platt_a=1.0, platt_b=0.0)
        if kernel == "linear":
            problem.weights = X_fit[sv].T @ dual
        else:
            problem.support_vectors = X_fit[sv].copy()
            problem.dual_coef = dual
        scores = problem.decision(X_cal, kernel, merged)
        problem.platt_a, problem.platt_b = platt_fit(scores, y_cal == code)
        problems.append(problem)
    return SvmModel(kernel=kernel, params=merged, C=C, n_features=data.n_features, problems=problems)


def predict_proba(model: SvmModel, cube: HSCube) -> ClassProbabilityMap:
    """Pixel-wise class probabilities over a pre-processed cube."""
    if cube.bands != model.n_features:
        raise DataError(f"cube has {cube.bands} bands, model expects {model.n_features}")
    probs = model.predict_proba_matrix(cube.pixels())
    return ClassProbabilityMap(cube.rows, cube.cols, probs.reshape(cube.rows, cube.cols, N_CLASSES))

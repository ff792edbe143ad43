"""One-band guidance images: PCA first component, or a fixed-reference
embedding lookup (t-SNE coordinates of subsampled training spectra,
transferred to new pixels by k-nearest-reference averaging)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .cube import HSCube
from .errors import ConfigError, DataError, NumericError
from .tsne import tsne_embed_1d

POWER_ITER_TOL = 1e-10
POWER_ITER_VECTOR_TOL = 1e-9
POWER_ITER_MAX = 10_000
DEFAULT_SUBSAMPLE = 2000
DEFAULT_K_REF = 5


@dataclass
class GuidanceImage:
    """Per-pixel scalar in [0, 1]; degenerate means the raw values were constant."""

    rows: int
    cols: int
    values: np.ndarray  # (rows, cols) float64
    degenerate: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.rows, self.cols):
            raise DataError("guidance values must be (rows, cols)")
        if not np.all(np.isfinite(self.values)):
            raise DataError("guidance values must be finite")

    def flat(self) -> np.ndarray:
        return self.values.ravel()


def _minmax_image(raw: np.ndarray, rows: int, cols: int) -> GuidanceImage:
    lo = raw.min()
    hi = raw.max()
    if hi > lo:
        return GuidanceImage(rows, cols, ((raw - lo) / (hi - lo)).reshape(rows, cols))
    return GuidanceImage(rows, cols, np.zeros((rows, cols)), degenerate=True)


def pca_first_component(cube: HSCube) -> GuidanceImage:
    """Project mean-centered spectra on the leading covariance eigenvector.

    Power iteration runs to 1e-10 relative eigenvalue change; the eigenvector
    sign is fixed so its largest-magnitude entry is positive.
    """
    if cube.n_pixels < 2:
        raise DataError("PCA needs at least 2 pixels")
    x = cube.pixels()
    xc = x - x.mean(axis=0, keepdims=True)
    denom = cube.n_pixels - 1
    band_var = np.einsum("nb,nb->b", xc, xc) / denom
    if np.max(band_var) == 0.0:
        raise NumericError("constant cube: covariance is zero")
    v = np.zeros(cube.bands)
    v[int(np.argmax(band_var))] = 1.0
    eigval = 0.0
    converged = False
    for _ in range(POWER_ITER_MAX):
        w = xc.T @ (xc @ v) / denom
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise NumericError("power iteration collapsed to the null space")
        new_eigval = float(v @ w)
        new_v = w / norm
        vector_change = min(np.linalg.norm(new_v - v), np.linalg.norm(new_v + v))
        v = new_v
        if (
            abs(new_eigval - eigval) <= POWER_ITER_TOL * abs(new_eigval)
            and vector_change <= POWER_ITER_VECTOR_TOL
        ):
            eigval = new_eigval
            converged = True
            break
        eigval = new_eigval
    if not converged:
        raise NumericError(
            f"power iteration did not reach {POWER_ITER_TOL} relative eigenvalue "
            f"change in {POWER_ITER_MAX} iterations"
        )
    peak = int(np.argmax(np.abs(v)))
    if v[peak] < 0:
        v = -v
    return _minmax_image(xc @ v, cube.rows, cube.cols)


@dataclass
class ReferenceTable:
    """Reference spectra with their learned 1-D coordinates (span [0, 1])."""

    spectra: np.ndarray  # (m, bands) float64
    coords: np.ndarray  # (m,) float64
    k_ref: int = DEFAULT_K_REF
    degenerate: bool = False

    def __post_init__(self):
        self.spectra = np.asarray(self.spectra, dtype=np.float64)
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.spectra.ndim != 2 or self.spectra.shape[0] != self.coords.shape[0]:
            raise DataError("reference spectra and coordinates must align")
        if self.spectra.shape[0] == 0:
            raise DataError("reference table is empty")
        if not np.all(np.isfinite(self.coords)):
            raise DataError("reference coordinates must be finite")
        if self.k_ref < 1:
            raise ConfigError("k_ref must be >= 1")

    @property
    def size(self) -> int:
        return self.spectra.shape[0]


def build_reference_table(
    training: np.ndarray,
    subsample: int = DEFAULT_SUBSAMPLE,
    seed: int = 0,
    k_ref: int = DEFAULT_K_REF,
    perplexity: float = 30.0,
    iterations: int = 1000,
    learning_rate: float = 200.0,
) -> ReferenceTable:
    """Subsample training spectra (seeded), embed them to 1-D, store the pairs."""
    training = np.asarray(training, dtype=np.float64)
    if training.ndim != 2 or training.shape[0] == 0:
        raise DataError("training spectra must be a non-empty (n, bands) array")
    n = training.shape[0]
    rng = np.random.default_rng(seed)
    if subsample >= n:
        chosen = np.arange(n)
    else:
        chosen = np.sort(rng.choice(n, size=subsample, replace=False))
    spectra = training[chosen]
    result = tsne_embed_1d(
        spectra,
        perplexity=perplexity,
        iterations=iterations,
        learning_rate=learning_rate,
        seed=seed,
    )
    coords = result.coords
    lo, hi = coords.min(), coords.max()
    if hi > lo:
        coords = (coords - lo) / (hi - lo)
        degenerate = False
    else:
        coords = np.zeros_like(coords)
        degenerate = True
    return ReferenceTable(spectra, coords, k_ref=k_ref, degenerate=degenerate)


def _k_smallest(row: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest values, ties broken by lower index."""
    n = row.shape[0]
    if k >= n:
        return np.lexsort((np.arange(n), row))[:n]
    part = np.argpartition(row, k - 1)[:k]
    kth = row[part].max()
    cand = np.nonzero(row <= kth)[0]
    return cand[np.lexsort((cand, row[cand]))][:k]


def fr_tsne_guidance(cube: HSCube, table: ReferenceTable) -> GuidanceImage:
    """Per pixel: mean coordinate of the k_ref nearest reference spectra,
    then min-max normalized over the image."""
    if cube.bands != table.spectra.shape[1]:
        raise DataError(
            f"cube has {cube.bands} bands, reference table expects {table.spectra.shape[1]}"
        )
    k = min(table.k_ref, table.size)
    x = cube.pixels()
    ref = table.spectra
    ref_sq = np.einsum("mb,mb->m", ref, ref)
    raw = np.empty(x.shape[0])
    block = max(1, int(8_000_000 // max(table.size, 1)))
    for start in range(0, x.shape[0], block):
        stop = min(x.shape[0], start + block)
        xb = x[start:stop]
        d2 = (
            np.einsum("nb,nb->n", xb, xb)[:, None]
            - 2.0 * (xb @ ref.T)
            + ref_sq[None, :]
        )
        for q in range(stop - start):
            nbrs = _k_smallest(d2[q], k)
            raw[start + q] = table.coords[nbrs].mean()
    return _minmax_image(raw, cube.rows, cube.cols)


def save_reference_table(table: ReferenceTable, path: str) -> str:
    """JSON header naming a binary payload (coords then spectra, float64 LE)."""
    base = path[:-5] if path.endswith(".json") else path
    hdr_path = base + ".json"
    bin_path = base + ".bin"
    header = {
        "count": table.size,
        "bands": int(table.spectra.shape[1]),
        "k_ref": table.k_ref,
        "degenerate": table.degenerate,
        "payload": os.path.basename(bin_path),
        "layout": "coords:f8 then spectra:f8 row-major",
    }
    with open(hdr_path, "w", encoding="ascii") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
    with open(bin_path, "wb") as fh:
        fh.write(table.coords.astype("<f8").tobytes())
        fh.write(table.spectra.astype("<f8").tobytes())
    return hdr_path


def load_reference_table(path: str) -> ReferenceTable:
    base = path[:-5] if path.endswith(".json") else path
    hdr_path = base + ".json"
    if not os.path.exists(hdr_path):
        raise DataError(f"missing reference table header {hdr_path}")
    with open(hdr_path, "r", encoding="ascii") as fh:
        try:
            header = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"reference table header is not valid JSON: {exc}") from exc
    bin_path = os.path.join(os.path.dirname(hdr_path) or ".", header["payload"])
    blob = np.fromfile(bin_path, dtype="<f8")
    count = int(header["count"])
    bands = int(header["bands"])
    if blob.size != count + count * bands:
        raise DataError(f"{bin_path}: payload size mismatch")
    coords = blob[:count]
    spectra = blob[count:].reshape(count, bands)
    return ReferenceTable(
        spectra, coords, k_ref=int(header["k_ref"]), degenerate=bool(header.get("degenerate", False))
    )

"""Five-step pre-processing chain.

calibrate -> noise estimate/removal -> extreme-band crop -> spectral band
averaging -> per-pixel min-max normalization. The noise stage fits, for every
band, a least-squares regression on all remaining bands and treats the
residual as noise; the fit is solved once for all bands through the
partitioned inverse of the (ridged) Gram matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cube import CalibrationRefs, HSCube
from .errors import ConfigError, DataError, NumericError, StageError

DEFAULT_CROP_LO = 51
DEFAULT_CROP_HI = 749
DEFAULT_TARGET_BANDS = 129
DEFAULT_CLAMP_MAX = 2.0
RIDGE_SCALE = 1e-8


@dataclass
class PreprocessConfig:
    crop_lo: int = DEFAULT_CROP_LO
    crop_hi: int = DEFAULT_CROP_HI
    target_bands: int = DEFAULT_TARGET_BANDS
    normalization: str = "minmax"
    skip_averaging: bool = False
    clamp_max: float = DEFAULT_CLAMP_MAX

    def __post_init__(self):
        if self.crop_lo < 0 or self.crop_hi < self.crop_lo:
            raise ConfigError("require 0 <= crop_lo <= crop_hi")
        kept = self.crop_hi - self.crop_lo + 1
        if not (1 <= self.target_bands <= kept):
            raise ConfigError("require 1 <= target_bands <= kept band count")
        if self.normalization != "minmax":
            raise ConfigError(f"unknown normalization mode {self.normalization!r}")
        if self.clamp_max <= 0:
            raise ConfigError("clamp_max must be positive")

    @staticmethod
    def from_json(text: str) -> "PreprocessConfig":
        try:
            doc = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError(f"preprocess config is not valid JSON: {exc}") from exc
        allowed = {"crop_lo", "crop_hi", "target_bands", "normalization", "skip_averaging", "clamp_max"}
        unknown = set(doc) - allowed
        if unknown:
            raise ConfigError(f"unknown preprocess config fields: {sorted(unknown)}")
        return PreprocessConfig(**doc)


@dataclass
class NoiseEstimate:
    """Per-pixel-per-band regression residual and per-band noise variance."""

    residual: np.ndarray  # (bands, rows, cols) float32
    variances: np.ndarray  # (bands,) float64

    def __post_init__(self):
        if np.any(self.variances < 0):
            raise DataError("noise variances must be >= 0")


def _reference_profiles(refs: CalibrationRefs):
    """Reduce white/dark scans to per-(band, column) means for broadcasting."""
    white = refs.white.astype(np.float64).mean(axis=1)  # (bands, cols)
    dark = refs.dark.astype(np.float64).mean(axis=1)
    return white, dark


def calibrate(raw: HSCube, refs: CalibrationRefs, clamp_max: float = DEFAULT_CLAMP_MAX) -> HSCube:
    """Radiometric calibration: (raw - dark) / (white - dark), clamped to [0, clamp_max]."""
    white, dark = _reference_profiles(refs)
    if white.shape != (raw.bands, raw.cols) or dark.shape != (raw.bands, raw.cols):
        raise DataError(
            f"reference profiles {white.shape} do not match cube (bands, cols)="
            f"({raw.bands}, {raw.cols})"
        )
    denom = white - dark
    bad = np.argwhere(denom == 0.0)
    if bad.size:
        first = [f"(band {b}, col {c})" for b, c in bad[:5]]
        raise NumericError(
            f"white equals dark at {bad.shape[0]} entries, e.g. {', '.join(first)}"
        )
    frac = refs.fraction_white_above_dark()
    if frac < 0.99:
        import warnings

        warnings.warn(f"white > dark on only {frac:.1%} of reference entries", stacklevel=2)
    out = (raw.data.astype(np.float64) - dark[:, None, :]) / denom[:, None, :]
    np.clip(out, 0.0, clamp_max, out=out)
    return raw.with_data(out.astype(np.float32))


def estimate_noise(cube: HSCube) -> NoiseEstimate:
    """Per band, regress on all other bands (plus an intercept) over all
    pixels; the residual is the noise estimate.

    The intercept makes constant bands fit exactly. All regressions are
    solved at once through the partitioned inverse of the ridged Gram matrix:
    one Gram product, one inversion, one prediction product.
    """
    if cube.bands < 2:
        raise DataError("noise estimation needs at least 2 bands")
    if cube.n_pixels < cube.bands:
        raise NumericError(
            f"rank-deficient design: {cube.n_pixels} pixels < {cube.bands} bands"
        )
    z = cube.pixels()  # (n, bands) float64
    if not np.all(np.isfinite(z)):
        raise NumericError("cube contains non-finite values")
    n_aug = cube.bands + 1
    zaug = np.empty((z.shape[0], n_aug))
    zaug[:, : cube.bands] = z
    zaug[:, cube.bands] = 1.0
    gram = zaug.T @ zaug
    ridge = RIDGE_SCALE * np.trace(gram) / n_aug
    gram_reg = gram + ridge * np.eye(n_aug)
    try:
        inv = np.linalg.inv(gram_reg)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular design matrix: {exc}") from exc
    # beta[:, i] solves the regression of band i on the remaining columns;
    # the correction zeroes band i out of its own design. The intercept
    # column is a regressor only, never a target.
    prod = inv @ gram_reg
    scale = np.einsum("ij,ji->i", inv, gram_reg) / np.diag(inv)
    beta = prod - inv * scale[None, :]
    np.fill_diagonal(beta, 0.0)
    beta = beta[:, : cube.bands]
    residual = z - zaug @ beta  # (n, bands)
    variances = np.mean(residual**2, axis=0)
    residual_cube = residual.T.reshape(cube.bands, cube.rows, cube.cols).astype(np.float32)
    return NoiseEstimate(residual_cube, variances)


def denoise(cube: HSCube, noise: NoiseEstimate) -> HSCube:
    """Replace each pixel by its regression prediction (cube - residual)."""
    if noise.residual.shape != cube.data.shape:
        raise DataError(
            f"residual shape {noise.residual.shape} does not match cube {cube.data.shape}"
        )
    return cube.with_data(cube.data - noise.residual)


def crop_bands(cube: HSCube, lo: int, hi: int) -> HSCube:
    """Keep band indices [lo, hi] inclusive."""
    if not (0 <= lo <= hi < cube.bands):
        raise ConfigError(f"crop range [{lo}, {hi}] invalid for {cube.bands} bands")
    return cube.with_data(cube.data[lo : hi + 1], cube.wavelengths[lo : hi + 1])


def band_group_bounds(bands: int, target: int) -> np.ndarray:
    """Contiguous group boundaries floor(bands*k/target), k = 0..target."""
    return np.array([(bands * k) // target for k in range(target + 1)], dtype=np.int64)


def average_bands(cube: HSCube, target: int) -> HSCube:
    """Partition the band axis into `target` contiguous groups and average each."""
    if not (1 <= target <= cube.bands):
        raise ConfigError(f"target band count {target} outside [1, {cube.bands}]")
    bounds = band_group_bounds(cube.bands, target)
    data = np.empty((target, cube.rows, cube.cols), dtype=np.float32)
    wl = np.empty(target, dtype=np.float64)
    src = cube.data.astype(np.float64)
    for k in range(target):
        lo, hi = bounds[k], bounds[k + 1]
        data[k] = src[lo:hi].mean(axis=0).astype(np.float32)
        wl[k] = cube.wavelengths[lo:hi].mean()
    return cube.with_data(data, wl)


def normalize_pixels(cube: HSCube):
    """Per-pixel min-max to [0, 1]; constant spectra become all-zero.

    Returns (cube, degenerate_pixel_count).
    """
    data = cube.data.astype(np.float64)
    lo = data.min(axis=0)
    hi = data.max(axis=0)
    span = hi - lo
    degenerate = span == 0.0
    span_safe = np.where(degenerate, 1.0, span)
    out = (data - lo[None, :, :]) / span_safe[None, :, :]
    out[:, degenerate] = 0.0
    return cube.with_data(out.astype(np.float32)), int(np.count_nonzero(degenerate))


def preprocess_chain(raw: HSCube, refs: CalibrationRefs, cfg: PreprocessConfig) -> HSCube:
    """calibrate -> estimate+denoise -> crop -> average (optional) -> normalize."""
    if cfg.crop_hi >= raw.bands:
        raise ConfigError(f"crop_hi {cfg.crop_hi} out of range for {raw.bands}-band cube")

    def run(stage, fn):
        try:
            return fn()
        except Exception as exc:  # noqa: BLE001 - tag stage and re-raise
            raise StageError(stage, exc) from exc

    cube = run("calibrate", lambda: calibrate(raw, refs, cfg.clamp_max))
    noise = run("estimate_noise", lambda: estimate_noise(cube))
    cube = run("denoise", lambda: denoise(cube, noise))
    cube = run("crop_bands", lambda: crop_bands(cube, cfg.crop_lo, cfg.crop_hi))
    if not cfg.skip_averaging:
        cube = run("average_bands", lambda: average_bands(cube, cfg.target_bands))
    cube, _ = run("normalize_pixels", lambda: normalize_pixels(cube))
    return cube

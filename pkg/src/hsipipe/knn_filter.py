"""Spatial homogenization of class-probability maps.

Each pixel gets a feature vector (intensity, lambda*longitude, lambda*latitude)
built from the guidance image; its probability vector is replaced by the mean
over its K nearest feature-space neighbors (self included, exact search, ties
broken by lowest linear pixel index).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from ._backend import kernels as K
from .errors import ConfigError, DataError
from .guidance import GuidanceImage
from .labeling import LabelMap
from .svm import ClassProbabilityMap, N_CLASSES

DEFAULT_K = 40
DEFAULT_LAMBDA = 1.0
SWEEP_KS = (5, 10, 20, 40, 60)
SWEEP_LAMBDAS = (0.0, 1.0, 5.0, 10.0, 100.0)


@dataclass
class FilterParams:
    k: int = DEFAULT_K
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("K must be >= 1")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")


def build_features(guidance: GuidanceImage, lam: float) -> np.ndarray:
    """(n, 3) rows of (intensity, lam*col/(cols-1), lam*row/(rows-1)).

    Single-row or single-column images use 0 for the degenerate coordinate.
    """
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    rows, cols = guidance.rows, guidance.cols
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    lon = cc / (cols - 1) if cols > 1 else np.zeros_like(cc, dtype=np.float64)
    lat = rr / (rows - 1) if rows > 1 else np.zeros_like(rr, dtype=np.float64)
    features = np.empty((rows * cols, 3), dtype=np.float64)
    features[:, 0] = guidance.flat()
    features[:, 1] = lam * lon.ravel()
    features[:, 2] = lam * lat.ravel()
    return features


def knn_filter(
    P: ClassProbabilityMap, guidance: GuidanceImage, params: FilterParams
) -> ClassProbabilityMap:
    """O(i) = mean of P over the K nearest feature-space neighbors of i."""
    if (P.rows, P.cols) != (guidance.rows, guidance.cols):
        raise DataError("probability map and guidance image shapes differ")
    n = P.rows * P.cols
    if params.k > n:
        raise ConfigError(f"K={params.k} exceeds pixel count {n}")
    features = build_features(guidance, params.lam)
    neighbors = K.knn3_indices(features, params.k)
    flat = P.flat()
    out = np.empty_like(flat)
    block = max(1, int(2_000_000 // max(params.k, 1)))
    for start in range(0, n, block):
        stop = min(n, start + block)
        out[start:stop] = flat[neighbors[start:stop]].mean(axis=1)
    return ClassProbabilityMap(P.rows, P.cols, out.reshape(P.rows, P.cols, N_CLASSES))


def argmax_map(P: ClassProbabilityMap) -> LabelMap:
    """Per-pixel argmax class; ties resolve to the lowest class code."""
    codes = (np.argmax(P.probs, axis=2) + 1).astype(np.uint8)
    return LabelMap(P.rows, P.cols, codes)


def label_smoothness(label_map: LabelMap) -> float:
    """Mean fraction of 3x3-window neighbors sharing the center pixel's label."""
    codes = label_map.codes
    rows, cols = codes.shape
    agree = np.zeros(codes.shape, dtype=np.float64)
    count = np.zeros(codes.shape, dtype=np.float64)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            r0, r1 = max(dr, 0), rows + min(dr, 0)
            q0, q1 = max(dc, 0), cols + min(dc, 0)
            center = codes[r0:r1, q0:q1]
            shifted = codes[r0 - dr : r1 - dr, q0 - dc : q1 - dc]
            agree[r0:r1, q0:q1] += center == shifted
            count[r0:r1, q0:q1] += 1.0
    return float(np.mean(agree / count))


def param_sweep(
    P: ClassProbabilityMap,
    guidance: GuidanceImage,
    ks=SWEEP_KS,
    lambdas=SWEEP_LAMBDAS,
    out_dir: str | None = None,
):
    """One filtered map per (K, lambda) cell, with a smoothness statistic.

    When out_dir is given, each cell is rendered to k{K}_l{lambda}.png and the
    statistics land in sweep_smoothness.csv.
    """
    from .fusion import render_mv

    results = {}
    stats = []
    for k in ks:
        for lam in lambdas:
            filtered = knn_filter(P, guidance, FilterParams(k=int(k), lam=float(lam)))
            labels = argmax_map(filtered)
            results[(int(k), float(lam))] = filtered
            stats.append((int(k), float(lam), label_smoothness(labels)))
            if out_dir is not None:
                name = f"k{int(k)}_l{lam:g}.png"
                with open(os.path.join(out_dir, name), "wb") as fh:
                    fh.write(render_mv(labels).to_png_bytes())
    if out_dir is not None:
        with open(os.path.join(out_dir, "sweep_smoothness.csv"), "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(["K", "lambda", "smoothness"])
            for k, lam, s in stats:
                writer.writerow([k, f"{lam:g}", f"{s:.6f}"])
    return results, stats

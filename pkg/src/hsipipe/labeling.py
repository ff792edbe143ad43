"""Gold-standard label maps: spectral angle, threshold masks, class assignment.

Class codes: 0 Unlabeled, 1 Normal, 2 Tumor, 3 Vessel, 4 Background.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .cube import HSCube
from .errors import DataError

UNLABELED = 0
NORMAL = 1
TUMOR = 2
VESSEL = 3
BACKGROUND = 4

CLASS_NAMES = {
    UNLABELED: "unlabeled",
    NORMAL: "normal_tissue",
    TUMOR: "tumor_tissue",
    VESSEL: "blood_vessel",
    BACKGROUND: "background",
}
TISSUE_CLASSES = (NORMAL, TUMOR, VESSEL, BACKGROUND)

LABEL_HEADER_SUFFIX = ".lbl"
LABEL_PAYLOAD_SUFFIX = ".lblraw"


@dataclass
class LabelMap:
    """Per-pixel class codes, uint8 (rows, cols)."""

    rows: int
    cols: int
    codes: np.ndarray

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.uint8)
        if self.codes.shape != (self.rows, self.cols):
            raise DataError("label codes shape must be (rows, cols)")
        if self.codes.max(initial=0) > BACKGROUND:
            raise DataError("label codes must be in 0..4")

    @staticmethod
    def empty(rows: int, cols: int) -> "LabelMap":
        return LabelMap(rows, cols, np.zeros((rows, cols), dtype=np.uint8))

    def copy(self) -> "LabelMap":
        return LabelMap(self.rows, self.cols, self.codes.copy())


@dataclass
class SamMask:
    """Boolean selection produced by a spectral-angle threshold query."""

    rows: int
    cols: int
    mask: np.ndarray
    ref: tuple
    threshold: float

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != (self.rows, self.cols):
            raise DataError("mask shape must be (rows, cols)")

    @property
    def count(self) -> int:
        return int(self.mask.sum())


@dataclass
class DatasetSummary:
    """Per-class labeled pixel counts (Unlabeled excluded) and their total."""

    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        for c in TISSUE_CLASSES:
            self.counts.setdefault(c, 0)

    @property
    def total(self) -> int:
        return sum(self.counts[c] for c in TISSUE_CLASSES)

    def as_dict(self) -> dict:
        out = {CLASS_NAMES[c]: int(self.counts[c]) for c in TISSUE_CLASSES}
        out["total"] = self.total
        return out


def spectral_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in radians between two spectra; scale-invariant, in [0, pi].

    Uses 2*atan2(|u - v|, |u + v|) on the unit vectors, which is exact at 0
    and pi (where the arccos form loses ~1e-8) and stable everywhere else.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("spectra must be 1-D and equal length")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DataError("spectral angle undefined for zero-norm spectrum")
    u = a / na
    v = b / nb
    return float(2.0 * np.arctan2(np.linalg.norm(u - v), np.linalg.norm(u + v)))


def sam_angles(cube: HSCube, ref_spectrum: np.ndarray) -> np.ndarray:
    """Spectral angle of every pixel against a reference spectrum.

    Same stable formulation as spectral_angle. Zero-norm pixels get angle
    pi + 1 (a sentinel beyond any valid threshold).
    """
    ref = np.asarray(ref_spectrum, dtype=np.float64)
    nref = np.linalg.norm(ref)
    if nref == 0.0:
        raise DataError("reference spectrum has zero norm")
    u = ref / nref
    flat = cube.data.reshape(cube.bands, -1).astype(np.float64)
    norms = np.sqrt(np.einsum("bn,bn->n", flat, flat))
    angles = np.full(norms.shape, np.pi + 1.0)
    ok = norms > 0.0
    v = flat[:, ok] / norms[ok][None, :]
    diff = np.linalg.norm(v - u[:, None], axis=0)
    summ = np.linalg.norm(v + u[:, None], axis=0)
    angles[ok] = 2.0 * np.arctan2(diff, summ)
    return angles.reshape(cube.rows, cube.cols)


def sam_mask(cube: HSCube, ref: tuple, threshold: float) -> SamMask:
    """Pixels whose spectral angle to the reference pixel is <= threshold.

    Zero-norm pixels are never selected.
    """
    r, c = ref
    if not (0 <= r < cube.rows and 0 <= c < cube.cols):
        raise DataError(f"reference pixel {ref} outside {cube.rows}x{cube.cols} image")
    if threshold < 0:
        raise DataError("threshold must be >= 0")
    angles = sam_angles(cube, cube.spectrum(r, c))
    return SamMask(cube.rows, cube.cols, angles <= threshold, (r, c), float(threshold))


def assign_class(label_map: LabelMap, mask: SamMask, class_code: int) -> LabelMap:
    """Set masked pixels to class_code (last write wins); returns a new map."""
    if class_code == UNLABELED:
        raise DataError("cannot assign the Unlabeled class")
    if class_code not in TISSUE_CLASSES:
        raise DataError(f"unknown class code {class_code}")
    if (mask.rows, mask.cols) != (label_map.rows, label_map.cols):
        raise DataError("mask and label map shapes differ")
    out = label_map.copy()
    out.codes[mask.mask] = class_code
    return out


def dataset_summary(label_map: LabelMap) -> DatasetSummary:
    counts = {}
    for c in TISSUE_CLASSES:
        counts[c] = int(np.count_nonzero(label_map.codes == c))
    return DatasetSummary(counts)


def save_labelmap(label_map: LabelMap, path: str) -> str:
    """Plain-text header (rows, cols, legend) + one byte per pixel, row-major."""
    hdr_path = path if path.endswith(LABEL_HEADER_SUFFIX) else path + LABEL_HEADER_SUFFIX
    legend = ";".join(f"{c}={CLASS_NAMES[c]}" for c in sorted(CLASS_NAMES))
    with open(hdr_path, "w", encoding="ascii") as fh:
        fh.write(f"rows: {label_map.rows}\ncols: {label_map.cols}\nlegend: {legend}\n")
    label_map.codes.tofile(hdr_path[: -len(LABEL_HEADER_SUFFIX)] + LABEL_PAYLOAD_SUFFIX)
    return hdr_path


def load_labelmap(path: str) -> LabelMap:
    hdr_path = path if path.endswith(LABEL_HEADER_SUFFIX) else path + LABEL_HEADER_SUFFIX
    if not os.path.exists(hdr_path):
        raise DataError(f"missing label header {hdr_path}")
    fields = {}
    with open(hdr_path, "r", encoding="ascii") as fh:
        for line in fh:
            if ":" in line:
                k, v = line.split(":", 1)
                fields[k.strip()] = v.strip()
    try:
        rows = int(fields["rows"])
        cols = int(fields["cols"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{hdr_path}: malformed label header: {exc}") from exc
    payload = np.fromfile(hdr_path[: -len(LABEL_HEADER_SUFFIX)] + LABEL_PAYLOAD_SUFFIX, dtype=np.uint8)
    if payload.size != rows * cols:
        raise DataError(f"{hdr_path}: payload size {payload.size} != rows*cols {rows * cols}")
    return LabelMap(rows, cols, payload.reshape(rows, cols))


def summaries_to_csv(summaries: dict, path: str) -> str:
    """Write per-cube summaries plus a totals row; columns follow the class legend."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["cube_id", "normal_tissue", "tumor_tissue", "blood_vessel", "background", "total"]
        )
        totals = {c: 0 for c in TISSUE_CLASSES}
        for cube_id in sorted(summaries):
            s = summaries[cube_id]
            writer.writerow([cube_id] + [s.counts[c] for c in TISSUE_CLASSES] + [s.total])
            for c in TISSUE_CLASSES:
                totals[c] += s.counts[c]
        writer.writerow(
            ["total"] + [totals[c] for c in TISSUE_CLASSES] + [sum(totals.values())]
        )
    return path

"""Majority-voting fusion of classification and segmentation maps, and the
three cluster-level renderings.

MV paints each cluster with its most frequent class. OMD scales the winning
class color by the winning proportion. TMD maps the tumor/normal/vessel
proportions to the R/G/B channels, zeroing the fourth-largest class; clusters
won by background stay pure black in both degraded renderings.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .clustering import SegmentationMap
from .cube import RenderedMap
from .errors import DataError
from .labeling import BACKGROUND, LabelMap, NORMAL, TISSUE_CLASSES, TUMOR, UNLABELED, VESSEL

CLASS_COLORS = {
    TUMOR: (1.0, 0.0, 0.0),
    NORMAL: (0.0, 1.0, 0.0),
    VESSEL: (0.0, 0.0, 1.0),
    BACKGROUND: (0.0, 0.0, 0.0),
}


@dataclass
class ClusterClassDensity:
    """proportions[c, k] = share of cluster c's pixels whose class code is k+1."""

    proportions: np.ndarray  # (n_clusters, 4) float64, rows sum to 1
    counts: np.ndarray  # (n_clusters,) member pixel counts

    def __post_init__(self):
        self.proportions = np.asarray(self.proportions, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.proportions.ndim != 2 or self.proportions.shape[1] != len(TISSUE_CLASSES):
            raise DataError("density must be (n_clusters, 4)")
        if np.any(self.proportions < 0):
            raise DataError("density proportions must be >= 0")
        if np.max(np.abs(self.proportions.sum(axis=1) - 1.0)) > 1e-9:
            raise DataError("density rows must sum to 1")

    @property
    def n_clusters(self) -> int:
        return self.proportions.shape[0]

    def winners(self) -> np.ndarray:
        """Winning class code per cluster; ties resolve to the lowest code."""
        return (np.argmax(self.proportions, axis=1) + 1).astype(np.int64)


def class_density(seg: SegmentationMap, classes: LabelMap) -> ClusterClassDensity:
    """Per-cluster class proportions from pixel-wise argmax classes."""
    if (seg.rows, seg.cols) != (classes.rows, classes.cols):
        raise DataError("segmentation and classification shapes differ")
    codes = classes.codes.ravel()
    if np.any(codes == UNLABELED):
        raise DataError("classification map contains Unlabeled pixels")
    ids = seg.flat()
    table = np.zeros((seg.n_clusters, len(TISSUE_CLASSES)), dtype=np.float64)
    np.add.at(table, (ids, codes.astype(np.int64) - 1), 1.0)
    counts = table.sum(axis=1)
    if np.any(counts == 0):
        raise DataError("segmentation contains an empty cluster id")
    return ClusterClassDensity(table / counts[:, None], counts.astype(np.int64))


def majority_vote(seg: SegmentationMap, classes: LabelMap) -> LabelMap:
    """Assign every pixel of each cluster the cluster's most frequent class."""
    density = class_density(seg, classes)
    winners = density.winners()
    codes = winners[seg.flat()].astype(np.uint8).reshape(seg.rows, seg.cols)
    return LabelMap(seg.rows, seg.cols, codes)


def render_mv(label_map: LabelMap) -> RenderedMap:
    """Pure class colors: tumor red, normal green, vessel blue, background black."""
    if np.any(label_map.codes == UNLABELED):
        raise DataError("cannot render a map with Unlabeled pixels")
    lut = np.zeros((len(TISSUE_CLASSES) + 1, 3), dtype=np.float64)
    for code, color in CLASS_COLORS.items():
        lut[code] = color
    return RenderedMap(label_map.rows, label_map.cols, lut[label_map.codes])


def _cluster_colors_omd(density: ClusterClassDensity) -> np.ndarray:
    winners = density.winners()
    colors = np.zeros((density.n_clusters, 3), dtype=np.float64)
    for c in range(density.n_clusters):
        w = int(winners[c])
        if w == BACKGROUND:
            continue  # background stays pure black
        prop = density.proportions[c, w - 1]
        colors[c] = np.asarray(CLASS_COLORS[w]) * prop
    return colors


def _cluster_colors_tmd(density: ClusterClassDensity) -> np.ndarray:
    winners = density.winners()
    colors = np.zeros((density.n_clusters, 3), dtype=np.float64)
    channel_of = {TUMOR: 0, NORMAL: 1, VESSEL: 2}
    for c in range(density.n_clusters):
        if int(winners[c]) == BACKGROUND:
            continue
        props = density.proportions[c]
        # drop the fourth-largest class; ties drop the higher class code
        order = sorted(range(len(TISSUE_CLASSES)), key=lambda i: (props[i], -i))
        dropped = order[0]
        for code in (TUMOR, NORMAL, VESSEL):
            if code - 1 == dropped:
                continue
            colors[c, channel_of[code]] = props[code - 1]
    return colors


def _paint(seg: SegmentationMap, cluster_colors: np.ndarray) -> RenderedMap:
    rgb = cluster_colors[seg.flat()].reshape(seg.rows, seg.cols, 3)
    return RenderedMap(seg.rows, seg.cols, rgb)


def render_omd(seg: SegmentationMap, density: ClusterClassDensity) -> RenderedMap:
    """Winning class color scaled by the winning proportion per cluster."""
    if density.n_clusters != seg.n_clusters:
        raise DataError("density cluster count does not match segmentation")
    return _paint(seg, _cluster_colors_omd(density))


def render_tmd(seg: SegmentationMap, density: ClusterClassDensity) -> RenderedMap:
    """R/G/B = tumor/normal/vessel proportions among the top three classes."""
    if density.n_clusters != seg.n_clusters:
        raise DataError("density cluster count does not match segmentation")
    return _paint(seg, _cluster_colors_tmd(density))


def density_to_csv(density: ClusterClassDensity, path: str) -> str:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster_id", "tumor", "normal", "vessel", "background", "pixels"])
        for c in range(density.n_clusters):
            p = density.proportions[c]
            writer.writerow(
                [
                    c,
                    f"{p[TUMOR - 1]:.9f}",
                    f"{p[NORMAL - 1]:.9f}",
                    f"{p[VESSEL - 1]:.9f}",
                    f"{p[BACKGROUND - 1]:.9f}",
                    int(density.counts[c]),
                ]
            )
    return path

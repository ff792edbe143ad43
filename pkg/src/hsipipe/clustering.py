"""Unsupervised segmentation: k-means and hierarchical divisive 2-means.

The divisive scheme starts with every pixel in one cluster and repeatedly
splits the splittable leaf with the largest within-cluster sum of squares
(WCSS) using 2-means until the requested leaf count is reached. The spherical
variant works on unit-norm spectra with cosine distance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

# centroid assignment is matmul-bound, where BLAS beats the compiled loop
# (see benchmarks/compare_backends.py), so it always uses the NumPy kernels
from . import _kernels_np as K
from .cube import HSCube
from .errors import ConfigError, DataError, NumericError

DEFAULT_CLUSTERS = 24
DEFAULT_MAX_ITER = 300
METRICS = ("euclidean", "spherical")


@dataclass
class SegmentationMap:
    rows: int
    cols: int
    ids: np.ndarray  # (rows, cols) int32 in [0, n_clusters)
    n_clusters: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int32)
        if self.ids.shape != (self.rows, self.cols):
            raise DataError("segmentation ids must be (rows, cols)")
        if self.ids.min() < 0 or self.ids.max() >= self.n_clusters:
            raise DataError("cluster ids outside [0, n_clusters)")

    def flat(self) -> np.ndarray:
        return self.ids.ravel()


@dataclass
class ClusterNode:
    centroid: np.ndarray
    count: int
    wcss: float
    children: list = field(default_factory=list)  # 0 or 2 ClusterNode
    cluster_id: int | None = None  # set on leaves only

    def as_dict(self) -> dict:
        doc = {
            "centroid": [float(v) for v in self.centroid],
            "count": self.count,
            "wcss": self.wcss,
        }
        if self.children:
            doc["children"] = [c.as_dict() for c in self.children]
        else:
            doc["cluster_id"] = self.cluster_id
        return doc


@dataclass
class ClusterTree:
    root: ClusterNode
    leaves: list  # creation order == cluster id order
    metric: str

    def to_json(self) -> str:
        return json.dumps(
            {"metric": self.metric, "n_clusters": len(self.leaves), "root": self.root.as_dict()},
            indent=2,
            sort_keys=True,
        )


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return x / safe


def _assign(x: np.ndarray, centroids: np.ndarray, metric: str):
    if metric == "euclidean":
        return K.kmeans_assign(x, centroids)
    return K.kmeans_assign_cosine(x, centroids)


def _update_centroids(x: np.ndarray, labels: np.ndarray, k: int, metric: str) -> np.ndarray:
    d = x.shape[1]
    centroids = np.zeros((k, d), dtype=np.float64)
    for c in range(k):
        members = labels == c
        if members.any():
            centroids[c] = x[members].mean(axis=0)
    if metric == "spherical":
        centroids = _normalize_rows(centroids)
    return centroids


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator, metric: str) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        labels, d2 = _assign(x, x[chosen], metric)
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            chosen.append(int(rng.choice(n, p=probs)))
        else:
            # all points coincide with a chosen centroid; take the lowest
            # index not yet used so seeds stay deterministic
            remaining = np.setdiff1d(np.arange(n), np.asarray(chosen))
            chosen.append(int(remaining[0]) if remaining.size else chosen[-1])
    return x[chosen].copy()


DEFAULT_N_INIT = 10


def _lloyd(x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int, metric: str):
    centroids = _kmeanspp_init(x, k, rng, metric)
    labels = np.full(x.shape[0], -1, dtype=np.int64)
    history = []
    for _ in range(max_iter):
        new_labels, d2 = _assign(x, centroids, metric)
        # repair empty clusters from the farthest point (strictly lowers WCSS)
        for c in range(k):
            if not np.any(new_labels == c):
                far = int(np.argmax(d2))
                new_labels[far] = c
                centroids[c] = x[far]
                d2[far] = 0.0
        centroids = _update_centroids(x, new_labels, k, metric)
        # WCSS evaluated with updated centroids at the current assignment
        wcss = 0.0
        if metric == "euclidean":
            for c in range(k):
                members = new_labels == c
                if members.any():
                    diff = x[members] - centroids[c]
                    wcss += float(np.einsum("nd,nd->", diff, diff))
        else:
            for c in range(k):
                members = new_labels == c
                if members.any():
                    wcss += float(np.sum(1.0 - x[members] @ centroids[c]))
        history.append(wcss)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centroids, history[-1], history


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    metric: str = "euclidean",
    n_init: int = DEFAULT_N_INIT,
):
    """Best of `n_init` seeded k-means++ starts, each run with Lloyd
    iterations to the assignment fixpoint.

    Returns (labels, centroids, wcss, wcss_history) of the lowest-WCSS run
    (ties to the earliest start). Empty clusters are re-seeded from the point
    farthest from its centroid, which keeps each WCSS history non-increasing.
    """
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}")
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("points must be (n, d)")
    n = x.shape[0]
    if n < k:
        raise DataError(f"cannot form {k} clusters from {n} points")
    if max_iter < 1 or n_init < 1:
        raise ConfigError("max_iter and n_init must be >= 1")
    if metric == "spherical":
        x = _normalize_rows(x)
    best = None
    rng = np.random.default_rng(seed)
    for _ in range(n_init):
        result = _lloyd(x, k, rng, max_iter, metric)
        if best is None or result[2] < best[2]:
            best = result
    return best


def _leaf_wcss(x: np.ndarray, metric: str) -> tuple:
    if metric == "spherical":
        centroid_dir = x.mean(axis=0)
        norm = np.linalg.norm(centroid_dir)
        centroid = centroid_dir / norm if norm > 0 else centroid_dir
        wcss = float(np.sum(1.0 - x @ centroid)) if norm > 0 else float(x.shape[0])
        return centroid, wcss
    centroid = x.mean(axis=0)
    diff = x - centroid
    return centroid, float(np.einsum("nd,nd->", diff, diff))


def hkm_segment(
    cube: HSCube,
    n_clusters: int = DEFAULT_CLUSTERS,
    seed: int = 0,
    metric: str = "euclidean",
    max_iter: int = DEFAULT_MAX_ITER,
):
    """Divisive 2-means over the cube's spectra; returns (SegmentationMap, ClusterTree)."""
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}")
    if n_clusters < 1:
        raise ConfigError("n_clusters must be >= 1")
    if cube.n_pixels < n_clusters:
        raise DataError(f"{cube.n_pixels} pixels cannot form {n_clusters} clusters")
    x = cube.pixels()
    if metric == "spherical":
        x = _normalize_rows(x)

    n_splits = max(n_clusters - 1, 0)
    split_seeds = [
        int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n_splits)
    ]
    centroid, wcss = _leaf_wcss(x, metric)
    root = ClusterNode(centroid, x.shape[0], wcss)
    member_idx = {id(root): np.arange(x.shape[0])}
    leaves = [root]
    split_counter = 0
    while len(leaves) < n_clusters:
        candidates = [i for i, leaf in enumerate(leaves) if leaf.count >= 2]
        if not candidates:
            raise NumericError("no splittable leaf left before reaching n_clusters")
        pick = max(candidates, key=lambda i: (leaves[i].wcss, -i))
        leaf = leaves[pick]
        idx = member_idx.pop(id(leaf))
        child_seed = split_seeds[split_counter]
        split_counter += 1
        labels, _, _, _ = kmeans(x[idx], 2, seed=child_seed, max_iter=max_iter, metric=metric)
        children = []
        for side in (0, 1):
            sub = idx[labels == side]
            centroid, wcss = _leaf_wcss(x[sub], metric)
            node = ClusterNode(centroid, sub.size, wcss)
            member_idx[id(node)] = sub
            children.append(node)
        leaf.children = children
        leaves[pick : pick + 1] = children

    ids = np.empty(x.shape[0], dtype=np.int32)
    for cid, leaf in enumerate(leaves):
        leaf.cluster_id = cid
        ids[member_idx[id(leaf)]] = cid
    seg = SegmentationMap(cube.rows, cube.cols, ids.reshape(cube.rows, cube.cols), len(leaves))
    return seg, ClusterTree(root, leaves, metric)


def save_segmentation(seg: SegmentationMap, path: str) -> str:
    """Header + byte-per-pixel payload (format shared with label maps)."""
    if seg.n_clusters > 256:
        raise DataError("byte-per-pixel segmentation format supports <= 256 clusters")
    hdr_path = path if path.endswith(".seg") else path + ".seg"
    with open(hdr_path, "w", encoding="ascii") as fh:
        fh.write(f"rows: {seg.rows}\ncols: {seg.cols}\nclusters: {seg.n_clusters}\n")
    seg.ids.astype(np.uint8).tofile(hdr_path[:-4] + ".segraw")
    return hdr_path


def load_segmentation(path: str) -> SegmentationMap:
    hdr_path = path if path.endswith(".seg") else path + ".seg"
    fields = {}
    with open(hdr_path, "r", encoding="ascii") as fh:
        for line in fh:
            if ":" in line:
                kk, v = line.split(":", 1)
                fields[kk.strip()] = v.strip()
    try:
        rows, cols, clusters = int(fields["rows"]), int(fields["cols"]), int(fields["clusters"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{hdr_path}: malformed segmentation header: {exc}") from exc
    ids = np.fromfile(hdr_path[:-4] + ".segraw", dtype=np.uint8)
    if ids.size != rows * cols:
        raise DataError(f"{hdr_path}: payload size mismatch")
    return SegmentationMap(rows, cols, ids.reshape(rows, cols).astype(np.int32), clusters)

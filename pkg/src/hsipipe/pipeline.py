"""End-to-end orchestration, stage timing, and the two-branch execution model.

Stages: preprocessing -> (supervised branch: predict + guidance + KNN filter |
clustering branch) -> hybrid fusion + rendering. Model training and reference
table building are configuration steps, not timed stages. The transmission
stage is a configured constant recorded in the timing report so accelerated
totals can be aggregated as preprocessing + transmission +
max(supervised, clustering) + hybrid.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .clustering import hkm_segment, save_segmentation
from .cube import CalibrationRefs, RenderedMap, load_cube, save_cube
from .errors import ConfigError, DataError, StageError
from .fusion import class_density, density_to_csv, majority_vote, render_mv, render_omd, render_tmd
from .guidance import (
    build_reference_table,
    fr_tsne_guidance,
    load_reference_table,
    pca_first_component,
    save_reference_table,
)
from .knn_filter import FilterParams, argmax_map, knn_filter
from .labeling import LabelMap, load_labelmap, save_labelmap
from .metrics import cross_validate
from .phantom import PhantomSpec, generate_phantom
from .preprocess import (
    PreprocessConfig,
    average_bands,
    calibrate,
    crop_bands,
    denoise,
    estimate_noise,
    normalize_pixels,
)
from .svm import SvmModel, extract_dataset, predict_proba, train_svm

SEQUENTIAL = "sequential"
CONCURRENT = "concurrent"
ACCELERATED = "accelerated"


@dataclass
class StageTimings:
    preprocessing: float = 0.0
    transmission: float = 0.0
    spatial_spectral_supervised: float = 0.0
    unsupervised_clustering: float = 0.0
    hybrid_classification: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise DataError(f"stage time {name} must be >= 0, got {value}")

    def as_dict(self) -> dict:
        return asdict(self)


def aggregate_timings(t: StageTimings, mode: str) -> float:
    """Total runtime under the sequential or accelerated execution model."""
    if mode == SEQUENTIAL:
        return (
            t.preprocessing
            + t.spatial_spectral_supervised
            + t.unsupervised_clustering
            + t.hybrid_classification
        )
    if mode == ACCELERATED:
        return (
            t.preprocessing
            + t.transmission
            + max(t.spatial_spectral_supervised, t.unsupervised_clustering)
            + t.hybrid_classification
        )
    raise ConfigError(f"unknown aggregation mode {mode!r}")


def speedup(seq_total: float, acc_total: float) -> float:
    if acc_total <= 0:
        raise ConfigError("accelerated total must be positive")
    return seq_total / acc_total


@dataclass
class PipelineConfig:
    # inputs: either a raw cube + white/dark refs, or a phantom spec
    cube_path: str | None = None
    white_path: str | None = None
    dark_path: str | None = None
    phantom_spec_path: str | None = None
    labels_path: str | None = None
    model_path: str | None = None
    reference_table_path: str | None = None
    output_dir: str = "run_output"

    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)

    kernel: str = "linear"
    C: float = 1.0
    svm_params: dict = field(default_factory=dict)
    max_train_per_class: int = 500
    cv_folds: int = 3

    guidance_backend: str = "fr-tsne"  # or "pca"
    perplexity: float = 30.0
    tsne_iterations: int = 1000
    tsne_learning_rate: float = 200.0
    subsample: int = 2000
    k_ref: int = 5

    filter_k: int = 40
    filter_lambda: float = 1.0

    clusters: int = 24
    cluster_metric: str = "euclidean"

    seed: int = 0
    execution: str = SEQUENTIAL
    transmission_seconds: float = 0.0

    def __post_init__(self):
        if self.execution not in (SEQUENTIAL, CONCURRENT):
            raise ConfigError(f"execution must be sequential or concurrent, got {self.execution!r}")
        if self.guidance_backend not in ("fr-tsne", "pca"):
            raise ConfigError(f"unknown guidance backend {self.guidance_backend!r}")
        if self.transmission_seconds < 0:
            raise ConfigError("transmission_seconds must be >= 0")
        if self.cv_folds < 0:
            raise ConfigError("cv_folds must be >= 0")

    @staticmethod
    def from_json(text: str) -> "PipelineConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"pipeline config is not valid JSON: {exc}") from exc
        pre = doc.pop("preprocess", {})
        fields = {f for f in PipelineConfig.__dataclass_fields__ if f != "preprocess"}
        unknown = set(doc) - fields
        if unknown:
            raise ConfigError(f"unknown pipeline config fields: {sorted(unknown)}")
        return PipelineConfig(preprocess=PreprocessConfig(**pre), **doc)

    def to_json(self) -> str:
        doc = asdict(self)
        return json.dumps(doc, indent=2, sort_keys=True)


@dataclass
class PipelineResult:
    out_dir: str
    timings: StageTimings
    manifest: dict
    mv_map: LabelMap
    filtered_labels: LabelMap
    totals: dict


def _segmentation_palette(n: int) -> np.ndarray:
    """Deterministic distinct-ish colors via golden-ratio hue stepping."""
    import colorsys

    colors = np.zeros((n, 3), dtype=np.float64)
    hue = 0.0
    for i in range(n):
        colors[i] = colorsys.hsv_to_rgb(hue % 1.0, 0.85, 0.95)
        hue += 0.618033988749895
    return colors


def _load_inputs(cfg: PipelineConfig):
    if cfg.phantom_spec_path:
        with open(cfg.phantom_spec_path, "r", encoding="ascii") as fh:
            spec = PhantomSpec.from_json(fh.read())
        raw, truth, refs = generate_phantom(spec)
        return raw, refs, truth
    if not cfg.cube_path or not cfg.white_path or not cfg.dark_path:
        raise ConfigError("config needs either phantom_spec_path or cube/white/dark paths")
    raw = load_cube(cfg.cube_path)
    white = load_cube(cfg.white_path)
    dark = load_cube(cfg.dark_path)
    refs = CalibrationRefs(white.data, dark.data)
    labels = load_labelmap(cfg.labels_path) if cfg.labels_path else None
    return raw, refs, labels


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    if not cfg.model_path and not cfg.labels_path and not cfg.phantom_spec_path:
        raise ConfigError("config supplies neither a serialized model nor training labels")

    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    manifest_files: list = []

    def emit(name: str, stage: str, writer) -> None:
        writer(os.path.join(out_dir, name))
        manifest_files.append({"name": name, "stage": stage})

    raw, refs, labels = _load_inputs(cfg)
    if cfg.model_path is None and labels is None:
        raise ConfigError("no labels available and no serialized model supplied")

    def timed(stage, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:  # noqa: BLE001 - tag stage, flush manifest
            _flush_manifest(out_dir, cfg, manifest_files, error=f"{stage}: {exc}")
            raise StageError(stage, exc) from exc
        return result, time.perf_counter() - start

    # ---- preprocessing (both the averaged and the full-band variants) ----
    def _preprocess():
        calibrated = calibrate(raw, refs, cfg.preprocess.clamp_max)
        noise = estimate_noise(calibrated)
        denoised = denoise(calibrated, noise)
        cropped = crop_bands(denoised, cfg.preprocess.crop_lo, cfg.preprocess.crop_hi)
        averaged = average_bands(cropped, cfg.preprocess.target_bands)
        cube_main, _ = normalize_pixels(averaged)
        cube_guidance, _ = normalize_pixels(cropped)
        return cube_main, cube_guidance

    (cube_main, cube_guidance), t_pre = timed("preprocessing", _preprocess)
    emit("preprocessed.hdr", "preprocessing", lambda p: save_cube(cube_main, p[:-4]))
    manifest_files.append({"name": "preprocessed.raw", "stage": "preprocessing"})

    # ---- configuration step: model + reference table + metrics (untimed) ----
    def _prepare_model():
        metrics_report = None
        if cfg.model_path:
            with open(cfg.model_path, "r", encoding="ascii") as fh:
                model = SvmModel.from_json(fh.read())
            dataset = None
        else:
            dataset = extract_dataset(
                cube_main, labels, max_per_class=cfg.max_train_per_class, seed=cfg.seed
            )
            model = train_svm(
                dataset, kernel=cfg.kernel, C=cfg.C, params=cfg.svm_params, seed=cfg.seed
            )
            if cfg.cv_folds >= 2:
                metrics_report, _ = cross_validate(
                    dataset,
                    k=cfg.cv_folds,
                    kernel=cfg.kernel,
                    C=cfg.C,
                    params=cfg.svm_params,
                    seed=cfg.seed,
                )
        table = None
        if cfg.guidance_backend == "fr-tsne":
            if cfg.reference_table_path:
                table = load_reference_table(cfg.reference_table_path)
            elif labels is not None:
                flat = labels.codes.ravel()
                labeled_idx = np.nonzero(flat != 0)[0]
                spectra = cube_guidance.pixels()[labeled_idx]
                table = build_reference_table(
                    spectra,
                    subsample=cfg.subsample,
                    seed=cfg.seed,
                    k_ref=cfg.k_ref,
                    perplexity=cfg.perplexity,
                    iterations=cfg.tsne_iterations,
                    learning_rate=cfg.tsne_learning_rate,
                )
            else:
                raise ConfigError(
                    "fr-tsne guidance needs labels or a prebuilt reference_table_path"
                )
        return model, table, metrics_report

    (model, table, metrics_report), _ = timed("model_preparation", _prepare_model)
    emit("model.json", "model_preparation", lambda p: _write_text(p, model.to_json()))
    if table is not None:
        emit("reference_table.json", "model_preparation", lambda p: save_reference_table(table, p))
        manifest_files.append({"name": "reference_table.bin", "stage": "model_preparation"})
    if metrics_report is not None:
        emit("metrics.json", "model_preparation", lambda p: _write_text(p, metrics_report.to_json()))

    # ---- two branches ----
    def _supervised_branch():
        start = time.perf_counter()
        prob = predict_proba(model, cube_main)
        if cfg.guidance_backend == "fr-tsne":
            guide = fr_tsne_guidance(cube_guidance, table)
        else:
            guide = pca_first_component(cube_guidance)
        filtered = knn_filter(prob, guide, FilterParams(k=cfg.filter_k, lam=cfg.filter_lambda))
        labels_map = argmax_map(filtered)
        return (prob, guide, filtered, labels_map), time.perf_counter() - start

    def _clustering_branch():
        start = time.perf_counter()
        seg, tree = hkm_segment(
            cube_main, n_clusters=cfg.clusters, seed=cfg.seed, metric=cfg.cluster_metric
        )
        return (seg, tree), time.perf_counter() - start

    def _run_branch(stage, fn):
        try:
            return fn()
        except Exception as exc:  # noqa: BLE001
            raise StageError(stage, exc) from exc

    branches_start = time.perf_counter()
    try:
        if cfg.execution == CONCURRENT:
            with ThreadPoolExecutor(max_workers=2) as pool:
                sup_future = pool.submit(
                    _run_branch, "spatial_spectral_supervised", _supervised_branch
                )
                clu_future = pool.submit(_run_branch, "unsupervised_clustering", _clustering_branch)
                (prob, guide, filtered, filtered_labels), t_sup = sup_future.result()
                (seg, tree), t_clu = clu_future.result()
        else:
            (prob, guide, filtered, filtered_labels), t_sup = _run_branch(
                "spatial_spectral_supervised", _supervised_branch
            )
            (seg, tree), t_clu = _run_branch("unsupervised_clustering", _clustering_branch)
    except StageError as err:
        _flush_manifest(out_dir, cfg, manifest_files, error=str(err))
        raise
    branches_wall = time.perf_counter() - branches_start

    emit("probability.npy", "supervised", lambda p: np.save(p, prob.probs))
    emit("guidance.npy", "supervised", lambda p: np.save(p, guide.values))
    emit("guidance.png", "supervised", lambda p: _write_gray_png(guide.values, p))
    emit("filtered_probability.npy", "supervised", lambda p: np.save(p, filtered.probs))
    emit("filtered_labels.lbl", "supervised", lambda p: save_labelmap(filtered_labels, p[:-4]))
    manifest_files.append({"name": "filtered_labels.lblraw", "stage": "supervised"})
    emit(
        "filtered_map.png",
        "supervised",
        lambda p: _write_bytes(p, render_mv(filtered_labels).to_png_bytes()),
    )
    emit("segmentation.seg", "clustering", lambda p: save_segmentation(seg, p[:-4]))
    manifest_files.append({"name": "segmentation.segraw", "stage": "clustering"})
    emit("cluster_tree.json", "clustering", lambda p: _write_text(p, tree.to_json()))
    palette = _segmentation_palette(seg.n_clusters)
    emit(
        "segmentation.png",
        "clustering",
        lambda p: _write_bytes(
            p,
            RenderedMap(
                seg.rows, seg.cols, palette[seg.flat()].reshape(seg.rows, seg.cols, 3)
            ).to_png_bytes(),
        ),
    )

    # ---- hybrid classification ----
    def _hybrid():
        density = class_density(seg, filtered_labels)
        mv_map = majority_vote(seg, filtered_labels)
        return density, mv_map, render_mv(mv_map), render_omd(seg, density), render_tmd(seg, density)

    (density, mv_map, mv_png, omd_png, tmd_png), t_hybrid = timed("hybrid_classification", _hybrid)
    emit("density.csv", "hybrid", lambda p: density_to_csv(density, p))
    emit("mv_labels.lbl", "hybrid", lambda p: save_labelmap(mv_map, p[:-4]))
    manifest_files.append({"name": "mv_labels.lblraw", "stage": "hybrid"})
    emit("mv.png", "hybrid", lambda p: _write_bytes(p, mv_png.to_png_bytes()))
    emit("omd.png", "hybrid", lambda p: _write_bytes(p, omd_png.to_png_bytes()))
    emit("tmd.png", "hybrid", lambda p: _write_bytes(p, tmd_png.to_png_bytes()))

    timings = StageTimings(
        preprocessing=t_pre,
        transmission=cfg.transmission_seconds,
        spatial_spectral_supervised=t_sup,
        unsupervised_clustering=t_clu,
        hybrid_classification=t_hybrid,
    )
    totals = {
        "sequential_total": aggregate_timings(timings, SEQUENTIAL),
        "accelerated_total": aggregate_timings(timings, ACCELERATED),
        "branches_wall": branches_wall,
    }
    totals["speedup"] = speedup(totals["sequential_total"], totals["accelerated_total"]) if totals[
        "accelerated_total"
    ] > 0 else None
    with open(os.path.join(out_dir, "timings.json"), "w", encoding="ascii") as fh:
        json.dump({"stages": timings.as_dict(), **totals}, fh, indent=2, sort_keys=True)
    manifest_files.append({"name": "timings.json", "stage": "reporting"})

    manifest = _flush_manifest(out_dir, cfg, manifest_files)
    return PipelineResult(out_dir, timings, manifest, mv_map, filtered_labels, totals)


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(text)


def _write_bytes(path: str, blob: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(blob)


def _write_gray_png(values: np.ndarray, path: str) -> None:
    from PIL import Image

    img = np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path, format="PNG")


def _flush_manifest(out_dir: str, cfg: PipelineConfig, files: list, error: str | None = None) -> dict:
    manifest = {"config": json.loads(cfg.to_json()), "files": files}
    if error is not None:
        manifest["error"] = error
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest

"""Command-line interface.

Verbs: preprocess, label-export, train, classify, segment, fuse, run, sweep,
bench. Exit codes: 0 ok, 1 config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import functools
import json
import os
import sys

import click
import numpy as np

from . import backend_name
from .clustering import hkm_segment, load_segmentation, save_segmentation
from .cube import CalibrationRefs, load_cube, save_cube, synth_rgb
from .errors import ConfigError, DataError, HsipipeError, NumericError, StageError
from .fusion import class_density, density_to_csv, majority_vote, render_mv, render_omd, render_tmd
from .guidance import (
    build_reference_table,
    fr_tsne_guidance,
    load_reference_table,
    pca_first_component,
    save_reference_table,
)
from .knn_filter import FilterParams, argmax_map, knn_filter, param_sweep
from .labeling import dataset_summary, load_labelmap, save_labelmap, summaries_to_csv
from .metrics import cross_validate
from .phantom import PhantomSpec, generate_phantom, quadrant_phantom_spec
from .pipeline import ACCELERATED, PipelineConfig, SEQUENTIAL, aggregate_timings, run_pipeline, speedup
from .preprocess import PreprocessConfig, preprocess_chain
from .svm import SvmModel, extract_dataset, predict_proba, train_svm

EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, StageError):
        return _exit_code(exc.cause) if isinstance(exc.cause, HsipipeError) else EXIT_DATA
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, DataError):
        return EXIT_DATA
    return EXIT_DATA


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except HsipipeError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code(exc))

    return wrapper


def _load_refs(white: str, dark: str) -> CalibrationRefs:
    return CalibrationRefs(load_cube(white).data, load_cube(dark).data)


@click.group()
@click.version_option(message=f"%(prog)s %(version)s (kernels: {backend_name})")
def main():
    """Spatio-spectral hyperspectral classification pipeline."""


@main.command("preprocess")
@click.option("--cube", "cube_path", required=True, type=click.Path(exists=True))
@click.option("--white", required=True, type=click.Path(exists=True))
@click.option("--dark", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), help="PreprocessConfig JSON")
@click.option("--skip-averaging", is_flag=True, default=False)
@click.option("--out", required=True, type=click.Path())
@handle_errors
def preprocess_cmd(cube_path, white, dark, config_path, skip_averaging, out):
    """Run the five-step pre-processing chain and write the result cube."""
    cfg_text = open(config_path).read() if config_path else "{}"
    cfg = PreprocessConfig.from_json(cfg_text)
    if skip_averaging:
        cfg.skip_averaging = True
    cube = load_cube(cube_path)
    refs = _load_refs(white, dark)
    result = preprocess_chain(cube, refs, cfg)
    save_cube(result, out)
    click.echo(f"wrote {out}.hdr ({result.bands} bands, {result.rows}x{result.cols})")


@main.command("label-export")
@click.option("--labels", "label_paths", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--ids", "cube_ids", multiple=True, help="one id per label map (defaults to filenames)")
@click.option("--out", required=True, type=click.Path())
@handle_errors
def label_export_cmd(label_paths, cube_ids, out):
    """Export per-cube dataset summaries (plus totals row) as CSV."""
    if cube_ids and len(cube_ids) != len(label_paths):
        raise ConfigError("--ids count must match --labels count")
    summaries = {}
    for i, path in enumerate(label_paths):
        cube_id = cube_ids[i] if cube_ids else os.path.splitext(os.path.basename(path))[0]
        summaries[cube_id] = dataset_summary(load_labelmap(path))
    summaries_to_csv(summaries, out)
    click.echo(f"wrote {out}")


@main.command("train")
@click.option("--cube", "cube_path", required=True, type=click.Path(exists=True), help="pre-processed cube")
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--kernel", default="linear", type=click.Choice(["linear", "rbf", "polynomial", "sigmoid"]))
@click.option("--c", "c_value", default=1.0, type=float)
@click.option("--folds", default=0, type=int, help="also run k-fold CV and print metrics")
@click.option("--max-per-class", default=0, type=int, help="cap training samples per class (0 = all)")
@click.option("--seed", default=0, type=int)
@click.option("--guidance-cube", "guidance_cube_path", type=click.Path(exists=True), help="non-averaged cube; also build a reference table from its labeled pixels")
@click.option("--table-out", type=click.Path(), help="where to write the reference table (with --guidance-cube)")
@click.option("--subsample", default=2000, type=int)
@click.option("--out", required=True, type=click.Path())
@handle_errors
def train_cmd(
    cube_path, labels_path, kernel, c_value, folds, max_per_class, seed,
    guidance_cube_path, table_out, subsample, out,
):
    """Train the one-vs-rest SVM on labeled pixels of a pre-processed cube."""
    cube = load_cube(cube_path)
    labels = load_labelmap(labels_path)
    data = extract_dataset(cube, labels, max_per_class or None, seed)
    model = train_svm(data, kernel=kernel, C=c_value, seed=seed)
    with open(out, "w", encoding="ascii") as fh:
        fh.write(model.to_json())
    click.echo(f"wrote {out} ({len(model.classes)} binary problems, kernel={kernel})")
    if guidance_cube_path:
        if not table_out:
            raise ConfigError("--guidance-cube requires --table-out")
        gcube = load_cube(guidance_cube_path)
        if (gcube.rows, gcube.cols) != (labels.rows, labels.cols):
            raise DataError("guidance cube and label map shapes differ")
        labeled = np.nonzero(labels.codes.ravel() != 0)[0]
        table = build_reference_table(
            gcube.pixels()[labeled], subsample=subsample, seed=seed
        )
        save_reference_table(table, table_out)
        click.echo(f"wrote reference table ({table.size} entries) to {table_out}")
    if folds >= 2:
        report, _ = cross_validate(data, k=folds, kernel=kernel, C=c_value, seed=seed)
        click.echo(report.to_json())


@main.command("classify")
@click.option("--cube", "cube_path", required=True, type=click.Path(exists=True), help="pre-processed cube")
@click.option("--guidance-cube", "guidance_cube_path", type=click.Path(exists=True), help="non-averaged cube for guidance (defaults to --cube)")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--guidance", "backend", default="fr-tsne", type=click.Choice(["pca", "fr-tsne"]))
@click.option("--table", "table_path", type=click.Path(exists=True), help="reference table for fr-tsne")
@click.option("--k", "k_value", default=40, type=int)
@click.option("--lam", "--lambda", "lam", default=1.0, type=float)
@click.option("--out", required=True, type=click.Path())
@handle_errors
def classify_cmd(cube_path, guidance_cube_path, model_path, backend, table_path, k_value, lam, out):
    """Probability map + guidance + KNN filtering -> filtered classification map."""
    cube = load_cube(cube_path)
    gcube = load_cube(guidance_cube_path) if guidance_cube_path else cube
    model = SvmModel.from_json(open(model_path).read())
    prob = predict_proba(model, cube)
    if backend == "fr-tsne":
        if not table_path:
            raise ConfigError("fr-tsne guidance requires --table")
        guide = fr_tsne_guidance(gcube, load_reference_table(table_path))
    else:
        guide = pca_first_component(gcube)
    filtered = knn_filter(prob, guide, FilterParams(k=k_value, lam=lam))
    labels = argmax_map(filtered)
    os.makedirs(out, exist_ok=True)
    np.save(os.path.join(out, "probability.npy"), prob.probs)
    np.save(os.path.join(out, "filtered_probability.npy"), filtered.probs)
    np.save(os.path.join(out, "guidance.npy"), guide.values)
    save_labelmap(labels, os.path.join(out, "filtered_labels"))
    with open(os.path.join(out, "filtered_map.png"), "wb") as fh:
        fh.write(render_mv(labels).to_png_bytes())
    click.echo(f"wrote classification artifacts to {out}")


@main.command("segment")
@click.option("--cube", "cube_path", required=True, type=click.Path(exists=True), help="pre-processed cube")
@click.option("--clusters", default=24, type=int)
@click.option("--cluster-metric", default="euclidean", type=click.Choice(["euclidean", "spherical"]))
@click.option("--seed", default=0, type=int)
@click.option("--out", required=True, type=click.Path())
@handle_errors
def segment_cmd(cube_path, clusters, cluster_metric, seed, out):
    """Hierarchical divisive k-means segmentation."""
    cube = load_cube(cube_path)
    seg, tree = hkm_segment(cube, n_clusters=clusters, seed=seed, metric=cluster_metric)
    os.makedirs(out, exist_ok=True)
    save_segmentation(seg, os.path.join(out, "segmentation"))
    with open(os.path.join(out, "cluster_tree.json"), "w", encoding="ascii") as fh:
        fh.write(tree.to_json())
    click.echo(f"wrote segmentation ({seg.n_clusters} clusters) to {out}")


@main.command("fuse")
@click.option("--classes", "classes_path", required=True, type=click.Path(exists=True), help="filtered label map (.lbl)")
@click.option("--segmentation", "seg_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@handle_errors
def fuse_cmd(classes_path, seg_path, out):
    """Majority-vote fusion + MV/OMD/TMD renderings + density CSV."""
    classes = load_labelmap(classes_path)
    seg = load_segmentation(seg_path)
    density = class_density(seg, classes)
    mv_map = majority_vote(seg, classes)
    os.makedirs(out, exist_ok=True)
    density_to_csv(density, os.path.join(out, "density.csv"))
    save_labelmap(mv_map, os.path.join(out, "mv_labels"))
    for name, image in (
        ("mv.png", render_mv(mv_map)),
        ("omd.png", render_omd(seg, density)),
        ("tmd.png", render_tmd(seg, density)),
    ):
        with open(os.path.join(out, name), "wb") as fh:
            fh.write(image.to_png_bytes())
    click.echo(f"wrote fusion artifacts to {out}")


def _config_with_overrides(config_path, **overrides) -> PipelineConfig:
    cfg = PipelineConfig.from_json(open(config_path).read())
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.__post_init__()
    return cfg


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--kernel", type=click.Choice(["linear", "rbf", "polynomial", "sigmoid"]))
@click.option("--c", "c_value", type=float)
@click.option("--k", "filter_k", type=int)
@click.option("--lam", "filter_lambda", type=float)
@click.option("--clusters", type=int)
@click.option("--seed", type=int)
@click.option("--mode", "execution", type=click.Choice([SEQUENTIAL, "concurrent"]))
@click.option("--out", "output_dir", type=click.Path())
@handle_errors
def run_cmd(config_path, c_value, **overrides):
    """End-to-end pipeline run from a JSON config (flags override)."""
    cfg = _config_with_overrides(config_path, C=c_value, **overrides)
    result = run_pipeline(cfg)
    click.echo(f"artifacts in {result.out_dir}")
    click.echo(json.dumps({"stages": result.timings.as_dict(), **result.totals}, indent=2, sort_keys=True))


@main.command("sweep")
@click.option("--cube", "cube_path", required=True, type=click.Path(exists=True), help="pre-processed cube")
@click.option("--guidance-cube", "guidance_cube_path", type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--guidance", "backend", default="pca", type=click.Choice(["pca", "fr-tsne"]))
@click.option("--table", "table_path", type=click.Path(exists=True))
@click.option("--ks", default="5,10,20,40,60", help="comma list of K values")
@click.option("--lambdas", default="0,1,5,10,100", help="comma list of lambda values")
@click.option("--out", required=True, type=click.Path())
@handle_errors
def sweep_cmd(cube_path, guidance_cube_path, model_path, backend, table_path, ks, lambdas, out):
    """Grid of filtered maps over (K, lambda); PNG per cell + smoothness CSV."""
    cube = load_cube(cube_path)
    gcube = load_cube(guidance_cube_path) if guidance_cube_path else cube
    model = SvmModel.from_json(open(model_path).read())
    prob = predict_proba(model, cube)
    if backend == "fr-tsne":
        if not table_path:
            raise ConfigError("fr-tsne guidance requires --table")
        guide = fr_tsne_guidance(gcube, load_reference_table(table_path))
    else:
        guide = pca_first_component(gcube)
    try:
        k_list = [int(v) for v in ks.split(",") if v.strip()]
        lam_list = [float(v) for v in lambdas.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad sweep grid: {exc}") from exc
    os.makedirs(out, exist_ok=True)
    _, stats = param_sweep(prob, guide, k_list, lam_list, out_dir=out)
    click.echo(f"wrote {len(stats)} maps to {out}")


@main.command("bench")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--runs", default=1, type=int)
@handle_errors
def bench_cmd(config_path, runs):
    """Timing report: per-stage seconds plus sequential/accelerated totals."""
    if runs < 1:
        raise ConfigError("--runs must be >= 1")
    cfg = PipelineConfig.from_json(open(config_path).read())
    base_dir = cfg.output_dir
    rows = []
    for r in range(runs):
        cfg.output_dir = os.path.join(base_dir, f"bench_{r}") if runs > 1 else base_dir
        result = run_pipeline(cfg)
        rows.append(result.timings)
    click.echo(f"{'stage':<32}{'seconds (mean over runs)':>24}")
    for name in (
        "preprocessing",
        "transmission",
        "spatial_spectral_supervised",
        "unsupervised_clustering",
        "hybrid_classification",
    ):
        mean = sum(getattr(t, name) for t in rows) / len(rows)
        click.echo(f"{name:<32}{mean:>24.3f}")
    seq = sum(aggregate_timings(t, SEQUENTIAL) for t in rows) / len(rows)
    acc = sum(aggregate_timings(t, ACCELERATED) for t in rows) / len(rows)
    click.echo(f"{'sequential total':<32}{seq:>24.3f}")
    click.echo(f"{'accelerated total':<32}{acc:>24.3f}")
    if acc > 0:
        click.echo(f"{'speedup':<32}{speedup(seq, acc):>24.2f}")


@main.command("phantom")
@click.option("--spec", "spec_path", type=click.Path(exists=True), help="PhantomSpec JSON (defaults to the standard 4-class quadrant phantom)")
@click.option("--rows", default=64, type=int)
@click.option("--cols", default=64, type=int)
@click.option("--bands", default=129, type=int)
@click.option("--sigma", default=0.01, type=float)
@click.option("--seed", default=0, type=int)
@click.option("--out", required=True, type=click.Path())
@handle_errors
def phantom_cmd(spec_path, rows, cols, bands, sigma, seed, out):
    """Generate a synthetic phantom (raw cube, refs, ground-truth labels)."""
    if spec_path:
        spec = PhantomSpec.from_json(open(spec_path).read())
    else:
        spec = quadrant_phantom_spec(rows, cols, bands, sigma, seed)
    raw, truth, refs = generate_phantom(spec)
    os.makedirs(out, exist_ok=True)
    save_cube(raw, os.path.join(out, "raw"))
    white_rows = refs.white.shape[1]
    from .cube import HSCube

    save_cube(HSCube(white_rows, raw.cols, raw.bands, raw.wavelengths, refs.white), os.path.join(out, "white"))
    save_cube(HSCube(white_rows, raw.cols, raw.bands, raw.wavelengths, refs.dark), os.path.join(out, "dark"))
    save_labelmap(truth, os.path.join(out, "truth"))
    with open(os.path.join(out, "phantom_spec.json"), "w", encoding="ascii") as fh:
        fh.write(spec.to_json())
    with open(os.path.join(out, "rgb.png"), "wb") as fh:
        fh.write(synth_rgb(raw, 1.0).to_png_bytes())
    click.echo(f"wrote phantom to {out}")


if __name__ == "__main__":
    main()

"""HTTP facade for the interactive labeling workflow.

Serves synthetic RGB previews, computes SAM masks on demand, persists class
assignments with bounded undo, and exposes pipeline result maps. Label
commits are serialized per cube (single writer); reads never block.
"""

from __future__ import annotations

import json
import os
import threading
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, Response

from .cube import HSCube, load_cube, synth_rgb
from .errors import ConfigError, DataError, HsipipeError
from .labeling import (
    LabelMap,
    SamMask,
    UNLABELED,
    assign_class,
    dataset_summary,
    sam_mask,
)
from .pipeline import PipelineConfig, run_pipeline

DEFAULT_UNDO_DEPTH = 64
DATA_DIR_ENV = "HSIPIPE_DATA_DIR"
PORT_ENV = "HSIPIPE_PORT"
MAP_KINDS = ("mv", "omd", "tmd")


def encode_rle(mask: np.ndarray) -> list:
    """Row-major run-length encoding: list of [start, length] pairs."""
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return []
    edges = np.flatnonzero(np.diff(flat.astype(np.int8)))
    starts = []
    lengths = []
    pos = 0
    current = bool(flat[0])
    for edge in list(edges + 1) + [flat.size]:
        if current:
            starts.append(pos)
            lengths.append(edge - pos)
        pos = edge
        current = not current
    return [[int(s), int(l)] for s, l in zip(starts, lengths)]


def decode_rle(runs: list, size: int) -> np.ndarray:
    flat = np.zeros(size, dtype=bool)
    prev_end = -1
    for run in runs:
        if not isinstance(run, (list, tuple)) or len(run) != 2:
            raise DataError("mask runs must be [start, length] pairs")
        start, length = int(run[0]), int(run[1])
        if length < 1 or start < 0 or start + length > size:
            raise DataError(f"run [{start}, {length}] outside mask of size {size}")
        if start <= prev_end:
            raise DataError("mask runs must be sorted and non-overlapping")
        flat[start : start + length] = True
        prev_end = start + length - 1
    return flat


@dataclass
class CubeSession:
    cube_id: str
    cube: HSCube
    labels: LabelMap
    undo_stack: deque = field(default_factory=lambda: deque(maxlen=DEFAULT_UNDO_DEPTH))
    lock: threading.Lock = field(default_factory=threading.Lock)
    classify_state: str = "idle"  # idle | running | done | error
    classify_error: str = ""
    run_dir: str = ""


class LabelService:
    def __init__(self, data_dir: str, undo_depth: int = DEFAULT_UNDO_DEPTH):
        if not os.path.isdir(data_dir):
            raise ConfigError(f"data directory {data_dir!r} does not exist")
        self.data_dir = data_dir
        self.undo_depth = undo_depth
        self.sessions: dict = {}
        self.errors: dict = {}
        self._scan()

    def _scan(self) -> None:
        for name in sorted(os.listdir(self.data_dir)):
            if not name.endswith(".hdr"):
                continue
            cube_id = name[:-4]
            try:
                cube = load_cube(os.path.join(self.data_dir, name))
            except HsipipeError as exc:
                self.errors[cube_id] = str(exc)
                continue
            session = CubeSession(
                cube_id=cube_id,
                cube=cube,
                labels=LabelMap.empty(cube.rows, cube.cols),
            )
            session.undo_stack = deque(maxlen=self.undo_depth)
            self.sessions[cube_id] = session

    def session(self, cube_id: str) -> CubeSession:
        if cube_id not in self.sessions:
            raise KeyError(cube_id)
        return self.sessions[cube_id]

    def listing(self) -> list:
        entries = []
        for cube_id, session in sorted(self.sessions.items()):
            cube = session.cube
            entries.append(
                {
                    "id": cube_id,
                    "rows": cube.rows,
                    "cols": cube.cols,
                    "bands": cube.bands,
                    "wavelength_range": [float(cube.wavelengths[0]), float(cube.wavelengths[-1])],
                    "status": "ok",
                }
            )
        for cube_id, error in sorted(self.errors.items()):
            entries.append({"id": cube_id, "status": "error", "error": error})
        return entries


def create_app(data_dir: str | None = None, undo_depth: int = DEFAULT_UNDO_DEPTH) -> FastAPI:
    data_dir = data_dir or os.environ.get(DATA_DIR_ENV, ".")
    service = LabelService(data_dir, undo_depth)
    app = FastAPI(title="hsipipe label service")
    app.state.service = service

    def get_session(cube_id: str) -> CubeSession:
        try:
            return service.session(cube_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown cube {cube_id!r}") from None

    @app.get("/cubes")
    def list_cubes():
        return JSONResponse(service.listing())

    @app.get("/cubes/{cube_id}/rgb")
    def get_rgb(cube_id: str, gamma: float = 1.0):
        session = get_session(cube_id)
        if gamma <= 0:
            raise HTTPException(status_code=422, detail="gamma must be positive")
        try:
            image = synth_rgb(session.cube, gamma)
        except DataError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return Response(content=image.to_png_bytes(), media_type="image/png")

    @app.post("/cubes/{cube_id}/sam")
    def compute_sam(cube_id: str, body: dict):
        session = get_session(cube_id)
        try:
            ref = body["ref"]
            threshold = float(body["threshold"])
            mask = sam_mask(session.cube, (int(ref[0]), int(ref[1])), threshold)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"bad request body: {exc}") from exc
        except DataError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return JSONResponse(
            {
                "mask_rle": encode_rle(mask.mask),
                "count": mask.count,
                "threshold": mask.threshold,
                "ref": [int(ref[0]), int(ref[1])],
            }
        )

    @app.get("/cubes/{cube_id}/summary")
    def get_summary(cube_id: str):
        session = get_session(cube_id)
        return JSONResponse(dataset_summary(session.labels).as_dict())

    @app.post("/cubes/{cube_id}/labels")
    def commit_labels(cube_id: str, body: dict):
        session = get_session(cube_id)
        try:
            runs = body["mask_rle"]
            class_code = int(body["class"])
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"bad request body: {exc}") from exc
        if class_code == UNLABELED:
            raise HTTPException(status_code=422, detail="cannot assign the Unlabeled class")
        with session.lock:
            try:
                flat = decode_rle(runs, session.cube.n_pixels)
                mask = SamMask(
                    session.cube.rows,
                    session.cube.cols,
                    flat.reshape(session.cube.rows, session.cube.cols),
                    ref=(0, 0),
                    threshold=0.0,
                )
                changed = np.flatnonzero(flat)
                session.undo_stack.append((changed, session.labels.codes.ravel()[changed].copy()))
                session.labels = assign_class(session.labels, mask, class_code)
            except DataError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
        return JSONResponse(dataset_summary(session.labels).as_dict())

    @app.post("/cubes/{cube_id}/labels/undo")
    def undo_labels(cube_id: str):
        session = get_session(cube_id)
        with session.lock:
            if not session.undo_stack:
                raise HTTPException(status_code=409, detail="nothing to undo")
            changed, old_values = session.undo_stack.pop()
            codes = session.labels.codes.copy()
            codes.ravel()[changed] = old_values
            session.labels = LabelMap(session.labels.rows, session.labels.cols, codes)
        return JSONResponse(dataset_summary(session.labels).as_dict())

    @app.post("/cubes/{cube_id}/classify")
    def classify(cube_id: str, body: dict | None = None):
        session = get_session(cube_id)
        with session.lock:
            if session.classify_state == "running":
                return JSONResponse({"status": "running"}, status_code=202)
            if not np.any(session.labels.codes != UNLABELED) :
                raise HTTPException(status_code=409, detail="no labels committed yet")
            session.classify_state = "running"
            session.classify_error = ""
        overrides = (body or {}).get("config", {})
        run_dir = os.path.join(service.data_dir, f"{cube_id}_run")
        labels_snapshot = session.labels.copy()

        def job():
            try:
                from .labeling import save_labelmap

                os.makedirs(run_dir, exist_ok=True)
                labels_path = os.path.join(run_dir, "gold")
                save_labelmap(labels_snapshot, labels_path)
                cfg_doc = {
                    "cube_path": os.path.join(service.data_dir, f"{cube_id}.hdr"),
                    "white_path": os.path.join(service.data_dir, f"{cube_id}_white.hdr"),
                    "dark_path": os.path.join(service.data_dir, f"{cube_id}_dark.hdr"),
                    "labels_path": labels_path + ".lbl",
                    "output_dir": run_dir,
                    "cv_folds": 0,
                }
                cfg_doc.update(overrides)
                cfg = PipelineConfig.from_json(json.dumps(cfg_doc))
                run_pipeline(cfg)
                session.run_dir = run_dir
                session.classify_state = "done"
            except Exception as exc:  # noqa: BLE001 - surfaced via status endpoint
                session.classify_state = "error"
                session.classify_error = str(exc)

        thread = threading.Thread(target=job, daemon=True)
        thread.start()
        return JSONResponse({"status": "running"}, status_code=202)

    @app.get("/cubes/{cube_id}/classify/status")
    def classify_status(cube_id: str):
        session = get_session(cube_id)
        doc = {"status": session.classify_state}
        if session.classify_error:
            doc["error"] = session.classify_error
        return JSONResponse(doc)

    @app.get("/cubes/{cube_id}/maps/{kind}")
    def get_map(cube_id: str, kind: str):
        session = get_session(cube_id)
        if kind not in MAP_KINDS:
            raise HTTPException(status_code=404, detail=f"unknown map kind {kind!r}")
        path = os.path.join(session.run_dir or "", f"{kind}.png")
        if not session.run_dir or not os.path.exists(path):
            raise HTTPException(
                status_code=404,
                detail="classification artifacts missing; POST /cubes/{id}/classify first",
            )
        with open(path, "rb") as fh:
            return Response(content=fh.read(), media_type="image/png")

    return app


def main() -> None:
    import uvicorn

    port = int(os.environ.get(PORT_ENV, "8000"))
    uvicorn.run(create_app(), host="127.0.0.1", port=port)


if __name__ == "__main__":
    main()

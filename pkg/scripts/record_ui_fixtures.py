"""Record real label-service responses into frontend test fixtures.

Builds the standard demo phantom, drives the HTTP API in-process, and dumps
the exchanges the frontend tests replay: a threshold sweep at a fixed
reference pixel plus a commit/undo flow.

Run: python scripts/record_ui_fixtures.py [out_path]
"""

import json
import os
import sys
import tempfile

from fastapi.testclient import TestClient

from hsipipe.cube import HSCube, save_cube
from hsipipe.phantom import generate_phantom, quadrant_phantom_spec
from hsipipe.service import create_app

DEFAULT_OUT = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
    "frontend",
    "tests",
    "fixtures",
    "service_recording.json",
)


def main(out_path: str) -> None:
    data_dir = tempfile.mkdtemp(prefix="hsipipe_fixtures_")
    spec = quadrant_phantom_spec(rows=16, cols=16, bands=30, sigma=0.005, seed=3)
    raw, truth, refs = generate_phantom(spec)
    save_cube(raw, os.path.join(data_dir, "demo"))
    rr = refs.white.shape[1]
    save_cube(
        HSCube(rr, raw.cols, raw.bands, raw.wavelengths, refs.white),
        os.path.join(data_dir, "demo_white"),
    )
    save_cube(
        HSCube(rr, raw.cols, raw.bands, raw.wavelengths, refs.dark),
        os.path.join(data_dir, "demo_dark"),
    )
    client = TestClient(create_app(data_dir))

    listing = client.get("/cubes").json()
    cube = next(e for e in listing if e["id"] == "demo")

    ref = [3, 3]
    sweep = []
    # the UI slider range: 0 .. 0.5 rad in 0.025 steps
    for i in range(21):
        threshold = round(i * 0.025, 3)
        doc = client.post("/cubes/demo/sam", json={"ref": ref, "threshold": threshold}).json()
        sweep.append({"threshold": threshold, "count": doc["count"], "mask_rle": doc["mask_rle"]})

    initial_summary = client.get("/cubes/demo/summary").json()
    steps = []
    for step_ref, class_code in (([3, 3], 1), ([3, 12], 2), ([12, 3], 3), ([12, 12], 4)):
        sam = client.post("/cubes/demo/sam", json={"ref": step_ref, "threshold": 0.08}).json()
        after = client.post(
            "/cubes/demo/labels", json={"mask_rle": sam["mask_rle"], "class": class_code}
        ).json()
        steps.append(
            {"ref": step_ref, "threshold": 0.08, "class": class_code, "sam": sam, "after_commit": after}
        )
    undo_results = []
    for _ in steps:
        undo_results.append(client.post("/cubes/demo/labels/undo").json())

    recording = {
        "cube": cube,
        "ref": ref,
        "sweep": sweep,
        "initial_summary": initial_summary,
        "commit_steps": steps,
        "undo_results": undo_results,
    }
    os.makedirs(os.path.dirname(out_path), exist_ok=True)
    with open(out_path, "w", encoding="ascii") as fh:
        json.dump(recording, fh, indent=2, sort_keys=True)
    print(f"wrote {out_path} ({len(sweep)} sweep points, {len(steps)} commits)")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else DEFAULT_OUT)

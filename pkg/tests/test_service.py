import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from hsipipe.cube import HSCube, save_cube
from hsipipe.phantom import generate_phantom, quadrant_phantom_spec
from hsipipe.service import create_app, decode_rle, encode_rle


@pytest.fixture(scope="module")
def served(tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("cubes")
    spec = quadrant_phantom_spec(rows=16, cols=16, bands=30, sigma=0.005, seed=3)
    raw, truth, refs = generate_phantom(spec)
    save_cube(raw, str(data_dir / "demo"))
    ref_rows = refs.white.shape[1]
    save_cube(
        HSCube(ref_rows, raw.cols, raw.bands, raw.wavelengths, refs.white),
        str(data_dir / "demo_white"),
    )
    save_cube(
        HSCube(ref_rows, raw.cols, raw.bands, raw.wavelengths, refs.dark),
        str(data_dir / "demo_dark"),
    )
    # a deliberately corrupt cube: header y payload disagree
    (data_dir / "broken.hdr").write_text(
        "rows: 4\ncols: 4\nbands: 2\nstorage_order: bsq\nwavelengths: 400,500\n"
    )
    np.zeros(3, dtype="<f4").tofile(data_dir / "broken.raw")
    app = create_app(str(data_dir))
    return TestClient(app), truth


class TestRle:
    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            mask = rng.random(64) < 0.3
            runs = encode_rle(mask.reshape(8, 8))
            assert np.array_equal(decode_rle(runs, 64), mask)

    def test_empty_and_full(self):
        assert encode_rle(np.zeros((2, 2), dtype=bool)) == []
        assert encode_rle(np.ones((2, 2), dtype=bool)) == [[0, 4]]

    def test_decode_validates(self):
        from hsipipe.errors import DataError

        with pytest.raises(DataError):
            decode_rle([[0, 10]], 4)
        with pytest.raises(DataError):
            decode_rle([[2, 2], [1, 1]], 8)  # out of order / overlapping


class TestListing:
    def test_lists_cubes_with_dims_and_errors(self, served):
        client, _ = served
        entries = client.get("/cubes").json()
        by_id = {e["id"]: e for e in entries}
        assert by_id["demo"]["rows"] == 16
        assert by_id["demo"]["bands"] == 30
        assert by_id["demo"]["status"] == "ok"
        assert by_id["broken"]["status"] == "error"  # listed, not silently dropped
        assert by_id["demo_white"]["status"] == "ok"


class TestRgb:
    def test_same_gamma_identical_bytes(self, served):
        client, _ = served
        a = client.get("/cubes/demo/rgb", params={"gamma": 1.0})
        b = client.get("/cubes/demo/rgb", params={"gamma": 1.0})
        assert a.status_code == 200
        assert a.headers["content-type"] == "image/png"
        assert a.content == b.content

    def test_gamma_two_brightens_midtones(self, served):
        from io import BytesIO

        from PIL import Image

        client, _ = served
        one = np.asarray(Image.open(BytesIO(client.get("/cubes/demo/rgb", params={"gamma": 1.0}).content)))
        two = np.asarray(Image.open(BytesIO(client.get("/cubes/demo/rgb", params={"gamma": 2.0}).content)))
        assert np.all(two.astype(int) >= one.astype(int) - 1)  # 1/gamma curve with rounding

    def test_unknown_cube_404(self, served):
        client, _ = served
        assert client.get("/cubes/nope/rgb").status_code == 404

    def test_bad_gamma_rejected(self, served):
        client, _ = served
        assert client.get("/cubes/demo/rgb", params={"gamma": 0.0}).status_code == 422


class TestSam:
    def test_threshold_zero_counts_parallel_only(self, served):
        client, _ = served
        body = {"ref": [3, 3], "threshold": 0.0}
        doc = client.post("/cubes/demo/sam", json=body).json()
        assert doc["count"] >= 1  # the reference pixel itself is parallel

    def test_count_monotone_in_threshold(self, served):
        client, _ = served
        counts = []
        for threshold in (0.0, 0.02, 0.05, 0.1, 0.5, 3.2):
            doc = client.post("/cubes/demo/sam", json={"ref": [3, 3], "threshold": threshold}).json()
            counts.append(doc["count"])
        assert counts == sorted(counts)
        assert counts[-1] == 16 * 16

    def test_phantom_region_mask(self, served):
        client, truth = served
        doc = client.post("/cubes/demo/sam", json={"ref": [3, 3], "threshold": 0.08}).json()
        mask = decode_rle(doc["mask_rle"], 256).reshape(16, 16)
        code = truth.codes[3, 3]
        assert np.all(truth.codes[mask] == code)
        assert mask[truth.codes == code].mean() > 0.99

    def test_read_only(self, served):
        client, _ = served
        before = client.get("/cubes/demo/summary").json()
        client.post("/cubes/demo/sam", json={"ref": [2, 2], "threshold": 0.1})
        after = client.get("/cubes/demo/summary").json()
        assert before == after

    def test_out_of_bounds_ref(self, served):
        client, _ = served
        assert client.post("/cubes/demo/sam", json={"ref": [99, 0], "threshold": 0.1}).status_code == 422


class TestLabelsAndUndo:
    def test_commit_then_undo_restores_summary(self, served):
        client, _ = served
        start = client.get("/cubes/demo/summary").json()
        doc = client.post("/cubes/demo/sam", json={"ref": [3, 3], "threshold": 0.08}).json()
        committed = client.post(
            "/cubes/demo/labels", json={"mask_rle": doc["mask_rle"], "class": 2}
        ).json()
        assert committed["tumor_tissue"] == start["tumor_tissue"] + doc["count"]
        undone = client.post("/cubes/demo/labels/undo").json()
        assert undone == start

    def test_disjoint_commits_additive(self, served):
        client, _ = served
        a = client.post("/cubes/demo/sam", json={"ref": [3, 3], "threshold": 0.05}).json()
        b = client.post("/cubes/demo/sam", json={"ref": [12, 12], "threshold": 0.05}).json()
        s0 = client.get("/cubes/demo/summary").json()
        client.post("/cubes/demo/labels", json={"mask_rle": a["mask_rle"], "class": 1})
        s1 = client.get("/cubes/demo/summary").json()
        client.post("/cubes/demo/labels", json={"mask_rle": b["mask_rle"], "class": 3})
        s2 = client.get("/cubes/demo/summary").json()
        assert s1["normal_tissue"] - s0["normal_tissue"] == a["count"]
        assert s2["blood_vessel"] - s1["blood_vessel"] == b["count"]
        client.post("/cubes/demo/labels/undo")
        client.post("/cubes/demo/labels/undo")

    def test_unlabeled_class_rejected(self, served):
        client, _ = served
        assert (
            client.post("/cubes/demo/labels", json={"mask_rle": [[0, 4]], "class": 0}).status_code
            == 422
        )

    def test_undo_empty_stack_conflict(self, served):
        client, _ = served
        while client.post("/cubes/demo/labels/undo").status_code == 200:
            pass
        assert client.post("/cubes/demo/labels/undo").status_code == 409


class TestClassifyAndMaps:
    def test_maps_missing_before_classify(self, served):
        client, _ = served
        response = client.get("/cubes/demo/maps/mv")
        assert response.status_code == 404
        assert "classify" in response.json()["detail"]

    def test_unknown_kind(self, served):
        client, _ = served
        assert client.get("/cubes/demo/maps/xyz").status_code == 404

    def test_classify_requires_labels(self, served):
        client, _ = served
        # ensure no labels are committed
        while client.post("/cubes/demo/labels/undo").status_code == 200:
            pass
        assert client.post("/cubes/demo/classify", json={}).status_code == 409

    def test_classify_then_maps_served(self, served):
        client, truth = served
        # label all four quadrants from their centers
        for ref, code in (((3, 3), 1), ((3, 12), 2), ((12, 3), 3), ((12, 12), 4)):
            doc = client.post("/cubes/demo/sam", json={"ref": list(ref), "threshold": 0.08}).json()
            client.post("/cubes/demo/labels", json={"mask_rle": doc["mask_rle"], "class": code})
        overrides = {
            "preprocess": {"crop_lo": 2, "crop_hi": 27, "target_bands": 10},
            "max_train_per_class": 40,
            "cv_folds": 0,
            "perplexity": 8.0,
            "tsne_iterations": 100,
            "tsne_learning_rate": 10.0,
            "subsample": 120,
            "k_ref": 3,
            "filter_k": 8,
            "clusters": 4,
        }
        response = client.post("/cubes/demo/classify", json={"config": overrides})
        assert response.status_code == 202
        for _ in range(300):
            status = client.get("/cubes/demo/classify/status").json()
            if status["status"] in ("done", "error"):
                break
            time.sleep(0.2)
        assert status == {"status": "done"}
        for kind in ("mv", "omd", "tmd"):
            response = client.get(f"/cubes/demo/maps/{kind}")
            assert response.status_code == 200
            assert response.content[:8] == b"\x89PNG\r\n\x1a\n"
        # identical request -> identical bytes
        a = client.get("/cubes/demo/maps/tmd").content
        b = client.get("/cubes/demo/maps/tmd").content
        assert a == b

    def test_tmd_png_matches_density_csv_within_quantization(self, served):
        import csv
        from io import BytesIO

        from PIL import Image

        client, _ = served
        png = client.get("/cubes/demo/maps/tmd")
        assert png.status_code == 200
        pixels = np.asarray(Image.open(BytesIO(png.content)).convert("RGB"))
        service = client.app.state.service
        run_dir = service.session("demo").run_dir
        with open(f"{run_dir}/density.csv") as fh:
            rows = list(csv.DictReader(fh))
        expected_colors = set()
        for row in rows:
            props = {k: float(row[k]) for k in ("tumor", "normal", "vessel", "background")}
            winner = max(("normal", "tumor", "vessel", "background"), key=lambda k: props[k])
            if winner == "background":
                expected_colors.add((0, 0, 0))
                continue
            ordered = sorted(props.items(), key=lambda kv: kv[1])
            dropped = ordered[0][0]
            rgb = tuple(
                int(round(255 * (props[k] if k != dropped else 0.0)))
                for k in ("tumor", "normal", "vessel")
            )
            expected_colors.add(rgb)
        seen = {tuple(int(v) for v in px) for px in pixels.reshape(-1, 3)}
        for color in seen:
            # every rendered color must sit within 1/255 of a CSV-derived color
            assert any(
                all(abs(color[c] - exp[c]) <= 1 for c in range(3)) for exp in expected_colors
            ), color

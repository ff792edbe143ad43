import csv

import numpy as np
import pytest

from hsipipe.errors import DataError
from hsipipe.labeling import (
    BACKGROUND,
    LabelMap,
    NORMAL,
    TUMOR,
    VESSEL,
    assign_class,
    dataset_summary,
    load_labelmap,
    sam_mask,
    save_labelmap,
    spectral_angle,
    summaries_to_csv,
)

from conftest import make_cube

# per-cube labeled pixel counts (normal, tumor, vessel, background)
FIVE_CUBE_COUNTS = {
    "p1": (2295, 1221, 1331, 630),
    "p2": (4516, 855, 8697, 1685),
    "p3": (1251, 2046, 4089, 696),
    "p4": (1842, 3655, 1513, 2625),
    "p5": (977, 1221, 907, 2503),
}
FIVE_CUBE_TOTALS = {"p1": 5477, "p2": 15753, "p3": 8082, "p4": 9635, "p5": 5608}
GRAND_TOTAL = 44555


def fixture_map(counts) -> LabelMap:
    """Row-major fill with exactly the requested per-class counts."""
    normal, tumor, vessel, background = counts
    total = normal + tumor + vessel + background
    cols = 128
    rows = (total + cols) // cols + 1
    flat = np.zeros(rows * cols, dtype=np.uint8)
    pos = 0
    for code, count in zip((NORMAL, TUMOR, VESSEL, BACKGROUND), counts):
        flat[pos : pos + count] = code
        pos += count
    return LabelMap(rows, cols, flat.reshape(rows, cols))


class TestSpectralAngle:
    def test_identical_vectors_zero(self):
        v = np.array([0.3, 0.5, 0.9])
        assert spectral_angle(v, v) == 0.0

    def test_orthogonal_is_half_pi(self):
        assert spectral_angle([1.0, 0.0], [0.0, 1.0]) == pytest.approx(np.pi / 2, abs=1e-12)

    def test_scale_invariance(self):
        v = np.array([0.2, 0.4, 0.8])
        assert spectral_angle(v, 2.0 * v) <= 1e-9
        w = np.array([0.9, 0.1, 0.3])
        assert abs(spectral_angle(v, w) - spectral_angle(3.5 * v, w)) <= 1e-9

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b = rng.random(6), rng.random(6)
            assert spectral_angle(a, b) == spectral_angle(b, a)

    def test_zero_norm_rejected(self):
        with pytest.raises(DataError):
            spectral_angle([0.0, 0.0], [1.0, 1.0])


class TestSamMask:
    def test_threshold_zero_selects_parallel_only(self):
        data = np.zeros((2, 1, 3), dtype=np.float32)
        data[:, 0, 0] = [1.0, 2.0]
        data[:, 0, 1] = [2.0, 4.0]  # parallel to ref
        data[:, 0, 2] = [1.0, 1.0]
        cube = make_cube(data, wavelengths=np.array([500.0, 600.0]))
        mask = sam_mask(cube, (0, 0), 0.0)
        assert mask.mask[0, 0] and mask.mask[0, 1] and not mask.mask[0, 2]

    def test_threshold_pi_selects_all_nonzero(self):
        data = np.zeros((2, 1, 3), dtype=np.float32)
        data[:, 0, 0] = [1.0, 0.5]
        data[:, 0, 1] = [-1.0, -0.5]  # antiparallel
        data[:, 0, 2] = [0.0, 0.0]  # zero norm, never selected
        cube = make_cube(data, wavelengths=np.array([500.0, 600.0]))
        mask = sam_mask(cube, (0, 0), np.pi)
        assert mask.mask[0, 0] and mask.mask[0, 1] and not mask.mask[0, 2]

    def test_monotone_in_threshold(self, small_phantom):
        _, raw, _, _ = small_phantom
        previous = None
        for threshold in (0.0, 0.02, 0.05, 0.1, 0.3, 1.0, np.pi):
            mask = sam_mask(raw, (3, 3), threshold).mask
            if previous is not None:
                assert np.all(previous <= mask)
            previous = mask

    def test_contains_ref_for_positive_threshold(self, small_phantom):
        _, raw, _, _ = small_phantom
        assert sam_mask(raw, (5, 9), 0.01).mask[5, 9]

    def test_out_of_bounds_ref(self, small_phantom):
        _, raw, _, _ = small_phantom
        with pytest.raises(DataError):
            sam_mask(raw, (99, 0), 0.1)

    def test_phantom_region_isolated(self, small_phantom):
        # reference inside one quadrant at a tight threshold stays inside it
        _, raw, truth, _ = small_phantom
        mask = sam_mask(raw, (3, 3), 0.08)
        code = truth.codes[3, 3]
        assert np.all(truth.codes[mask.mask] == code)
        region = truth.codes == code
        assert mask.mask[region].mean() > 0.99


class TestAssign:
    def test_empty_mask_is_noop(self, small_phantom):
        _, raw, _, _ = small_phantom
        label_map = LabelMap.empty(raw.rows, raw.cols)
        mask = sam_mask(raw, (0, 0), 0.0)
        mask.mask[:] = False
        out = assign_class(label_map, mask, TUMOR)
        assert np.array_equal(out.codes, label_map.codes)

    def test_last_write_wins(self, small_phantom):
        _, raw, _, _ = small_phantom
        label_map = LabelMap.empty(raw.rows, raw.cols)
        full = sam_mask(raw, (0, 0), np.pi)
        out = assign_class(label_map, full, TUMOR)
        out = assign_class(out, full, NORMAL)
        assert np.all(out.codes == NORMAL)

    def test_full_mask_background(self, small_phantom):
        _, raw, _, _ = small_phantom
        out = assign_class(LabelMap.empty(raw.rows, raw.cols), sam_mask(raw, (0, 0), np.pi), BACKGROUND)
        assert np.all(out.codes == BACKGROUND)

    def test_unlabeled_rejected(self, small_phantom):
        _, raw, _, _ = small_phantom
        with pytest.raises(DataError):
            assign_class(LabelMap.empty(raw.rows, raw.cols), sam_mask(raw, (0, 0), 0.1), 0)

    def test_total_never_decreases(self, small_phantom):
        _, raw, _, _ = small_phantom
        label_map = LabelMap.empty(raw.rows, raw.cols)
        total = 0
        for threshold, code in ((0.05, TUMOR), (0.1, NORMAL), (0.02, VESSEL)):
            label_map = assign_class(label_map, sam_mask(raw, (3, 12), threshold), code)
            new_total = dataset_summary(label_map).total
            assert new_total >= total
            total = new_total


class TestSummary:
    def test_patient2_shaped_fixture(self):
        summary = dataset_summary(fixture_map(FIVE_CUBE_COUNTS["p2"]))
        assert summary.counts[NORMAL] == 4516
        assert summary.counts[TUMOR] == 855
        assert summary.counts[VESSEL] == 8697
        assert summary.counts[BACKGROUND] == 1685
        assert summary.total == 15753

    def test_all_unlabeled(self):
        summary = dataset_summary(LabelMap.empty(4, 4))
        assert summary.total == 0
        assert all(v == 0 for v in summary.counts.values())

    def test_five_cube_grand_total(self):
        totals = {c: 0 for c in (NORMAL, TUMOR, VESSEL, BACKGROUND)}
        for cube_id, counts in FIVE_CUBE_COUNTS.items():
            summary = dataset_summary(fixture_map(counts))
            assert summary.total == FIVE_CUBE_TOTALS[cube_id]
            for code in totals:
                totals[code] += summary.counts[code]
        assert totals[NORMAL] == 10881
        assert totals[TUMOR] == 8998
        assert totals[VESSEL] == 16537
        assert totals[BACKGROUND] == 8139
        assert sum(totals.values()) == GRAND_TOTAL

    def test_csv_export(self, tmp_path):
        summaries = {cid: dataset_summary(fixture_map(c)) for cid, c in FIVE_CUBE_COUNTS.items()}
        path = summaries_to_csv(summaries, str(tmp_path / "table.csv"))
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["cube_id", "normal_tissue", "tumor_tissue", "blood_vessel", "background", "total"]
        assert rows[-1] == ["total", "10881", "8998", "16537", "8139", "44555"]


def test_labelmap_roundtrip(tmp_path, small_phantom):
    _, _, truth, _ = small_phantom
    path = save_labelmap(truth, str(tmp_path / "truth"))
    back = load_labelmap(path)
    assert np.array_equal(back.codes, truth.codes)

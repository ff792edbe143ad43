import numpy as np
import pytest

from hsipipe.errors import ConfigError
from hsipipe.labeling import spectral_angle
from hsipipe.phantom import (
    PhantomSpec,
    Region,
    default_endmembers,
    generate_phantom,
    quadrant_phantom_spec,
)
from hsipipe.preprocess import calibrate


def test_zero_sigma_spectra_equal_endmembers(clean_phantom):
    spec, raw, truth, refs = clean_phantom
    calibrated = calibrate(raw, refs)
    for code, endmember in spec.endmembers.items():
        member = truth.codes == code
        expected = endmember.astype(np.float32)
        got = calibrated.data[:, member]
        assert np.array_equal(got, np.broadcast_to(expected[:, None], got.shape))


def test_same_seed_bit_identical():
    spec = quadrant_phantom_spec(rows=8, cols=8, bands=12, sigma=0.05, seed=99)
    raw1, truth1, _ = generate_phantom(spec)
    raw2, truth2, _ = generate_phantom(spec)
    assert np.array_equal(raw1.data, raw2.data)
    assert np.array_equal(truth1.codes, truth2.codes)


def test_different_seed_differs():
    a, _, _ = generate_phantom(quadrant_phantom_spec(8, 8, 12, sigma=0.05, seed=1))
    b, _, _ = generate_phantom(quadrant_phantom_spec(8, 8, 12, sigma=0.05, seed=2))
    assert not np.array_equal(a.data, b.data)


def test_default_endmembers_respect_sam_floor():
    ems = default_endmembers(129)
    codes = sorted(ems)
    for i, a in enumerate(codes):
        for b in codes[i + 1 :]:
            assert spectral_angle(ems[a], ems[b]) >= 0.3


def test_uncovered_pixels_rejected():
    ems = default_endmembers(6)
    spec = PhantomSpec(
        rows=4,
        cols=4,
        bands=6,
        regions=[Region("rect", 1, {"r0": 0, "c0": 0, "r1": 2, "c1": 4})],
        endmembers=ems,
    )
    with pytest.raises(ConfigError, match="tile"):
        generate_phantom(spec)


def test_parallel_endmembers_rejected():
    x = np.linspace(0.1, 0.9, 6)
    spec = PhantomSpec(
        rows=2,
        cols=2,
        bands=6,
        regions=[
            Region("rect", 1, {"r0": 0, "c0": 0, "r1": 2, "c1": 1}),
            Region("rect", 2, {"r0": 0, "c0": 1, "r1": 2, "c1": 2}),
        ],
        endmembers={1: x, 2: 2.0 * x},
    )
    with pytest.raises(ConfigError, match="parallel"):
        generate_phantom(spec)


def test_disc_region_and_json_roundtrip():
    ems = default_endmembers(8)
    spec = PhantomSpec(
        rows=10,
        cols=10,
        bands=8,
        regions=[
            Region("rect", 4, {"r0": 0, "c0": 0, "r1": 10, "c1": 10}),
            Region("disc", 2, {"cr": 5.0, "cc": 5.0, "radius": 3.0}),
        ],
        endmembers=ems,
        sigma=0.0,
        seed=5,
    )
    raw1, truth1, _ = generate_phantom(spec)
    spec2 = PhantomSpec.from_json(spec.to_json())
    raw2, truth2, _ = generate_phantom(spec2)
    assert np.array_equal(raw1.data, raw2.data)
    assert np.array_equal(truth1.codes, truth2.codes)
    assert truth1.codes[5, 5] == 2 and truth1.codes[0, 0] == 4


def test_calibration_midpoints_land_inside_unit_interval(small_phantom):
    _, raw, _, refs = small_phantom
    calibrated = calibrate(raw, refs)
    interior = calibrated.data[:, 4:8, 4:8]
    assert interior.min() > 0.0 and interior.max() < 1.0

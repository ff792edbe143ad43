import numpy as np
import pytest

from hsipipe.cube import HSCube, load_cube, save_cube, synth_rgb, nearest_band
from hsipipe.errors import DataError

from conftest import make_cube


def test_cube_invariants():
    cube = make_cube(np.zeros((3, 2, 2)))
    assert cube.n_pixels == 4
    assert cube.data.shape == (3, 2, 2)


def test_cube_rejects_bad_shapes():
    with pytest.raises(DataError):
        HSCube(2, 2, 3, np.array([400.0, 500.0, 600.0]), np.zeros((3, 2, 3), dtype=np.float32))
    with pytest.raises(DataError):
        HSCube(2, 2, 3, np.array([400.0, 500.0]), np.zeros((3, 2, 2), dtype=np.float32))
    with pytest.raises(DataError):  # non-monotone wavelengths
        HSCube(2, 2, 3, np.array([400.0, 600.0, 500.0]), np.zeros((3, 2, 2), dtype=np.float32))
    with pytest.raises(DataError):
        HSCube(0, 2, 3, np.array([400.0, 500.0, 600.0]), np.zeros((3, 0, 2), dtype=np.float32))


def test_header_and_payload_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    cube = make_cube(rng.random((5, 4, 3)).astype(np.float32))
    path = str(tmp_path / "cube")
    save_cube(cube, path)
    back = load_cube(path)
    assert back.rows == cube.rows and back.cols == cube.cols and back.bands == cube.bands
    assert np.array_equal(back.data, cube.data)
    assert np.array_equal(back.wavelengths, cube.wavelengths)
    # a second save reproduces the payload byte for byte
    save_cube(back, str(tmp_path / "again"))
    assert (tmp_path / "again.raw").read_bytes() == (tmp_path / "cube.raw").read_bytes()
    assert (tmp_path / "again.hdr").read_text() == (tmp_path / "cube.hdr").read_text()


@pytest.mark.parametrize("order", ["bsq", "bil", "bip"])
def test_storage_orders_roundtrip(tmp_path, order):
    rng = np.random.default_rng(1)
    cube = make_cube(rng.random((4, 3, 5)).astype(np.float32))
    path = str(tmp_path / f"cube_{order}")
    save_cube(cube, path, storage_order=order)
    back = load_cube(path)
    assert np.array_equal(back.data, cube.data)


def test_load_small_header_example(tmp_path):
    # rows=2, cols=2, bands=3 -> 12 payload values
    (tmp_path / "c.hdr").write_text(
        "rows: 2\ncols: 2\nbands: 3\nstorage_order: bsq\nwavelengths: 400,500,600\n"
    )
    np.arange(12, dtype="<f4").tofile(tmp_path / "c.raw")
    cube = load_cube(str(tmp_path / "c"))
    assert cube.data.size == 12
    assert cube.data[1, 0, 1] == 5.0  # band-major layout


def test_load_826_band_header_accepted(tmp_path):
    wl = np.linspace(400.0, 1000.0, 826)
    (tmp_path / "c.hdr").write_text(
        "rows: 1\ncols: 2\nbands: 826\nstorage_order: bsq\nwavelengths: "
        + ",".join(str(v) for v in wl)
        + "\n"
    )
    np.zeros(826 * 2, dtype="<f4").tofile(tmp_path / "c.raw")
    cube = load_cube(str(tmp_path / "c"))
    assert cube.bands == 826
    assert cube.wavelengths[0] == 400.0 and cube.wavelengths[-1] == 1000.0


def test_load_errors(tmp_path):
    with pytest.raises(DataError):
        load_cube(str(tmp_path / "missing"))
    (tmp_path / "bad.hdr").write_text("rows: 2\ncols: 2\n")  # missing fields
    with pytest.raises(DataError):
        load_cube(str(tmp_path / "bad"))
    # payload shorter than rows*cols*bands
    (tmp_path / "short.hdr").write_text(
        "rows: 2\ncols: 2\nbands: 3\nstorage_order: bsq\nwavelengths: 400,500,600\n"
    )
    np.zeros(7, dtype="<f4").tofile(tmp_path / "short.raw")
    with pytest.raises(DataError, match="payload"):
        load_cube(str(tmp_path / "short"))
    # non-monotone wavelengths
    (tmp_path / "mono.hdr").write_text(
        "rows: 1\ncols: 1\nbands: 3\nstorage_order: bsq\nwavelengths: 400,600,500\n"
    )
    np.zeros(3, dtype="<f4").tofile(tmp_path / "mono.raw")
    with pytest.raises(DataError):
        load_cube(str(tmp_path / "mono"))


def test_synth_rgb_constant_cube_is_uniform():
    cube = make_cube(np.full((6, 4, 4), 0.5))
    image = synth_rgb(cube, gamma=1.0)
    assert np.all(image.rgb == 0.0)  # degenerate min-max maps to zeros
    assert np.all(image.rgb[..., 0] == image.rgb[..., 1])
    assert np.all(image.rgb[..., 1] == image.rgb[..., 2])


def test_synth_rgb_gamma_one_is_identity_normalization():
    rng = np.random.default_rng(2)
    data = rng.random((10, 5, 5)).astype(np.float32)
    cube = make_cube(data)
    image = synth_rgb(cube, gamma=1.0)
    for channel, target in enumerate((620.0, 550.0, 460.0)):
        band = nearest_band(cube, target)
        plane = cube.data[band].astype(np.float64)
        expected = (plane - plane.min()) / (plane.max() - plane.min())
        assert np.allclose(image.rgb[..., channel], expected)


def test_synth_rgb_max_pixel_hits_one():
    data = np.zeros((3, 2, 2), dtype=np.float32)
    data[:, 1, 1] = 1.0  # brightest at every picked band
    cube = make_cube(data, wavelengths=np.array([460.0, 550.0, 620.0]))
    image = synth_rgb(cube, gamma=2.0)
    assert np.all(image.rgb[1, 1] == 1.0)
    assert image.rgb.min() >= 0.0 and image.rgb.max() <= 1.0


def test_synth_rgb_requires_band_coverage():
    cube = make_cube(np.zeros((3, 2, 2)), wavelengths=np.array([1200.0, 1300.0, 1400.0]))
    with pytest.raises(DataError, match="coverage|no band"):
        synth_rgb(cube, 1.0)


def test_synth_rgb_channels_in_unit_interval(small_phantom):
    _, raw, _, _ = small_phantom
    image = synth_rgb(raw, gamma=0.7)
    assert image.rgb.min() >= 0.0 and image.rgb.max() <= 1.0

import numpy as np
import pytest

from hsipipe.cube import HSCube
from hsipipe.phantom import generate_phantom, quadrant_phantom_spec


def make_cube(data, wavelengths=None):
    """Cube from a (bands, rows, cols) array with evenly spaced wavelengths."""
    data = np.asarray(data, dtype=np.float32)
    bands, rows, cols = data.shape
    if wavelengths is None:
        wavelengths = np.linspace(400.0, 1000.0, bands)
    return HSCube(rows, cols, bands, wavelengths, data)


@pytest.fixture(scope="session")
def small_phantom():
    """16x16x20 4-class quadrant phantom with mild noise."""
    spec = quadrant_phantom_spec(rows=16, cols=16, bands=20, sigma=0.01, seed=7)
    raw, truth, refs = generate_phantom(spec)
    return spec, raw, truth, refs


@pytest.fixture(scope="session")
def clean_phantom():
    """Zero-noise 16x16x20 phantom: spectra exactly equal their endmembers."""
    spec = quadrant_phantom_spec(rows=16, cols=16, bands=20, sigma=0.0, seed=3)
    raw, truth, refs = generate_phantom(spec)
    return spec, raw, truth, refs

"""Hyperspectral cube data model, header+raw file I/O and synthetic RGB rendering.

Internal layout is row-major band-sequential (BSQ) float32: ``data[band, row, col]``,
which keeps single-band slices contiguous. Files are a plain-text header
(key:value lines) next to a little-endian float32 payload; the pair round-trips
bit-exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from .errors import DataError

NDArrayF = npt.NDArray[np.floating]

HEADER_SUFFIX = ".hdr"
PAYLOAD_SUFFIX = ".raw"

# Transpose permutation taking the file payload (its natural axis order) to the
# internal (band, row, col) layout: internal = payload.transpose(perm).
_STORAGE_PERM = {
    "bsq": (0, 1, 2),  # payload is (band, row, col)
    "bil": (1, 0, 2),  # payload is (row, band, col)
    "bip": (2, 0, 1),  # payload is (row, col, band)
}

# Synthetic-RGB target wavelengths (nm) and the accepted nearest-band slack.
RGB_TARGETS_NM = (620.0, 550.0, 460.0)
RGB_COVERAGE_TOL_NM = 60.0


@dataclass
class HSCube:
    """Dense hyperspectral cube: ``data[band, row, col]`` plus wavelength axis."""

    rows: int
    cols: int
    bands: int
    wavelengths: NDArrayF  # nm, shape (bands,), strictly increasing
    data: NDArrayF  # float32, shape (bands, rows, cols)

    def __post_init__(self):
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.rows < 1 or self.cols < 1 or self.bands < 1:
            raise DataError("cube dimensions must all be >= 1")
        if self.data.shape != (self.bands, self.rows, self.cols):
            raise DataError(
                f"data shape {self.data.shape} does not match "
                f"(bands, rows, cols)=({self.bands}, {self.rows}, {self.cols})"
            )
        if self.wavelengths.shape != (self.bands,):
            raise DataError("wavelengths length must equal band count")
        if not np.all(np.isfinite(self.wavelengths)):
            raise DataError("wavelengths must be finite")
        if self.bands > 1 and not np.all(np.diff(self.wavelengths) > 0):
            raise DataError("wavelengths must be strictly increasing")

    @property
    def n_pixels(self) -> int:
        return self.rows * self.cols

    def pixels(self) -> np.ndarray:
        """Spectra as a (rows*cols, bands) float64 matrix, row-major pixel order."""
        return self.data.reshape(self.bands, -1).T.astype(np.float64)

    def spectrum(self, row: int, col: int) -> np.ndarray:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise DataError(f"pixel ({row}, {col}) outside {self.rows}x{self.cols} image")
        return self.data[:, row, col].astype(np.float64)

    def with_data(self, data: np.ndarray, wavelengths: np.ndarray | None = None) -> "HSCube":
        """New cube sharing this cube's geometry, replacing data (and optionally wavelengths)."""
        wl = self.wavelengths if wavelengths is None else wavelengths
        return HSCube(self.rows, self.cols, data.shape[0], wl, data)


@dataclass
class CalibrationRefs:
    """White/dark reference scans. Rows may differ from the target cube
    (pushbroom line references); cols and bands must match."""

    white: NDArrayF  # (rows_w, cols, bands) -> stored as (bands, rows_w, cols)
    dark: NDArrayF

    def __post_init__(self):
        self.white = np.asarray(self.white, dtype=np.float32)
        self.dark = np.asarray(self.dark, dtype=np.float32)
        if self.white.ndim != 3 or self.dark.ndim != 3:
            raise DataError("calibration references must be 3-D (bands, rows, cols)")
        if self.white.shape[0] != self.dark.shape[0] or self.white.shape[2] != self.dark.shape[2]:
            raise DataError("white/dark references disagree in bands or cols")

    def fraction_white_above_dark(self) -> float:
        """Fraction of co-located entries with white > dark (dark broadcastable)."""
        wr = self.white.shape[1]
        dr = self.dark.shape[1]
        if wr == dr:
            return float(np.mean(self.white > self.dark))
        dark_profile = self.dark.mean(axis=1, keepdims=True)
        return float(np.mean(self.white > dark_profile))


@dataclass
class RenderedMap:
    """Per-pixel RGB triplet image, channels in [0, 1]."""

    rows: int
    cols: int
    rgb: NDArrayF  # (rows, cols, 3) float64

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        if self.rgb.shape != (self.rows, self.cols, 3):
            raise DataError("rgb shape must be (rows, cols, 3)")
        if not np.all(np.isfinite(self.rgb)):
            raise DataError("rgb channels must be finite")
        if self.rgb.min() < 0.0 or self.rgb.max() > 1.0:
            raise DataError("rgb channels must lie in [0, 1]")

    def to_uint8(self) -> np.ndarray:
        return np.round(self.rgb * 255.0).astype(np.uint8)

    def to_png_bytes(self) -> bytes:
        from io import BytesIO

        from PIL import Image

        buf = BytesIO()
        Image.fromarray(self.to_uint8(), mode="RGB").save(buf, format="PNG")
        return buf.getvalue()


def _header_path(path: str) -> str:
    return path if path.endswith(HEADER_SUFFIX) else path + HEADER_SUFFIX


def _payload_path(header_path: str) -> str:
    return header_path[: -len(HEADER_SUFFIX)] + PAYLOAD_SUFFIX


def _parse_header(text: str, path: str) -> dict:
    fields: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key: value', got {line!r}")
        key, value = line.split(":", 1)
        fields[key.strip().lower()] = value.strip()
    for key in ("rows", "cols", "bands", "storage_order", "wavelengths"):
        if key not in fields:
            raise DataError(f"{path}: missing header field '{key}'")
    try:
        rows = int(fields["rows"])
        cols = int(fields["cols"])
        bands = int(fields["bands"])
        wavelengths = np.array(
            [float(v) for v in fields["wavelengths"].split(",") if v.strip() != ""],
            dtype=np.float64,
        )
    except ValueError as exc:
        raise DataError(f"{path}: malformed numeric header field: {exc}") from exc
    order = fields["storage_order"].lower()
    if order not in _STORAGE_PERM:
        raise DataError(f"{path}: unknown storage_order {order!r}")
    if wavelengths.size != bands:
        raise DataError(
            f"{path}: wavelength list has {wavelengths.size} entries, header declares {bands} bands"
        )
    return {"rows": rows, "cols": cols, "bands": bands, "order": order, "wavelengths": wavelengths}


def load_cube(path: str) -> HSCube:
    """Load a header+raw cube pair, normalizing to the internal BSQ layout.

    ``path`` may name the header file directly or the common stem.
    """
    hdr_path = _header_path(path)
    if not os.path.exists(hdr_path):
        raise DataError(f"missing header file {hdr_path}")
    with open(hdr_path, "r", encoding="ascii") as fh:
        meta = _parse_header(fh.read(), hdr_path)
    raw_path = _payload_path(hdr_path)
    if not os.path.exists(raw_path):
        raise DataError(f"missing payload file {raw_path}")
    payload = np.fromfile(raw_path, dtype="<f4")
    expected = meta["rows"] * meta["cols"] * meta["bands"]
    if payload.size != expected:
        raise DataError(
            f"{raw_path}: payload has {payload.size} values, header implies {expected}"
        )
    perm = _STORAGE_PERM[meta["order"]]
    internal_shape = (meta["bands"], meta["rows"], meta["cols"])
    payload_shape = [0, 0, 0]
    for j in range(3):
        payload_shape[perm[j]] = internal_shape[j]
    data = payload.reshape(payload_shape).transpose(perm)
    return HSCube(meta["rows"], meta["cols"], meta["bands"], meta["wavelengths"], np.ascontiguousarray(data))


def save_cube(cube: HSCube, path: str, storage_order: str = "bsq") -> str:
    """Write a header+raw pair; returns the header path. BSQ round-trips bit-exactly."""
    if storage_order not in _STORAGE_PERM:
        raise DataError(f"unknown storage_order {storage_order!r}")
    hdr_path = _header_path(path)
    wl = ",".join(repr(float(v)) for v in cube.wavelengths)
    header = (
        f"rows: {cube.rows}\n"
        f"cols: {cube.cols}\n"
        f"bands: {cube.bands}\n"
        f"storage_order: {storage_order}\n"
        f"wavelengths: {wl}\n"
    )
    with open(hdr_path, "w", encoding="ascii") as fh:
        fh.write(header)
    perm = _STORAGE_PERM[storage_order]
    inv = np.argsort(perm)  # payload = internal.transpose(inv)
    payload = np.ascontiguousarray(cube.data.transpose(inv))
    payload.astype("<f4").tofile(_payload_path(hdr_path))
    return hdr_path


def nearest_band(cube: HSCube, target_nm: float) -> int:
    return int(np.argmin(np.abs(cube.wavelengths - target_nm)))


def synth_rgb(cube: HSCube, gamma: float = 1.0) -> RenderedMap:
    """Synthetic RGB: nearest bands to 620/550/460 nm, per-image min-max, 1/gamma curve."""
    if gamma <= 0:
        raise DataError("gamma must be positive")
    channels = []
    for target in RGB_TARGETS_NM:
        idx = nearest_band(cube, target)
        if abs(cube.wavelengths[idx] - target) > RGB_COVERAGE_TOL_NM:
            raise DataError(
                f"no band within {RGB_COVERAGE_TOL_NM} nm of {target} nm "
                f"(nearest is {cube.wavelengths[idx]:.1f} nm)"
            )
        plane = cube.data[idx].astype(np.float64)
        lo, hi = plane.min(), plane.max()
        if hi > lo:
            plane = (plane - lo) / (hi - lo)
        else:
            plane = np.zeros_like(plane)
        channels.append(plane ** (1.0 / gamma))
    rgb = np.stack(channels, axis=-1)
    return RenderedMap(cube.rows, cube.cols, rgb)

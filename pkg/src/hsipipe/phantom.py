"""Synthetic phantom cubes with exact ground truth.

A phantom is a region layout (rectangles/discs, one tissue class each), one
endmember spectrum per class, Gaussian pixel noise and a seed. The generator
returns the raw cube together with calibration references chosen so that
radiometric calibration recovers the intended reflectance exactly, plus the
ground-truth label map. Downstream stages are tested against that truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .cube import CalibrationRefs, HSCube
from .errors import ConfigError
from .labeling import LabelMap, TISSUE_CLASSES, spectral_angle

DEFAULT_SAM_FLOOR = 0.3  # rad


@dataclass
class Region:
    shape: str  # "rect" | "disc"
    class_code: int
    params: dict

    def paint(self, codes: np.ndarray) -> None:
        rows, cols = codes.shape
        if self.shape == "rect":
            r0, c0 = int(self.params["r0"]), int(self.params["c0"])
            r1, c1 = int(self.params["r1"]), int(self.params["c1"])
            if not (0 <= r0 < r1 <= rows and 0 <= c0 < c1 <= cols):
                raise ConfigError(f"rect {self.params} outside {rows}x{cols} image")
            codes[r0:r1, c0:c1] = self.class_code
        elif self.shape == "disc":
            cr, cc = float(self.params["cr"]), float(self.params["cc"])
            radius = float(self.params["radius"])
            if radius <= 0:
                raise ConfigError("disc radius must be positive")
            rr, cc_grid = np.mgrid[0:rows, 0:cols]
            codes[(rr - cr) ** 2 + (cc_grid - cc) ** 2 <= radius**2] = self.class_code
        else:
            raise ConfigError(f"unknown region shape {self.shape!r}")


@dataclass
class PhantomSpec:
    rows: int
    cols: int
    bands: int
    regions: list
    endmembers: dict  # class code -> spectrum (bands,)
    sigma: float = 0.0
    seed: int = 0
    sam_floor: float = DEFAULT_SAM_FLOOR
    wavelength_start: float = 400.0
    wavelength_end: float = 1000.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.bands < 1:
            raise ConfigError("phantom dimensions must be >= 1")
        if self.sigma < 0:
            raise ConfigError("noise sigma must be >= 0")
        self.endmembers = {
            int(k): np.asarray(v, dtype=np.float64) for k, v in self.endmembers.items()
        }
        for code, spec in self.endmembers.items():
            if code not in TISSUE_CLASSES:
                raise ConfigError(f"endmember class {code} not a tissue class")
            if spec.shape != (self.bands,):
                raise ConfigError(f"endmember for class {code} must have {self.bands} entries")

    @property
    def wavelengths(self) -> np.ndarray:
        return np.linspace(self.wavelength_start, self.wavelength_end, self.bands)

    def to_json(self) -> str:
        doc = {
            "rows": self.rows,
            "cols": self.cols,
            "bands": self.bands,
            "sigma": self.sigma,
            "seed": self.seed,
            "sam_floor": self.sam_floor,
            "wavelength_start": self.wavelength_start,
            "wavelength_end": self.wavelength_end,
            "regions": [
                {"shape": r.shape, "class": r.class_code, **r.params} for r in self.regions
            ],
            "endmembers": {str(k): list(map(float, v)) for k, v in self.endmembers.items()},
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "PhantomSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"phantom spec is not valid JSON: {exc}") from exc
        try:
            regions = [
                Region(
                    r["shape"],
                    int(r["class"]),
                    {k: v for k, v in r.items() if k not in ("shape", "class")},
                )
                for r in doc["regions"]
            ]
            return PhantomSpec(
                rows=int(doc["rows"]),
                cols=int(doc["cols"]),
                bands=int(doc["bands"]),
                regions=regions,
                endmembers=doc["endmembers"],
                sigma=float(doc.get("sigma", 0.0)),
                seed=int(doc.get("seed", 0)),
                sam_floor=float(doc.get("sam_floor", DEFAULT_SAM_FLOOR)),
                wavelength_start=float(doc.get("wavelength_start", 400.0)),
                wavelength_end=float(doc.get("wavelength_end", 1000.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"phantom spec missing/invalid field: {exc}") from exc


def default_endmembers(bands: int) -> dict:
    """Four smooth spectra in [0.2, 0.85], pairwise SAM >= 0.40 rad."""
    x = np.linspace(0.0, 1.0, bands)
    return {
        1: 0.25 + 0.55 * x,
        2: 0.80 - 0.55 * x,
        3: 0.20 + 0.65 * np.exp(-(((x - 0.30) / 0.13) ** 2)),
        4: 0.20 + 0.65 * np.exp(-(((x - 0.80) / 0.13) ** 2)),
    }


def quadrant_phantom_spec(
    rows: int = 64, cols: int = 64, bands: int = 129, sigma: float = 0.01, seed: int = 0
) -> PhantomSpec:
    """Standard 4-class phantom: one class per image quadrant."""
    rm, cm = rows // 2, cols // 2
    regions = [
        Region("rect", 1, {"r0": 0, "c0": 0, "r1": rm, "c1": cm}),
        Region("rect", 2, {"r0": 0, "c0": cm, "r1": rm, "c1": cols}),
        Region("rect", 3, {"r0": rm, "c0": 0, "r1": rows, "c1": cm}),
        Region("rect", 4, {"r0": rm, "c0": cm, "r1": rows, "c1": cols}),
    ]
    return PhantomSpec(rows, cols, bands, regions, default_endmembers(bands), sigma, seed)


def _white_level(endmembers: dict) -> float:
    """Smallest power of two >= 2x the max endmember value.

    A power-of-two white level with a zero dark level makes calibration an
    exact binary scaling, so the generated raw cube calibrates back to the
    intended reflectance bit-exactly.
    """
    peak = max(float(np.max(np.abs(v))) for v in endmembers.values())
    return float(2.0 ** math.ceil(math.log2(max(2.0 * peak, 1e-12))))


def generate_phantom(spec: PhantomSpec):
    """Build (raw HSCube, ground-truth LabelMap, CalibrationRefs) from a spec."""
    codes = np.zeros((spec.rows, spec.cols), dtype=np.uint8)
    for region in spec.regions:
        if region.class_code not in spec.endmembers:
            raise ConfigError(f"region uses class {region.class_code} with no endmember")
        region.paint(codes)
    if np.any(codes == 0):
        raise ConfigError("regions do not tile the image: uncovered pixels remain")

    classes = sorted(spec.endmembers)
    for i, a in enumerate(classes):
        for b in classes[i + 1 :]:
            ang = spectral_angle(spec.endmembers[a], spec.endmembers[b])
            if ang < spec.sam_floor:
                raise ConfigError(
                    f"endmembers {a} and {b} are near-parallel "
                    f"(SAM {ang:.3f} < floor {spec.sam_floor})"
                )

    reflect = np.empty((spec.bands, spec.rows, spec.cols), dtype=np.float32)
    for code in classes:
        member = codes == code
        reflect[:, member] = spec.endmembers[code][:, None].astype(np.float32)
    if spec.sigma > 0:
        rng = np.random.default_rng(spec.seed)
        noise = rng.normal(0.0, spec.sigma, size=reflect.shape)
        reflect = (reflect.astype(np.float64) + noise).astype(np.float32)

    white_level = _white_level(spec.endmembers)
    raw = HSCube(spec.rows, spec.cols, spec.bands, spec.wavelengths, reflect * np.float32(white_level))

    ref_rows = min(spec.rows, 4)
    white = np.full((spec.bands, ref_rows, spec.cols), white_level, dtype=np.float32)
    dark = np.zeros_like(white)
    refs = CalibrationRefs(white, dark)
    return raw, LabelMap(spec.rows, spec.cols, codes), refs

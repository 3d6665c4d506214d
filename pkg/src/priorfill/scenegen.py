"""Procedural synthetic scenes with analytically known ground truth.

Four kinds probe the aligner differently: ``planes`` is piecewise affine,
``steps`` has sharp discontinuities that stress support sets straddling
edges, ``spheres`` adds curvature, and ``fractal`` is a generic value-noise
heightfield. Everything is a pure function of its spec, bitwise
reproducible for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DepthMap, Grid, RelativePrediction, ValidityMask
from .errors import BadSpec

SCENE_KINDS = ("planes", "steps", "spheres", "fractal")
STEP_LEVELS = 6  # distinct depth values in a "steps" scene


@dataclass(frozen=True)
class SceneSpec:
    kind: str
    width: int
    height: int
    depth_range: tuple[float, float]
    seed: int

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise BadSpec(f"unknown scene kind {self.kind!r}")
        if self.width < 8 or self.height < 8:
            raise BadSpec("scene must be at least 8x8")
        lo, hi = self.depth_range
        if not (np.isfinite(lo) and np.isfinite(hi) and 0 < lo < hi):
            raise BadSpec(f"bad depth range {self.depth_range!r}")
        if not (0 <= int(self.seed) < 2**64):
            raise BadSpec("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class GammaDistortion:
    """d -> d_min * (d / d_min)**gamma; preserves the lower range endpoint."""

    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise BadSpec(f"gamma must be positive, got {self.gamma!r}")


@dataclass(frozen=True)
class SmoothNoiseDistortion:
    """Additive bilinear value noise, amplitude in prediction units."""

    amplitude: float
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.amplitude) and self.amplitude >= 0):
            raise BadSpec(f"amplitude must be >= 0, got {self.amplitude!r}")


Distortion = GammaDistortion | SmoothNoiseDistortion | None


@dataclass(frozen=True)
class PredictionSpec:
    """Controllable surrogate prediction: distort(a * gt + b)."""

    affine: tuple[float, float] = (1.0, 0.0)
    distortion: Distortion = None

    def __post_init__(self):
        a, b = self.affine
        if not (np.isfinite(a) and np.isfinite(b) and a > 0):
            raise BadSpec(f"affine scale must be positive, got {self.affine!r}")


def _value_noise(
    height: int, width: int, rng: np.random.Generator, cell: int, octaves: int
) -> np.ndarray:
    """Multi-octave bilinear lattice noise in [0, 1), float64."""
    out = np.zeros((height, width), dtype=np.float64)
    amp, total, c = 1.0, 0.0, max(1, cell)
    for _ in range(octaves):
        lattice = rng.random((height // c + 2, width // c + 2))
        ys = np.arange(height, dtype=np.float64) / c
        xs = np.arange(width, dtype=np.float64) / c
        y0 = ys.astype(np.int64)
        x0 = xs.astype(np.int64)
        fy = ys - y0
        fx = xs - x0
        sy = (fy * fy * (3.0 - 2.0 * fy))[:, None]
        sx = (fx * fx * (3.0 - 2.0 * fx))[None, :]
        n00 = lattice[np.ix_(y0, x0)]
        n01 = lattice[np.ix_(y0, x0 + 1)]
        n10 = lattice[np.ix_(y0 + 1, x0)]
        n11 = lattice[np.ix_(y0 + 1, x0 + 1)]
        top = n00 + sx * (n01 - n00)
        bot = n10 + sx * (n11 - n10)
        out += amp * (top + sy * (bot - top))
        total += amp
        amp *= 0.5
        c = max(1, c // 2)
    return out / total


def _mesh(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = np.meshgrid(
        np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64)
    )
    return xs, ys


def _planes(height, width, rng):
    xs, ys = _mesh(height, width)
    region = np.zeros((height, width), dtype=np.int64)
    for _ in range(2):
        angle = rng.uniform(0.0, 2.0 * np.pi)
        cx = rng.uniform(0.25, 0.75) * width
        cy = rng.uniform(0.25, 0.75) * height
        side = (xs - cx) * np.cos(angle) + (ys - cy) * np.sin(angle) > 0
        region = region * 2 + side
    field = np.zeros((height, width), dtype=np.float64)
    for rid in np.unique(region):
        gx = rng.uniform(-1.0, 1.0) / width
        gy = rng.uniform(-1.0, 1.0) / height
        off = rng.uniform(0.0, 1.5)
        sel = region == rid
        field[sel] = gx * xs[sel] + gy * ys[sel] + off
    return field


def _steps(height, width, rng):
    base = _value_noise(height, width, rng, cell=max(4, min(height, width) // 3), octaves=2)
    span = base.max() - base.min()
    if span <= 0:  # constant noise cannot happen in practice, keep it legal
        base = np.linspace(0.0, 1.0, height * width).reshape(height, width)
        span = 1.0
    norm = (base - base.min()) / span
    levels = np.minimum((norm * STEP_LEVELS).astype(np.int64), STEP_LEVELS - 1)
    return levels.astype(np.float64) / (STEP_LEVELS - 1)


def _spheres(height, width, rng):
    xs, ys = _mesh(height, width)
    scale = float(min(height, width))
    field = 1.5 + 0.3 * (xs / width) * rng.uniform(-1, 1) + 0.3 * (ys / height) * rng.uniform(-1, 1)
    for _ in range(4):
        r = rng.uniform(0.15, 0.35) * scale
        cx = rng.uniform(0.0, width)
        cy = rng.uniform(0.0, height)
        d2 = (xs - cx) ** 2 + (ys - cy) ** 2
        field -= np.sqrt(np.maximum(r * r - d2, 0.0)) / scale
    return field


def _fractal(height, width, rng):
    return _value_noise(height, width, rng, cell=max(4, min(height, width) // 4), octaves=4)


_GENERATORS = {
    "planes": _planes,
    "steps": _steps,
    "spheres": _spheres,
    "fractal": _fractal,
}


def _rescale_to_range(field: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Affinely map a raw field into [lo, hi] and store as float32.

    The float32 clip bounds are nudged inward so rounding can never push a
    stored value outside the requested range.
    """
    fmin, fmax = field.min(), field.max()
    if fmax - fmin <= 0:
        field = field + np.linspace(0.0, 1.0, field.size).reshape(field.shape)
        fmin, fmax = field.min(), field.max()
    scaled = lo + (field - fmin) * ((hi - lo) / (fmax - fmin))
    out = scaled.astype(np.float32)
    lo32 = np.float32(lo)
    if float(lo32) < lo:
        lo32 = np.nextafter(lo32, np.float32(np.inf))
    hi32 = np.float32(hi)
    if float(hi32) > hi:
        hi32 = np.nextafter(hi32, np.float32(-np.inf))
    return np.clip(out, lo32, hi32)


def generate_scene(spec: SceneSpec) -> DepthMap:
    """Render a fully valid ground-truth depth map for the spec."""
    rng = np.random.Generator(np.random.PCG64(int(spec.seed)))
    raw = _GENERATORS[spec.kind](spec.height, spec.width, rng)
    lo, hi = spec.depth_range
    depth = _rescale_to_range(raw, float(lo), float(hi))
    mask = np.ones((spec.height, spec.width), dtype=bool)
    return DepthMap(Grid(depth), ValidityMask(mask))


def derive_prediction(gt: DepthMap, spec: PredictionSpec) -> RelativePrediction:
    """Turn ground truth into a surrogate relative prediction.

    With no distortion the prediction is an exact affine image of the
    ground truth; gamma warps structure while preserving positivity and the
    lower endpoint; smooth noise adds a low-frequency additive field.
    """
    if not gt.is_fully_valid():
        raise BadSpec("prediction derivation needs a fully valid ground truth")
    a, b = spec.affine
    vals = a * gt.depth.values.astype(np.float64) + b
    dist = spec.distortion
    if isinstance(dist, GammaDistortion):
        if dist.gamma != 1.0:  # gamma 1 is the identity, bit-exactly
            dmin = vals.min()
            if dmin <= 0:
                raise BadSpec("gamma distortion needs strictly positive values")
            vals = dmin * (vals / dmin) ** dist.gamma
    elif isinstance(dist, SmoothNoiseDistortion):
        if dist.amplitude > 0:
            rng = np.random.Generator(np.random.PCG64(int(dist.seed)))
            noise = _value_noise(
                gt.height, gt.width, rng, cell=max(4, min(gt.height, gt.width) // 6), octaves=3
            )
            vals = vals + dist.amplitude * (2.0 * noise - 1.0)
    if not np.isfinite(vals).all():
        raise BadSpec("prediction spec produced non-finite values")
    return RelativePrediction(Grid(vals.astype(np.float32)))

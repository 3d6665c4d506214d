"""Degradation operators turning dense ground truth into depth priors.

Every operator keeps the input's grid resolution and returns a DepthMap
whose valid set is a subset of the input's; only ``perturb`` changes depth
values. Sampling counts that come out fractional are rounded half-to-even
so tests can be exact. All randomness flows through a per-call seeded
generator, so outputs are bitwise deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import ndimage

from .core import DEPTH_FLOOR, DepthMap, Grid, ValidityMask
from .errors import BadSpec, DimensionMismatch, NotEnoughPixels

# Relative jump that counts as a depth discontinuity for boundary noise.
DISCONTINUITY_FRACTION = 0.05


@dataclass(frozen=True)
class SparseRandom:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise BadSpec("sparse sample needs n >= 1")


@dataclass(frozen=True)
class SparseKeypoint:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise BadSpec("keypoint sample needs n >= 1")


@dataclass(frozen=True)
class LidarLines:
    lines: int

    def __post_init__(self):
        if self.lines < 1:
            raise BadSpec("need at least one line")


@dataclass(frozen=True)
class LowRes:
    factor: int

    def __post_init__(self):
        if int(self.factor) != self.factor or self.factor < 2:
            raise BadSpec("downsample factor must be an integer >= 2")


@dataclass(frozen=True)
class RangeMask:
    threshold_m: float

    def __post_init__(self):
        if not (np.isfinite(self.threshold_m) and self.threshold_m > 0):
            raise BadSpec("range threshold must be positive")


@dataclass(frozen=True)
class SquareMask:
    side_px: int
    center: tuple[int, int] | None = None

    def __post_init__(self):
        if self.side_px < 1:
            raise BadSpec("square side must be >= 1")


@dataclass(frozen=True)
class MaskFile:
    """Externally supplied hole mask; true bits mark pixels to remove."""

    mask: ValidityMask


Pattern = Union[
    SparseRandom, SparseKeypoint, LidarLines, LowRes, RangeMask, SquareMask, MaskFile
]


@dataclass(frozen=True)
class PriorSpec:
    pattern: Pattern
    seed: int = 0


@dataclass(frozen=True)
class NoiseSpec:
    outlier_fraction: float = 0.01
    outlier_range: tuple[float, float] = (0.1, 10.0)
    boundary_noise_sigma: float = 0.05
    boundary_band_px: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise BadSpec("outlier fraction must be in [0, 1]")
        lo, hi = self.outlier_range
        # a collapsed range (lo == hi) is legal and draws the single value
        if not (np.isfinite(lo) and np.isfinite(hi) and 0 < lo <= hi):
            raise BadSpec(f"bad outlier range {self.outlier_range!r}")
        if self.boundary_noise_sigma < 0:
            raise BadSpec("boundary noise sigma must be >= 0")
        if self.boundary_band_px < 0:
            raise BadSpec("boundary band must be >= 0")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def _half_even(x: float) -> int:
    return int(round(x))


def _subsample(gt: DepthMap, keep_rows: np.ndarray) -> DepthMap:
    """Build the prior keeping `keep_rows` indices of gt's valid coords."""
    coords = gt.mask.coords()
    bits = np.zeros(gt.mask.shape, dtype=bool)
    sel = coords[keep_rows]
    bits[sel[:, 1], sel[:, 0]] = True
    vals = np.where(bits, gt.depth.values, np.float32(0.0))
    return DepthMap(Grid(vals), ValidityMask(bits))


def sample_sparse_random(gt: DepthMap, n: int, seed: int = 0) -> DepthMap:
    """Keep n uniformly chosen valid pixels, without replacement."""
    SparseRandom(n)
    total = gt.mask.count()
    if total < n:
        raise NotEnoughPixels(f"requested {n} of {total} valid pixels")
    pick = _rng(seed).choice(total, size=n, replace=False)
    return _subsample(gt, pick)


def _neighbor_jump(vals: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Largest absolute difference to a valid 4-neighbor, per pixel."""
    v = vals.astype(np.float64)
    jump = np.zeros(v.shape, dtype=np.float64)
    dx = np.where(bits[:, 1:] & bits[:, :-1], np.abs(np.diff(v, axis=1)), 0.0)
    dy = np.where(bits[1:, :] & bits[:-1, :], np.abs(np.diff(v, axis=0)), 0.0)
    np.maximum(jump[:, :-1], dx, out=jump[:, :-1])
    np.maximum(jump[:, 1:], dx, out=jump[:, 1:])
    np.maximum(jump[:-1, :], dy, out=jump[:-1, :])
    np.maximum(jump[1:, :], dy, out=jump[1:, :])
    return jump


def sample_keypoints(gt: DepthMap, n: int, seed: int = 0) -> DepthMap:
    """Keep n pixels drawn with probability proportional to the local
    depth-gradient magnitude.

    Stands in for feature detectors: samples cluster on structure edges. A
    tiny probability floor keeps every valid pixel reachable; a constant
    map falls back to uniform sampling.
    """
    SparseKeypoint(n)
    total = gt.mask.count()
    if total < n:
        raise NotEnoughPixels(f"requested {n} of {total} valid pixels")
    jump = _neighbor_jump(gt.depth.values, gt.mask.bits)
    weights = jump[gt.mask.bits]
    rng = _rng(seed)
    if weights.max() <= 0:
        pick = rng.choice(total, size=n, replace=False)
    else:
        p = weights + weights.max() * 1e-9
        pick = rng.choice(total, size=n, replace=False, p=p / p.sum())
    return _subsample(gt, pick)


def sample_lidar_lines(gt: DepthMap, lines: int, seed: int = 0) -> DepthMap:
    """Keep all valid pixels on `lines` evenly spaced rows (seeded phase)."""
    LidarLines(lines)
    if lines > gt.height:
        raise BadSpec(f"{lines} lines exceed {gt.height} rows")
    spacing = gt.height / lines
    phase = _rng(seed).uniform(0.0, spacing)
    rows = np.floor(phase + spacing * np.arange(lines)).astype(np.int64)
    bits = np.zeros(gt.mask.shape, dtype=bool)
    bits[rows, :] = gt.mask.bits[rows, :]
    vals = np.where(bits, gt.depth.values, np.float32(0.0))
    return DepthMap(Grid(vals), ValidityMask(bits))


def downsample_prior(gt: DepthMap, factor: int) -> DepthMap:
    """Keep the center pixel of each factor x factor tile."""
    LowRes(factor)
    factor = int(factor)
    h, w = gt.mask.shape
    c = factor // 2
    ys = np.minimum(np.arange(0, h, factor) + c, h - 1)
    xs = np.minimum(np.arange(0, w, factor) + c, w - 1)
    bits = np.zeros((h, w), dtype=bool)
    bits[np.ix_(ys, xs)] = gt.mask.bits[np.ix_(ys, xs)]
    vals = np.where(bits, gt.depth.values, np.float32(0.0))
    return DepthMap(Grid(vals), ValidityMask(bits))


def mask_range(gt: DepthMap, threshold_m: float) -> DepthMap:
    """Drop pixels deeper than the threshold (limited-range sensor)."""
    RangeMask(threshold_m)
    bits = gt.mask.bits & (gt.depth.values <= np.float64(threshold_m))
    vals = np.where(bits, gt.depth.values, np.float32(0.0))
    return DepthMap(Grid(vals), ValidityMask(bits))


def mask_square(
    gt: DepthMap,
    side_px: int,
    center: tuple[int, int] | None = None,
    seed: int = 0,
) -> DepthMap:
    """Invalidate a square patch; center is seeded-random when omitted."""
    SquareMask(side_px, center)
    h, w = gt.mask.shape
    if side_px > min(h, w):
        raise BadSpec(f"square side {side_px} exceeds grid {w}x{h}")
    if center is None:
        rng = _rng(seed)
        cx = int(rng.integers(0, w))
        cy = int(rng.integers(0, h))
    else:
        cx, cy = center
    x0 = max(cx - side_px // 2, 0)
    y0 = max(cy - side_px // 2, 0)
    x1 = min(x0 + side_px, w)
    y1 = min(y0 + side_px, h)
    bits = gt.mask.bits.copy()
    bits[y0:y1, x0:x1] = False
    vals = np.where(bits, gt.depth.values, np.float32(0.0))
    return DepthMap(Grid(vals), ValidityMask(bits))


def mask_from_file(gt: DepthMap, mask: ValidityMask) -> DepthMap:
    """Apply an externally supplied hole mask (true bits mark the hole)."""
    if mask.shape != gt.mask.shape:
        raise DimensionMismatch(f"mask {mask.shape} vs map {gt.mask.shape}")
    bits = gt.mask.bits & ~mask.bits
    vals = np.where(bits, gt.depth.values, np.float32(0.0))
    return DepthMap(Grid(vals), ValidityMask(bits))


def apply_prior(gt: DepthMap, spec: PriorSpec) -> DepthMap:
    p = spec.pattern
    if isinstance(p, SparseRandom):
        return sample_sparse_random(gt, p.n, spec.seed)
    if isinstance(p, SparseKeypoint):
        return sample_keypoints(gt, p.n, spec.seed)
    if isinstance(p, LidarLines):
        return sample_lidar_lines(gt, p.lines, spec.seed)
    if isinstance(p, LowRes):
        return downsample_prior(gt, p.factor)
    if isinstance(p, RangeMask):
        return mask_range(gt, p.threshold_m)
    if isinstance(p, SquareMask):
        return mask_square(gt, p.side_px, p.center, spec.seed)
    if isinstance(p, MaskFile):
        return mask_from_file(gt, p.mask)
    raise BadSpec(f"unknown prior pattern {type(p).__name__}")


def mix(gt: DepthMap, specs: Sequence[PriorSpec]) -> DepthMap:
    """Apply degradations left to right; samplers draw from the running
    valid set, masking operators intersect with it."""
    result = gt
    for spec in specs:
        result = apply_prior(result, spec)
    return result


def perturb(prior: DepthMap, noise: NoiseSpec) -> DepthMap:
    """Add measurement noise: seeded outlier replacement everywhere, then
    Gaussian jitter in a Chebyshev band around depth discontinuities.

    Discontinuities are found on the unperturbed input (neighbor jump above
    5% of the local depth). The mask never changes; perturbed values are
    floored at DEPTH_FLOOR to stay positive.
    """
    bits = prior.mask.bits
    out = prior.depth.values.astype(np.float64)
    rng = _rng(noise.seed)
    total = prior.mask.count()

    n_out = _half_even(noise.outlier_fraction * total)
    if n_out > 0:
        coords = prior.mask.coords()
        pick = rng.choice(total, size=n_out, replace=False)
        lo, hi = noise.outlier_range
        draws = rng.uniform(lo, hi, size=n_out)
        sel = coords[pick]
        out[sel[:, 1], sel[:, 0]] = draws

    if noise.boundary_noise_sigma > 0 and total > 0:
        jump = _neighbor_jump(prior.depth.values, bits)
        disc = bits & (jump > DISCONTINUITY_FRACTION * prior.depth.values)
        if disc.any():
            size = 2 * noise.boundary_band_px + 1
            band = ndimage.maximum_filter(disc, size=size, mode="constant") & bits
            out[band] += rng.normal(0.0, noise.boundary_noise_sigma, size=int(band.sum()))

    out = np.where(bits, np.maximum(out, DEPTH_FLOOR), 0.0)
    return DepthMap(Grid(out.astype(np.float32)), ValidityMask(bits))


def prior_from_confidence(
    depth: DepthMap, confidence: Grid, top_fraction: float
) -> DepthMap:
    """Keep the most confident fraction of valid pixels (ties row-major)."""
    if confidence.shape != depth.mask.shape:
        raise DimensionMismatch(
            f"confidence {confidence.shape} vs map {depth.mask.shape}"
        )
    if not 0 < top_fraction <= 1:
        raise BadSpec("top fraction must be in (0, 1]")
    total = depth.mask.count()
    keep = _half_even(top_fraction * total)
    conf = confidence.values[depth.mask.bits]  # row-major over valid pixels
    order = np.argsort(-conf.astype(np.float64), kind="stable")
    return _subsample(depth, order[:keep])

"""Grid, mask, and depth-map types shared by every other module.

Conventions: x is the column, y is the row, origin at the top-left. Values
are stored as float32 row-major arrays; all reductions elsewhere accumulate
in float64. Invalid pixels hold 0 behind an explicit mask, never NaN. All
types are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateCoordinate,
    NonPositiveDepth,
    OutOfBounds,
)


# Floor applied wherever an operation must force a depth to stay positive.
DEPTH_FLOOR = 1e-4


def _as_locked(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, order="C", copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Grid:
    """Dense 2-D scalar field, shape (height, width), finite float32."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_locked(self.values, np.float32)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("grid must be a non-empty 2-D array")
        if not np.isfinite(arr).all():
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class ValidityMask:
    """Boolean validity bits paired with a Grid of the same shape."""

    bits: np.ndarray

    def __post_init__(self):
        arr = _as_locked(self.bits, bool)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("mask must be a non-empty 2-D array")
        object.__setattr__(self, "bits", arr)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())

    def coords(self) -> np.ndarray:
        """Valid coordinates as an (n, 2) int array of (x, y), row-major."""
        ys, xs = np.nonzero(self.bits)
        return np.column_stack([xs, ys]).astype(np.int64)


@dataclass(frozen=True)
class DepthMap:
    """Metric depth in meters plus validity. Invalid pixels store 0."""

    depth: Grid
    mask: ValidityMask

    def __post_init__(self):
        if self.depth.shape != self.mask.shape:
            raise DimensionMismatch(
                f"depth {self.depth.shape} vs mask {self.mask.shape}"
            )
        vals = self.depth.values
        bits = self.mask.bits
        if vals[bits].size and not (vals[bits] > 0).all():
            raise NonPositiveDepth("valid pixels must hold positive depth")
        if ((vals != 0) & ~bits).any():
            # canonicalize: invalid pixels are stored as exact zero
            object.__setattr__(self, "depth", Grid(np.where(bits, vals, 0.0)))

    @property
    def width(self) -> int:
        return self.depth.width

    @property
    def height(self) -> int:
        return self.depth.height

    @classmethod
    def from_arrays(cls, values: np.ndarray, bits: np.ndarray) -> "DepthMap":
        return cls(Grid(values), ValidityMask(bits))

    def is_fully_valid(self) -> bool:
        return bool(self.mask.bits.all())


@dataclass(frozen=True)
class RelativePrediction:
    """Dense unitless relative-depth map; no validity mask."""

    pred: Grid

    @property
    def width(self) -> int:
        return self.pred.width

    @property
    def height(self) -> int:
        return self.pred.height


@dataclass(frozen=True)
class AffineFit:
    """Scale/shift pair mapping prediction units to meters."""

    scale: float
    shift: float
    degenerate: bool = field(default=False)

    def __post_init__(self):
        if not (np.isfinite(self.scale) and np.isfinite(self.shift)):
            raise ValueError("affine fit must be finite")
        if self.degenerate and self.scale != 1.0:
            raise ValueError("degenerate fit implies scale == 1")

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(values, dtype=np.float64) + self.shift


def new_depth_map(
    width: int, height: int, entries: list[tuple[int, int, float]]
) -> DepthMap:
    """Build a DepthMap from sparse (x, y, depth_m) entries.

    Raises OutOfBounds, NonPositiveDepth, or DuplicateCoordinate when an
    entry violates the contract.
    """
    if width < 1 or height < 1:
        raise ValueError("width and height must be positive")
    vals = np.zeros((height, width), dtype=np.float32)
    bits = np.zeros((height, width), dtype=bool)
    for x, y, d in entries:
        if not (0 <= x < width and 0 <= y < height):
            raise OutOfBounds(f"({x}, {y}) outside {width}x{height}")
        if not (np.isfinite(d) and d > 0):
            raise NonPositiveDepth(f"depth {d!r} at ({x}, {y})")
        if bits[y, x]:
            raise DuplicateCoordinate(f"({x}, {y}) listed twice")
        bits[y, x] = True
        vals[y, x] = d
    return DepthMap.from_arrays(vals, bits)


def valid_coords(depth_map: DepthMap) -> list[tuple[int, int]]:
    """Valid (x, y) coordinates in row-major order (y ascending, then x)."""
    return [(int(x), int(y)) for x, y in depth_map.mask.coords()]


def count_valid(depth_map: DepthMap) -> int:
    return depth_map.mask.count()

"""Coarse metric alignment and its baselines.

The filler treats each missing pixel independently: find the k nearest
valid prior pixels, fit scale/shift mapping prediction values to prior
depths over those supports (optionally down-weighting far supports by
inverse pixel distance), and evaluate the fit at the missing pixel. Valid
pixels pass through untouched, bit for bit.

Nearest neighbors are exact. Candidate sets come from a k-d tree, then get
re-ranked with integer squared distances so ties always break in row-major
insertion order; a brute-force fallback handles tie classes that straddle
the candidate boundary. Fits are closed-form weighted least squares in
float64; output grids store float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import (
    DEPTH_FLOOR,
    AffineFit,
    DepthMap,
    Grid,
    RelativePrediction,
    ValidityMask,
)
from .errors import (
    BadRange,
    BadSpec,
    Degenerate,
    DimensionMismatch,
    Empty,
    EmptyPrior,
    NoSamples,
)

WEIGHTINGS = ("uniform", "inverse_distance")

# Extra neighbors fetched per query so equidistant ties crossing the
# k-boundary are usually resolved without a second pass.
_TIE_SLACK = 16


@dataclass(frozen=True)
class FillConfig:
    k: int = 5
    weighting: str = "inverse_distance"
    min_scale_variance: float = 1e-12

    def __post_init__(self):
        if self.k < 1:
            raise BadSpec("k must be >= 1")
        if self.weighting not in WEIGHTINGS:
            raise BadSpec(f"weighting must be one of {WEIGHTINGS}")
        if self.min_scale_variance < 0:
            raise BadSpec("min_scale_variance must be >= 0")


@dataclass(frozen=True)
class FillResult:
    depth_map: DepthMap
    clamped: int  # fills forced up to DEPTH_FLOOR to stay positive


class SpatialIndex:
    """Immutable exact nearest-neighbor index over valid coordinates.

    Queries rank by Euclidean pixel distance, ties by row-major coordinate
    order (the insertion order of the points).
    """

    def __init__(self, coords: np.ndarray):
        coords = np.ascontiguousarray(coords, dtype=np.int64)
        if coords.ndim != 2 or coords.shape[1] != 2 or len(coords) == 0:
            raise EmptyPrior("index needs at least one valid coordinate")
        coords.setflags(write=False)
        self._coords = coords
        self._tree = cKDTree(coords)

    @property
    def size(self) -> int:
        return len(self._coords)

    @property
    def coords(self) -> np.ndarray:
        return self._coords


def build_index(prior: DepthMap) -> SpatialIndex:
    if prior.mask.count() == 0:
        raise EmptyPrior("prior has no valid pixels")
    return SpatialIndex(prior.mask.coords())


def _knn_batch(index: SpatialIndex, queries: np.ndarray, k: int):
    """Exact k nearest neighbors for each query row.

    Returns (point_rows, d2): both (m, k), ordered by ascending squared
    distance with row-major tie-break. k is clamped to the index size by
    the caller.
    """
    pts = index.coords
    n = index.size
    m = len(queries)
    kq = min(n, k + _TIE_SLACK)
    _, cand = index._tree.query(queries, k=kq, workers=1)
    cand = np.asarray(cand, dtype=np.int64).reshape(m, kq)
    diff = pts[cand] - queries[:, None, :]
    d2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
    key = d2 * np.int64(n) + cand  # exact lexicographic (d2, insertion idx)
    order = np.argsort(key, axis=1, kind="stable")[:, :k]
    top = np.take_along_axis(cand, order, axis=1)
    top_d2 = np.take_along_axis(d2, order, axis=1)

    if kq < n:
        # a tie class may extend past the fetched candidates only when the
        # farthest candidate sits at the k-th distance
        far = np.take_along_axis(d2, np.argsort(d2, axis=1)[:, -1:], axis=1)[:, 0]
        unresolved = np.nonzero(far == top_d2[:, k - 1])[0]
        for i in unresolved:
            dd = pts - queries[i]
            d2_all = dd[:, 0] ** 2 + dd[:, 1] ** 2
            key_all = d2_all * np.int64(n) + np.arange(n, dtype=np.int64)
            best = np.argpartition(key_all, k - 1)[:k]
            best = best[np.argsort(key_all[best])]
            top[i] = best
            top_d2[i] = d2_all[best]
    return top, top_d2


def knn(
    index: SpatialIndex, query: tuple[int, int], k: int
) -> list[tuple[tuple[int, int], float]]:
    """The min(k, size) nearest valid coordinates with their distances."""
    if k < 1:
        raise BadSpec("k must be >= 1")
    kk = min(k, index.size)
    q = np.asarray([query], dtype=np.int64)
    rows, d2 = _knn_batch(index, q, kk)
    pts = index.coords[rows[0]]
    dists = np.sqrt(d2[0].astype(np.float64))
    return [
        ((int(px), int(py)), float(d)) for (px, py), d in zip(pts, dists)
    ]


def fit_affine(
    samples: list[tuple[float, float, float]],
    min_scale_variance: float = 1e-12,
) -> AffineFit:
    """Closed-form weighted regression of prior depth on prediction value.

    Falls back to a shift-only fit (scale 1, degenerate flag) when the
    weighted prediction variance drops below min_scale_variance.
    """
    if len(samples) == 0:
        raise NoSamples("affine fit needs at least one sample")
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise BadSpec("samples must be (pred, prior, weight) triples")
    p, q, w = arr[:, 0], arr[:, 1], arr[:, 2]
    if not np.isfinite(arr).all():
        raise BadSpec("samples must be finite")
    if not (w > 0).all():
        raise BadSpec("weights must be positive")
    wsum = w.sum()
    pbar = (w * p).sum() / wsum
    qbar = (w * q).sum() / wsum
    dp = p - pbar
    var = (w * dp * dp).sum()
    if var < min_scale_variance:
        return AffineFit(1.0, float((w * (q - p)).sum() / wsum), degenerate=True)
    s = (w * dp * (q - qbar)).sum() / var
    return AffineFit(float(s), float(qbar - s * pbar))


def _batch_fit(p, q, w, min_scale_variance):
    """Row-wise version of fit_affine over (m, k) support arrays."""
    wsum = w.sum(axis=1)
    pbar = (w * p).sum(axis=1) / wsum
    qbar = (w * q).sum(axis=1) / wsum
    dp = p - pbar[:, None]
    var = (w * dp * dp).sum(axis=1)
    cov = (w * dp * (q - qbar[:, None])).sum(axis=1)
    degen = var < min_scale_variance
    safe_var = np.where(degen, 1.0, var)
    s = np.where(degen, 1.0, cov / safe_var)
    t_shift = (w * (q - p)).sum(axis=1) / wsum
    t = np.where(degen, t_shift, qbar - s * pbar)
    return s, t


def _check_same_shape(prior: DepthMap, pred: RelativePrediction):
    if prior.mask.shape != pred.pred.shape:
        raise DimensionMismatch(
            f"prior {prior.mask.shape} vs prediction {pred.pred.shape}"
        )


def prefill_detailed(
    prior: DepthMap, pred: RelativePrediction, cfg: FillConfig = FillConfig()
) -> FillResult:
    """Fill every invalid pixel via a kNN-supported local affine fit.

    Output is fully valid, equals the prior bitwise at its valid pixels,
    and reports how many fills hit the positivity floor.
    """
    _check_same_shape(prior, pred)
    index = build_index(prior)
    bits = prior.mask.bits
    out = prior.depth.values.copy()
    clamped = 0
    holes = ~bits
    if holes.any():
        qy, qx = np.nonzero(holes)
        queries = np.column_stack([qx, qy]).astype(np.int64)
        k = min(cfg.k, index.size)
        rows, d2 = _knn_batch(index, queries, k)
        sup = index.coords[rows]  # (m, k, 2) as (x, y)
        p = pred.pred.values[sup[..., 1], sup[..., 0]].astype(np.float64)
        q = prior.depth.values[sup[..., 1], sup[..., 0]].astype(np.float64)
        if cfg.weighting == "inverse_distance":
            # queries are invalid pixels, supports valid ones, so d >= 1
            w = 1.0 / np.sqrt(d2.astype(np.float64))
        else:
            w = np.ones_like(p)
        s, t = _batch_fit(p, q, w, cfg.min_scale_variance)
        fills = s * pred.pred.values[qy, qx].astype(np.float64) + t
        clamped = int(np.count_nonzero(fills < DEPTH_FLOOR))
        fills = np.maximum(fills, DEPTH_FLOOR)
        out[qy, qx] = fills.astype(np.float32)
    full = ValidityMask(np.ones_like(bits))
    return FillResult(DepthMap(Grid(out), full), clamped)


def prefill(
    prior: DepthMap, pred: RelativePrediction, cfg: FillConfig = FillConfig()
) -> DepthMap:
    return prefill_detailed(prior, pred, cfg).depth_map


def prefill_interpolation(prior: DepthMap, k: int = 5) -> DepthMap:
    """Baseline: inverse-distance-weighted mean of the k nearest prior
    values; ignores the prediction entirely."""
    if k < 1:
        raise BadSpec("k must be >= 1")
    index = build_index(prior)
    bits = prior.mask.bits
    out = prior.depth.values.copy()
    holes = ~bits
    if holes.any():
        qy, qx = np.nonzero(holes)
        queries = np.column_stack([qx, qy]).astype(np.int64)
        rows, d2 = _knn_batch(index, queries, min(k, index.size))
        sup = index.coords[rows]
        q = prior.depth.values[sup[..., 1], sup[..., 0]].astype(np.float64)
        w = 1.0 / np.sqrt(d2.astype(np.float64))
        fills = (w * q).sum(axis=1) / w.sum(axis=1)
        out[qy, qx] = fills.astype(np.float32)
    return DepthMap(Grid(out), ValidityMask(np.ones_like(bits)))


def global_align_detailed(prior: DepthMap, pred: RelativePrediction) -> FillResult:
    """Baseline: one unweighted fit over all valid pixels, applied to the
    whole prediction (measured values are replaced, not inherited)."""
    _check_same_shape(prior, pred)
    bits = prior.mask.bits
    if not bits.any():
        raise EmptyPrior("prior has no valid pixels")
    p = pred.pred.values[bits].astype(np.float64)
    q = prior.depth.values[bits].astype(np.float64)
    w = np.ones_like(p)
    fit = fit_affine(np.column_stack([p, q, w]).tolist())
    aligned = fit.scale * pred.pred.values.astype(np.float64) + fit.shift
    clamped = int(np.count_nonzero(aligned < DEPTH_FLOOR))
    aligned = np.maximum(aligned, DEPTH_FLOOR)
    full = ValidityMask(np.ones_like(bits))
    return FillResult(DepthMap(Grid(aligned.astype(np.float32)), full), clamped)


def global_align(prior: DepthMap, pred: RelativePrediction) -> DepthMap:
    return global_align_detailed(prior, pred).depth_map


def normalize(source: DepthMap | RelativePrediction) -> tuple[Grid, float, float]:
    """Map values to [0, 1]; returns (grid, min, max) for de-normalization.

    For depth maps the range comes from valid pixels only and invalid
    pixels map to 0. Constant input raises Degenerate.
    """
    if isinstance(source, DepthMap):
        bits = source.mask.bits
        if not bits.any():
            raise Empty("no valid values to normalize")
        vals = source.depth.values.astype(np.float64)
        vmin = float(vals[bits].min())
        vmax = float(vals[bits].max())
    else:
        bits = None
        vals = source.pred.values.astype(np.float64)
        vmin = float(vals.min())
        vmax = float(vals.max())
    if vmax <= vmin:
        raise Degenerate("constant input cannot be normalized")
    scaled = (vals - vmin) / (vmax - vmin)
    if bits is not None:
        scaled = np.where(bits, scaled, 0.0)
    return Grid(scaled.astype(np.float32)), vmin, vmax


def denormalize(grid: Grid, vmin: float, vmax: float) -> Grid:
    """Invert normalize: v * (max - min) + min."""
    if not (np.isfinite(vmin) and np.isfinite(vmax) and vmax > vmin):
        raise BadRange(f"bad range ({vmin}, {vmax})")
    vals = grid.values.astype(np.float64) * (vmax - vmin) + vmin
    return Grid(vals.astype(np.float32))

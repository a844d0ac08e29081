"""Anisotropic (parabolic) metric geometry and box-counting dimension.

The parabolic metric on time-augmented points u = (t, x) is
rho_H(u, v) = max{|t_u - t_v|^H, ||x_u - x_v||}. A ball of radius r is a
box of time extent r^(1/H) and space extent r, so box counting uses an
anisotropic grid with exactly those cell extents (cubic cells of side r in
the plain Euclidean case). Grid cells are half-open, aligned at the origin;
replacing ball covers by grid covers changes counts by at most a constant
factor, which cancels in log-log slopes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._kern import count_unique_int64
from .drift_library import DriftSpec, eval_drift
from .errors import ShapeError, ValidationError
from .fractal_sets import TimeSet, time_mask
from .stochastic_paths import TimeGrid

__all__ = [
    "MetricSpec",
    "PointCloud",
    "DimensionEstimate",
    "rho_H",
    "box_count",
    "minkowski_dim",
    "hausdorff_upper",
    "graph_dim_parabolic",
]


@dataclass(frozen=True)
class MetricSpec:
    """euclidean(dim) or parabolic(hurst, dim); dim counts space axes only."""

    kind: str
    dim: int
    hurst: float | None = None

    def __post_init__(self):
        if int(self.dim) < (0 if self.kind == "parabolic" else 1):
            raise ValidationError(f"bad dim {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))
        if self.kind == "parabolic":
            if self.hurst is None or not (0.0 < self.hurst <= 1.0):
                raise ValidationError(
                    f"parabolic metric needs hurst in (0, 1], got {self.hurst}"
                )
        elif self.kind != "euclidean":
            raise ValidationError(f"unknown metric kind {self.kind!r}")

    @property
    def n_coords(self) -> int:
        return self.dim + (1 if self.kind == "parabolic" else 0)


@dataclass(frozen=True)
class PointCloud:
    """Finite point set with its metric; parabolic points are (t, x_1..x_d)."""

    points: np.ndarray
    metric: MetricSpec

    def __post_init__(self):
        pts = np.ascontiguousarray(np.atleast_2d(self.points), dtype=np.float64)
        if pts.shape[0] == 0:
            raise ValidationError("point cloud is empty")
        if pts.shape[1] != self.metric.n_coords:
            raise ShapeError(
                f"points have {pts.shape[1]} coordinates, metric expects "
                f"{self.metric.n_coords}"
            )
        if not np.all(np.isfinite(pts)):
            raise ValidationError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class DimensionEstimate:
    """Box-counting estimate: LSQ slope of log N(r) against log(1/r)."""

    value: float
    stderr: float
    scales: tuple
    counts: tuple
    window: tuple  # scales actually regressed on, after trimming

    def to_json(self) -> str:
        return json.dumps(
            {
                "value": self.value,
                "stderr": self.stderr,
                "scales": list(self.scales),
                "counts": list(self.counts),
                "window": list(self.window),
            }
        )

    def to_csv(self, fname):
        data = np.column_stack(
            [np.log(1.0 / np.asarray(self.scales)), np.log(np.asarray(self.counts))]
        )
        np.savetxt(fname, data, delimiter=",", header="log_inv_r,log_count",
                   comments="", fmt="%.17g")


def rho_H(u, v, hurst) -> float:
    """Parabolic distance max{|t_u - t_v|^hurst, ||x_u - x_v||}."""
    if not (0.0 < hurst <= 1.0):
        raise ValidationError(f"hurst must lie in (0, 1], got {hurst}")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1 or u.size < 1:
        raise ShapeError(f"points disagree: {u.shape} vs {v.shape}")
    dt = abs(float(u[0] - v[0])) ** hurst
    dx = float(np.sqrt(((u[1:] - v[1:]) ** 2).sum())) if u.size > 1 else 0.0
    return max(dt, dx)


def _cell_extents(metric: MetricSpec, r: float) -> np.ndarray:
    if metric.kind == "euclidean":
        return np.full(metric.n_coords, r)
    return np.concatenate([[r ** (1.0 / metric.hurst)], np.full(metric.dim, r)])


def box_count(cloud: PointCloud, r) -> int:
    """Occupied half-open grid cells (origin 0) at ball radius r."""
    r = float(r)
    if not r > 0:
        raise ValidationError(f"r must be positive, got {r}")
    idx = np.floor(cloud.points / _cell_extents(cloud.metric, r)).astype(np.int64)
    lo = idx.min(axis=0)
    idx -= lo
    ranges = [int(m) + 1 for m in idx.max(axis=0)]
    total = 1
    for m in ranges:
        total *= m
    if total < (1 << 62):
        code = np.zeros(idx.shape[0], dtype=np.int64)
        stride = 1
        for axis in range(idx.shape[1] - 1, -1, -1):
            code += idx[:, axis] * stride
            stride *= ranges[axis]
        return count_unique_int64(code)
    return int(np.unique(idx, axis=0).shape[0])


def minkowski_dim(cloud: PointCloud, r_min, r_max, n_scales, trim=0.15) -> DimensionEstimate:
    """Box-counting dimension over a geometric scale ladder.

    The largest and smallest trim-fraction of scales are dropped before the
    regression (saturation at the top, grid-resolution bias at the bottom);
    the retained window is reported. The caller must supply a cloud sampled
    finer than r_min, or the smallest scales undercount.
    """
    r_min, r_max = float(r_min), float(r_max)
    if not (0.0 < r_min < r_max):
        raise ValidationError(f"need 0 < r_min < r_max, got {r_min}, {r_max}")
    n_scales = int(n_scales)
    if n_scales < 3:
        raise ValidationError(f"need at least 3 scales, got {n_scales}")
    scales = np.geomspace(r_max, r_min, n_scales)
    counts = np.array([box_count(cloud, r) for r in scales], dtype=np.float64)
    k = int(trim * n_scales)
    window = slice(k, n_scales - k) if n_scales - 2 * k >= 3 else slice(None)
    x = np.log(1.0 / scales[window])
    y = np.log(counts[window])
    if x.size >= 3:
        (slope, _), cov = np.polyfit(x, y, 1, cov=True)
        stderr = float(np.sqrt(cov[0, 0]))
    else:
        slope = np.polyfit(x, y, 1)[0]
        stderr = float("nan")
    return DimensionEstimate(
        value=float(slope),
        stderr=stderr,
        scales=tuple(scales),
        counts=tuple(int(c) for c in counts),
        window=tuple(scales[window]),
    )


def hausdorff_upper(cloud: PointCloud, beta, delta, ladder_ratio=2.0, r_floor=0.0) -> float:
    """Upper estimate of the beta-dimensional premeasure at fineness delta.

    Minimizes the covering sum N(r) * (2r)^beta over the geometric ladder
    r = delta, delta/ratio, ..., stopping at r_floor or once every point
    sits in its own cell. A finite cloud is faithful to its underlying set
    only down to its sampling resolution — pass that resolution (e.g. the
    cell_size of a discrete measure) as r_floor, or the deepest levels
    cover the cloud instead of the set and drive the sum toward zero.
    Grid covers only overestimate ball covers, so this is an upper bound
    up to that covering constant.
    """
    if not (beta > 0 and delta > 0 and ladder_ratio > 1):
        raise ValidationError("need beta > 0, delta > 0, ladder_ratio > 1")
    if r_floor > delta:
        raise ValidationError(f"r_floor {r_floor} exceeds delta {delta}")
    n = cloud.points.shape[0]
    best = math.inf
    r = float(delta)
    for _ in range(64):
        count = box_count(cloud, r)
        best = min(best, count * (2.0 * r) ** beta)
        if count >= n or r / ladder_ratio < r_floor:
            break
        r /= ladder_ratio
    return best


def graph_dim_parabolic(
    drift: DriftSpec,
    E: TimeSet,
    hurst,
    n_grid=1 << 16,
    r_min=1e-3,
    r_max=0.25,
    n_scales=12,
) -> DimensionEstimate:
    """Parabolic box dimension of the drift graph {(t, f(t)) : t in E}."""
    if not (0.0 < hurst <= 1.0):
        raise ValidationError(f"hurst must lie in (0, 1], got {hurst}")
    grid = TimeGrid(0.0, 1.0, int(n_grid))
    mask = time_mask(E, grid.times)
    if not mask.any():
        raise ValidationError("time set misses the sampling grid entirely")
    f = eval_drift(drift, grid)
    pts = np.column_stack([grid.times[mask], f[:, mask].T])
    cloud = PointCloud(points=pts, metric=MetricSpec(kind="parabolic", dim=f.shape[0], hurst=float(hurst)))
    return minkowski_dim(cloud, r_min, r_max, n_scales)

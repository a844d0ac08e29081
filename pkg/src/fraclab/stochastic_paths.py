"""Exact simulation of fractional Brownian paths and Gaussian conditioning.

Sampling uses circulant embedding of the stationary increment process: the
increment covariance is embedded in a circulant matrix whose eigenvalues come
from a single FFT, and each path costs one Hermitian FFT of length 2(n-1).
The embedding is exact in distribution; if it fails (negative eigenvalues
beyond tolerance) a dense Cholesky factorization takes over for small grids.
At hurst = 0.5 the increments are white noise and are summed directly.

Randomness is counter-based: every (seed, path_index, component_index)
triple owns an independent Philox stream, so Monte Carlo results do not
depend on batch sizes or evaluation order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft
from numpy.random import Generator, Philox

from .errors import NumericError, ResourceError, ShapeError, ValidationError

__all__ = [
    "TimeGrid",
    "FbmPath",
    "fbm_covariance",
    "mixed_covariance",
    "sample_fbm",
    "sample_fbm_batch",
    "sample_mixed",
    "sample_mixed_batch",
    "conditional_variance",
    "path_to_csv",
    "path_from_csv",
    "path_to_binary",
    "path_from_binary",
]

# negative-eigenvalue tolerance for the circulant embedding, relative to the
# largest eigenvalue
_EIG_TOL = 1e-9
# largest grid the dense Cholesky fallback will accept
_CHOLESKY_CAP = 4097
# component-index namespace for the rough summand of a mixed process, and a
# path-index namespace for drift realizations (keeps their streams disjoint
# from Monte Carlo path streams even when seeds collide)
_MIXED_COMP_OFFSET = None  # set per-call: dim of the process
DRIFT_PATH_NAMESPACE = 0x44524654

_U64 = np.uint64


def _check_hurst(h, name="hurst"):
    h = float(h)
    if not (0.0 < h < 1.0) or not np.isfinite(h):
        raise ValidationError(f"{name} must lie in (0, 1), got {h!r}")
    return h


def _check_dim(d):
    d = int(d)
    if d < 1:
        raise ValidationError(f"dim must be a positive integer, got {d}")
    return d


# --------------------------------------------------------------------------- #
# grids and paths
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``n`` points on ``[t0, t1]``."""

    t0: float
    t1: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.t0) and np.isfinite(self.t1)) or self.t1 <= self.t0:
            raise ValidationError(f"need t0 < t1, got [{self.t0}, {self.t1}]")
        if int(self.n) < 2:
            raise ValidationError(f"grid needs at least 2 points, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / (self.n - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.n)


@dataclass(frozen=True)
class FbmPath:
    """One sampled path: values of each of ``dim`` components on a grid.

    ``kind`` is either ``"pure_fbm"`` (``alpha`` is None) or ``"mixed"``
    (sum of independent hurst- and alpha-paths, per component).
    """

    grid: TimeGrid
    hurst: float
    values: np.ndarray  # shape (dim, n)
    seed: int
    path_index: int = 0
    kind: str = "pure_fbm"
    alpha: float | None = None

    @property
    def dim(self) -> int:
        return self.values.shape[0]


# --------------------------------------------------------------------------- #
# covariances
# --------------------------------------------------------------------------- #


def fbm_covariance(s, t, hurst):
    """Covariance of one fractional Brownian component at times ``s, t``.

    Cov(B(s), B(t)) = (|s|^{2H} + |t|^{2H} - |s-t|^{2H}) / 2. Accepts scalars
    or broadcastable arrays of nonnegative times.
    """
    hurst = _check_hurst(hurst)
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(s < 0.0) or np.any(t < 0.0) or not (np.all(np.isfinite(s)) and np.all(np.isfinite(t))):
        raise ValidationError("times must be finite and nonnegative")
    h2 = 2.0 * hurst
    out = 0.5 * (np.abs(s) ** h2 + np.abs(t) ** h2 - np.abs(s - t) ** h2)
    return float(out) if out.ndim == 0 else out


def mixed_covariance(s, t, hurst, alpha):
    """Covariance of one component of the mixed process B^hurst + B^alpha."""
    return fbm_covariance(s, t, hurst) + fbm_covariance(s, t, alpha)


# --------------------------------------------------------------------------- #
# counter-based streams
# --------------------------------------------------------------------------- #


def stream(seed, path_index, comp_index) -> Generator:
    """Independent Philox stream for one (seed, path, component) triple."""
    if path_index < 0 or comp_index < 0:
        raise ValidationError("path/component indices must be nonnegative")
    key = np.array(
        [_U64(int(seed) & 0xFFFFFFFFFFFFFFFF), _U64((int(path_index) << 20) | int(comp_index))],
        dtype=np.uint64,
    )
    return Generator(Philox(key=key))


# --------------------------------------------------------------------------- #
# circulant embedding
# --------------------------------------------------------------------------- #

_eig_cache: dict[tuple[float, int], np.ndarray | None] = {}
_chol_cache: dict[tuple[float, int], np.ndarray] = {}


def _fgn_unit_cov(hurst, n_inc):
    k = np.arange(n_inc + 1, dtype=np.float64)
    h2 = 2.0 * hurst
    return 0.5 * ((k + 1.0) ** h2 - 2.0 * k ** h2 + np.abs(k - 1.0) ** h2)


def _embedding_eigs(hurst, n_inc):
    """Eigenvalues of the 2*n_inc circulant embedding, or None if indefinite."""
    key = (hurst, n_inc)
    if key not in _eig_cache:
        g = _fgn_unit_cov(hurst, n_inc)  # gamma(0..n_inc)
        c = np.concatenate([g, g[1:-1][::-1]])
        lam = np.fft.fft(c).real
        if lam.min() < -_EIG_TOL * lam.max():
            _eig_cache[key] = None
        else:
            _eig_cache[key] = np.sqrt(np.maximum(lam[: n_inc + 1], 0.0) / (2.0 * n_inc))
    return _eig_cache[key]


def _unit_cholesky(hurst, n_inc):
    """Cholesky factor of fBM values on the unit-spaced grid 1..n_inc."""
    key = (hurst, n_inc)
    if key not in _chol_cache:
        if n_inc + 1 > _CHOLESKY_CAP:
            raise ResourceError(
                f"circulant embedding failed and n={n_inc + 1} exceeds the "
                f"dense-fallback cap {_CHOLESKY_CAP}"
            )
        t = np.arange(1, n_inc + 1, dtype=np.float64)
        cov = fbm_covariance(t[:, None], t[None, :], hurst)
        try:
            _chol_cache[key] = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - pathological
            raise NumericError(f"covariance factorization failed: {exc}") from exc
    return _chol_cache[key]


def _check_sampling_grid(grid):
    if grid.t0 != 0.0:
        raise ValidationError("sampling grids must start at t0 = 0")


def _sample_rows(hurst, grid, row_streams):
    """Sample len(row_streams) independent fBM components on ``grid``.

    Returns an array of shape (rows, n) with value 0 at t0 = 0.
    """
    n_inc = grid.n - 1
    dt_h = grid.dt ** hurst
    rows = len(row_streams)
    out = np.empty((rows, grid.n), dtype=np.float64)
    out[:, 0] = 0.0

    if hurst == 0.5:  # white-noise increments, summed directly
        scale = np.sqrt(grid.dt)
        for i, g in enumerate(row_streams):
            np.cumsum(g.standard_normal(n_inc), out=out[i, 1:])
        out[:, 1:] *= scale
        return out

    s_half = _embedding_eigs(hurst, n_inc)
    if s_half is not None:
        m = 2 * n_inc
        w = np.empty((rows, n_inc + 1), dtype=np.complex128)
        inv_sqrt2 = 1.0 / np.sqrt(2.0)
        for i, g in enumerate(row_streams):
            u = g.standard_normal(2 * n_inc)
            w[i, 0] = u[0]
            w[i, -1] = u[1]
            if n_inc > 1:
                w[i, 1:-1] = (u[2::2] + 1j * u[3::2]) * inv_sqrt2
        w *= s_half
        fgn = _fft.hfft(w, n=m, axis=1)[:, :n_inc]
        np.cumsum(fgn, axis=1, out=out[:, 1:])
        out[:, 1:] *= dt_h
        return out

    chol = _unit_cholesky(hurst, n_inc)  # may raise ResourceError
    for i, g in enumerate(row_streams):
        out[i, 1:] = chol @ g.standard_normal(n_inc)
    out[:, 1:] *= dt_h
    return out


# --------------------------------------------------------------------------- #
# public samplers
# --------------------------------------------------------------------------- #


def sample_fbm_batch(hurst, dim, grid, seed, start=0, count=1, comp_offset=0):
    """Sample ``count`` independent fBM paths with ``dim`` components each.

    Paths carry global indices ``start .. start+count-1``; rerunning any
    sub-range reproduces the same values byte for byte. Returns an array of
    shape ``(count, dim, grid.n)``.
    """
    hurst = _check_hurst(hurst)
    dim = _check_dim(dim)
    _check_sampling_grid(grid)
    if count < 0 or start < 0:
        raise ValidationError("start/count must be nonnegative")
    streams = [
        stream(seed, p, comp_offset + c)
        for p in range(start, start + count)
        for c in range(dim)
    ]
    rows = _sample_rows(hurst, grid, streams)
    return rows.reshape(count, dim, grid.n)


def sample_fbm(hurst, dim, grid, seed, path_index=0) -> FbmPath:
    """Sample one fBM path (see ``sample_fbm_batch`` for the stream layout)."""
    vals = sample_fbm_batch(hurst, dim, grid, seed, start=path_index, count=1)[0]
    return FbmPath(grid=grid, hurst=float(hurst), values=vals, seed=int(seed), path_index=int(path_index))


def sample_mixed_batch(hurst, alpha, dim, grid, seed_h, seed_a, start=0, count=1):
    """Sample paths of the mixed process B^hurst + B^alpha (independent parts).

    The rough summand uses component indices ``dim .. 2*dim-1`` of ``seed_a``,
    so the two summands stay independent even if ``seed_h == seed_a``.
    """
    smooth = sample_fbm_batch(hurst, dim, grid, seed_h, start=start, count=count)
    rough = sample_fbm_batch(alpha, dim, grid, seed_a, start=start, count=count, comp_offset=dim)
    smooth += rough
    return smooth


def sample_mixed(hurst, alpha, dim, grid, seed_h, seed_a, path_index=0) -> FbmPath:
    vals = sample_mixed_batch(hurst, alpha, dim, grid, seed_h, seed_a, start=path_index, count=1)[0]
    return FbmPath(
        grid=grid,
        hurst=float(hurst),
        values=vals,
        seed=int(seed_h),
        path_index=int(path_index),
        kind="mixed",
        alpha=float(alpha),
    )


# --------------------------------------------------------------------------- #
# Gaussian conditioning
# --------------------------------------------------------------------------- #


def conditional_variance(t, conditioning, hurst, dedup_tol=1e-9):
    """Var(B(t) | B(t_1), ..., B(t_k)) for one fBM component on [0, 1].

    Conditioning points at 0 are dropped (B(0) = 0 carries no information)
    and near-duplicates within ``dedup_tol`` are collapsed before inversion.
    Returns 0.0 when ``t`` itself lies within ``dedup_tol`` of a conditioning
    point.
    """
    hurst = _check_hurst(hurst)
    t = float(t)
    pts = np.atleast_1d(np.asarray(conditioning, dtype=np.float64))
    if pts.ndim != 1:
        raise ShapeError("conditioning must be a 1-d sequence of times")
    if t < 0.0 or t > 1.0 or np.any(pts < 0.0) or np.any(pts > 1.0):
        raise ValidationError("all times must lie in [0, 1]")
    pts = pts[pts > dedup_tol]  # B(0) = 0 a.s.
    if pts.size:
        pts = np.sort(pts)
        keep = np.concatenate([[True], np.diff(pts) > dedup_tol])
        pts = pts[keep]
    if pts.size == 0:
        return float(t ** (2.0 * hurst))
    if np.min(np.abs(pts - t)) <= dedup_tol:
        return 0.0

    cov = fbm_covariance(pts[:, None], pts[None, :], hurst)
    k = fbm_covariance(pts, t, hurst)
    try:
        sol = np.linalg.solve(cov, k)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"conditioning covariance is singular: {exc}") from exc
    var = float(t ** (2.0 * hurst) - k @ sol)
    return max(var, 0.0)


# --------------------------------------------------------------------------- #
# path serialization
# --------------------------------------------------------------------------- #

_MAGIC = b"FRLB"
_BIN_VERSION = 1


def path_to_csv(path: FbmPath, fname):
    """Write a path as CSV with columns t, x_1, ..., x_d."""
    cols = np.column_stack([path.grid.times, path.values.T])
    header = "t," + ",".join(f"x_{i + 1}" for i in range(path.dim))
    np.savetxt(fname, cols, delimiter=",", header=header, comments="", fmt="%.17g")


def path_from_csv(fname):
    """Read back a CSV written by ``path_to_csv`` as (times, values)."""
    data = np.loadtxt(fname, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:].T


def path_to_binary(path: FbmPath, fname):
    """Write a path in the binary column format.

    Little-endian header: magic ``FRLB``, u32 version, f64 hurst, f64 alpha
    (NaN for a pure path), u32 dim, u64 n, i64 seed, f64 t0, f64 t1; then the
    component values as dim*n float64, component-major.
    """
    alpha = np.nan if path.alpha is None else float(path.alpha)
    header = struct.pack(
        "<4sIddIQqdd",
        _MAGIC,
        _BIN_VERSION,
        float(path.hurst),
        alpha,
        path.dim,
        path.grid.n,
        int(path.seed),
        float(path.grid.t0),
        float(path.grid.t1),
    )
    with open(fname, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(path.values, dtype="<f8").tobytes())


def path_from_binary(fname) -> FbmPath:
    """Read a path written by ``path_to_binary``."""
    head_size = struct.calcsize("<4sIddIQqdd")
    with open(fname, "rb") as fh:
        head = fh.read(head_size)
        if len(head) < head_size:
            raise ValidationError(f"{fname}: truncated header")
        magic, version, hurst, alpha, dim, n, seed, t0, t1 = struct.unpack("<4sIddIQqdd", head)
        if magic != _MAGIC:
            raise ValidationError(f"{fname}: not a fraclab path file")
        if version != _BIN_VERSION:
            raise ValidationError(f"{fname}: unsupported version {version}")
        data = np.frombuffer(fh.read(8 * dim * n), dtype="<f8")
    if data.size != dim * n:
        raise ValidationError(f"{fname}: truncated payload")
    grid = TimeGrid(t0, t1, int(n))
    return FbmPath(
        grid=grid,
        hurst=hurst,
        values=data.reshape(int(dim), int(n)).copy(),
        seed=int(seed),
        kind="pure_fbm" if np.isnan(alpha) else "mixed",
        alpha=None if np.isnan(alpha) else alpha,
    )

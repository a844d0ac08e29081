"""Pure-numpy implementations of the hot kernels.

Mirror of ``_ckern`` (the Cython core). Semantics of each function are
documented once here; the compiled module implements the same contracts.

Conventions
-----------
* ``pts`` is an ``(n, D)`` float64 array of atom coordinates.
* ``hexp`` selects the metric: ``hexp > 0`` means the parabolic metric
  ``rho((s,x),(t,y)) = max(|s-t|**hexp, ||x-y||)`` with column 0 holding the
  time coordinate; ``hexp <= 0`` means the Euclidean metric on all columns.
* ``alpha`` selects the radial kernel ``phi``: ``r**-alpha`` for
  ``alpha > 0``, ``1 + log(1/min(r,1))`` for ``alpha == 0``, constant 1 for
  ``alpha < 0``.
* ``diag`` is the regularized value used for the self-interaction G[i,i].
* Path blocks ``X`` are ``(B, d, m)`` float64 arrays (B paths, d components,
  m retained grid times), already drift-shifted and masked.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "phi_vals",
    "energy_sum",
    "energy_matvec",
    "kernel_column",
    "min_dist_balls",
    "min_dist_boxes",
    "count_unique_int64",
]

_CHUNK = 256  # pairwise rows per block; keeps temporaries ~ n*_CHUNK floats


def phi_vals(r, alpha):
    """Radial kernel phi_alpha applied elementwise to distances ``r``."""
    r = np.asarray(r, dtype=np.float64)
    with np.errstate(divide="ignore"):
        if alpha > 0.0:
            if alpha == 0.5:
                return 1.0 / np.sqrt(r)
            if alpha == 1.0:
                return 1.0 / r
            return r ** -alpha
        if alpha == 0.0:
            return 1.0 - np.log(np.minimum(r, 1.0))
    return np.ones_like(r)


def _rho_block(a, b, hexp):
    # a: (p, D), b: (n, D) -> (p, n) distances
    if hexp > 0.0:
        dt = np.abs(a[:, :1] - b[None, :, 0]) ** hexp
        if a.shape[1] > 1:
            diff = a[:, None, 1:] - b[None, :, 1:]
            sp = np.sqrt(np.einsum("pnk,pnk->pn", diff, diff))
            return np.maximum(dt, sp)
        return dt
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("pnk,pnk->pn", diff, diff))


def energy_sum(pts, w, alpha, hexp, diag):
    """Return ``(offdiag, diagpart)`` of the quadratic energy form.

    offdiag = sum_{i != j} w_i w_j phi_alpha(rho(x_i, x_j)),
    diagpart = diag * sum_i w_i**2.
    """
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    n = pts.shape[0]
    off = 0.0
    for i0 in range(0, n, _CHUNK):
        i1 = min(i0 + _CHUNK, n)
        r = _rho_block(pts[i0:i1], pts, hexp)
        k = phi_vals(r, alpha)
        # zero out the self entries of this block
        rows = np.arange(i0, i1)
        k[rows - i0, rows] = 0.0
        off += float(w[i0:i1] @ k @ w)
    return off, float(diag * (w @ w))


def energy_matvec(pts, w, alpha, hexp, diag):
    """Return ``G @ w`` where G has phi-off-diagonal and ``diag`` diagonal."""
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    n = pts.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i0 in range(0, n, _CHUNK):
        i1 = min(i0 + _CHUNK, n)
        r = _rho_block(pts[i0:i1], pts, hexp)
        k = phi_vals(r, alpha)
        rows = np.arange(i0, i1)
        k[rows - i0, rows] = diag
        out[i0:i1] = k @ w
    return out


def kernel_column(pts, j, alpha, hexp, diag):
    """Return column j of G (self entry = ``diag``)."""
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    r = _rho_block(pts[int(j) : int(j) + 1], pts, hexp)[0]
    col = phi_vals(r, alpha)
    col[int(j)] = diag
    return col


def min_dist_balls(X, centers, radii):
    """Per-path min over times/targets of max(||X_t - c|| - R, 0).

    X: (B, d, m); centers: (M, d); radii: (M,). Returns (B,).
    """
    X = np.asarray(X, dtype=np.float64)
    out = np.full(X.shape[0], np.inf)
    for c, rad in zip(np.asarray(centers, dtype=np.float64), np.asarray(radii, dtype=np.float64)):
        diff = X - c[None, :, None]
        d = np.sqrt(np.einsum("bdm,bdm->bm", diff, diff)).min(axis=1) - rad
        np.minimum(out, np.maximum(d, 0.0), out=out)
    return out


def min_dist_boxes(X, lo, hi):
    """Per-path min over times/boxes of the Euclidean distance to a box.

    X: (B, d, m); lo, hi: (M, d) box corner arrays. Returns (B,).
    """
    X = np.asarray(X, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    out = np.full(X.shape[0], np.inf)
    for k in range(lo.shape[0]):
        below = lo[k][None, :, None] - X
        above = X - hi[k][None, :, None]
        exc = np.maximum(np.maximum(below, above), 0.0)
        d = np.sqrt(np.einsum("bdm,bdm->bm", exc, exc)).min(axis=1)
        np.minimum(out, d, out=out)
    return out


def count_unique_int64(codes):
    """Number of distinct values in an int64 code array."""
    return int(np.unique(np.asarray(codes, dtype=np.int64)).size)

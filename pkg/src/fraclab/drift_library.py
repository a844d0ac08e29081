"""Rough deterministic drifts and Hölder-regularity diagnostics.

The central family is the Weierstrass sum W(t) = sum_n tau^n cos(2 pi theta^n t),
truncated where the geometric tail drops below a requested tolerance. For
integer theta the scalar evaluator reduces phases theta^n * t mod 1 in exact
rational arithmetic, so the certified error is the truncation bound alone.
The vectorized grid evaluator works in floats; its phases are exact whenever
theta is a power of two (binary exponent shifts), which covers every drift
used in the shipped experiments.

Drifts realized as fractional Brownian sample paths draw from a dedicated
path-index namespace, so a drift realization never collides with a Monte
Carlo path stream even at equal seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .errors import ShapeError, ValidationError
from .stochastic_paths import DRIFT_PATH_NAMESPACE, TimeGrid, sample_fbm_batch

__all__ = [
    "DriftSpec",
    "HolderReport",
    "weierstrass_eval",
    "weierstrass_alpha",
    "eval_drift",
    "holder_diagnose",
    "tabulated_from_csv",
]

_W_KINDS = ("weierstrass", "weierstrass_diagonal")
_KINDS = ("zero",) + _W_KINDS + ("fbm_realization", "tabulated")


def _check_w_domain(tau, theta):
    if not (0.0 < tau < 1.0 < theta):
        raise ValidationError(f"need 0 < tau < 1 < theta, got tau={tau}, theta={theta}")


def _check_w_params(tau, theta):
    _check_w_domain(tau, theta)
    if tau * theta <= 1.0:
        raise ValidationError(f"need tau*theta > 1 for a rough sum, got {tau * theta}")


@dataclass(frozen=True)
class DriftSpec:
    """Declarative description of a drift f: [0,1] -> R^dim.

    kind is one of zero | weierstrass | weierstrass_diagonal |
    fbm_realization | tabulated. weierstrass is scalar (dim 1);
    weierstrass_diagonal repeats the same scalar sum across dim rows.
    """

    kind: str
    dim: int = 1
    tau: float | None = None
    theta: float | None = None
    alpha: float | None = None
    seed: int | None = None
    tol: float = 1e-12
    grid: TimeGrid | None = None  # tabulated only
    values: np.ndarray | None = None  # tabulated only, shape (dim, grid.n)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown drift kind {self.kind!r}")
        if int(self.dim) < 1:
            raise ValidationError(f"dim must be positive, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))
        if self.tol <= 0:
            raise ValidationError("tol must be positive")
        if self.kind in _W_KINDS:
            if self.tau is None or self.theta is None:
                raise ValidationError(f"{self.kind} drift needs tau and theta")
            _check_w_params(self.tau, self.theta)
            if self.kind == "weierstrass" and self.dim != 1:
                raise ValidationError("scalar weierstrass drift has dim 1; "
                                      "use weierstrass_diagonal for vectors")
        elif self.kind == "fbm_realization":
            if self.alpha is None or self.seed is None:
                raise ValidationError("fbm_realization drift needs alpha and seed")
            if not (0.0 < self.alpha < 1.0):
                raise ValidationError(f"alpha must lie in (0,1), got {self.alpha}")
        elif self.kind == "tabulated":
            if self.grid is None or self.values is None:
                raise ValidationError("tabulated drift needs grid and values")
            vals = np.asarray(self.values, dtype=np.float64)
            if vals.ndim == 1:
                vals = vals[None, :]
            if vals.ndim != 2 or vals.shape[1] != self.grid.n:
                raise ShapeError(
                    f"tabulated values shape {vals.shape} does not conform to "
                    f"grid length {self.grid.n}"
                )
            object.__setattr__(self, "values", vals)
            object.__setattr__(self, "dim", vals.shape[0])

    # -- JSON document form (kind, tau, theta, alpha, d, seed, tol) -------- #

    def to_json(self) -> str:
        if self.kind == "tabulated":
            raise ValidationError("tabulated drifts are csv-backed, not JSON")
        doc = {"kind": self.kind, "d": self.dim, "tol": self.tol}
        for k in ("tau", "theta", "alpha", "seed"):
            v = getattr(self, k)
            if v is not None:
                doc[k] = v
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "DriftSpec":
        doc = json.loads(text)
        if not isinstance(doc, dict) or "kind" not in doc:
            raise ValidationError("drift JSON must be an object with a 'kind' key")
        return DriftSpec(
            kind=doc["kind"],
            dim=int(doc.get("d", 1)),
            tau=doc.get("tau"),
            theta=doc.get("theta"),
            alpha=doc.get("alpha"),
            seed=doc.get("seed"),
            tol=float(doc.get("tol", 1e-12)),
        )


@dataclass(frozen=True)
class HolderReport:
    alpha: float
    constant_upper: float
    constant_reverse: float
    pass_holder: bool
    pass_reverse: bool
    scales_used: tuple


def weierstrass_alpha(tau, theta) -> float:
    """Hölder exponent of the Weierstrass sum: log(1/tau)/log(theta)."""
    _check_w_params(tau, theta)
    return math.log(1.0 / tau) / math.log(theta)


def _n_terms(tau, tol) -> int:
    # smallest N with tau^(N+1)/(1-tau) <= tol
    n = math.ceil(math.log(tol * (1.0 - tau)) / math.log(tau)) - 1
    return max(int(n), 0)


def weierstrass_eval(tau, theta, t, tol=1e-12) -> float:
    """Truncated Weierstrass sum at a single time, absolute error <= tol.

    For integer theta the phases theta^n*t mod 1 are reduced in exact rational
    arithmetic; otherwise they are iterated in floats (adequate unless
    (tau*theta)^N approaches 1/machine-eps). The sum converges for any
    0 < tau < 1 < theta; rough drifts additionally need tau*theta > 1, which
    DriftSpec enforces.
    """
    _check_w_domain(tau, theta)
    if tol <= 0:
        raise ValidationError("tol must be positive")
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise ValidationError(f"t must lie in [0,1], got {t}")
    n_max = _n_terms(tau, tol)
    total = 0.0
    if float(theta).is_integer():
        th = int(theta)
        frac = Fraction(t)
        p, q = frac.numerator, frac.denominator
        r = 1  # theta^n mod q
        w = 1.0
        for _ in range(n_max + 1):
            total += w * math.cos(2.0 * math.pi * ((p * r) % q) / q)
            r = (r * th) % q
            w *= tau
    else:
        u = t % 1.0
        w = 1.0
        for _ in range(n_max + 1):
            total += w * math.cos(2.0 * math.pi * u)
            u = (theta * u) % 1.0
            w *= tau
    return total


def _weierstrass_grid(tau, theta, times, tol):
    """Vectorized truncated sum over a float time array."""
    n_max = _n_terms(tau, tol)
    acc = np.zeros_like(times, dtype=np.float64)
    two_pi = 2.0 * math.pi
    if math.log2(theta).is_integer():
        # multiplying a float by a power of two is exact: direct powers
        for n in range(n_max + 1):
            ph = times * theta ** n
            acc += tau ** n * np.cos(two_pi * (ph - np.floor(ph)))
    else:
        u = times % 1.0
        w = 1.0
        for _ in range(n_max + 1):
            acc += w * np.cos(two_pi * u)
            u = theta * u
            u -= np.floor(u)
            w *= tau
    return acc


# write-once cache of drift realizations, keyed (alpha, dim, seed, grid)
_realization_cache: dict[tuple, np.ndarray] = {}


def eval_drift(spec: DriftSpec, grid: TimeGrid) -> np.ndarray:
    """Evaluate a drift on a grid; returns a (dim, n) matrix."""
    if spec.kind == "zero":
        return np.zeros((spec.dim, grid.n))
    if spec.kind in _W_KINDS:
        row = _weierstrass_grid(spec.tau, spec.theta, grid.times, spec.tol)
        if spec.kind == "weierstrass":
            return row[None, :]
        return np.tile(row, (spec.dim, 1))
    if spec.kind == "fbm_realization":
        key = (spec.alpha, spec.dim, spec.seed, grid)
        hit = _realization_cache.get(key)
        if hit is None:
            hit = sample_fbm_batch(
                spec.alpha, spec.dim, grid, spec.seed,
                start=DRIFT_PATH_NAMESPACE, count=1,
            )[0]
            hit.setflags(write=False)
            hit = _realization_cache.setdefault(key, hit)
        return hit
    # tabulated
    if spec.grid != grid:
        raise ShapeError(
            f"tabulated drift lives on {spec.grid}, asked to evaluate on {grid}"
        )
    return spec.values


def tabulated_from_csv(fname, dim=None) -> DriftSpec:
    """Load a tabulated drift from the path CSV format (columns t, x_1..x_d)."""
    from .stochastic_paths import path_from_csv

    t, vals = path_from_csv(fname)
    if t.size < 2:
        raise ValidationError("tabulated drift needs at least 2 samples")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
        raise ValidationError("tabulated drift requires a uniform time grid")
    if dim is not None and vals.shape[0] != dim:
        raise ShapeError(f"csv has {vals.shape[0]} components, expected {dim}")
    grid = TimeGrid(float(t[0]), float(t[-1]), t.size)
    return DriftSpec(kind="tabulated", grid=grid, values=vals)


# --------------------------------------------------------------------------- #
# Hölder diagnostics
# --------------------------------------------------------------------------- #


def _dyadic_gaps(n, dt):
    """Grid strides approximating separations 2^-j, largest to smallest."""
    span = (n - 1) * dt
    gaps = []
    j = 0
    while True:
        h = 2.0 ** (-j)
        if h > span:
            j += 1
            continue
        k = int(round(h / dt))
        if k < 1:
            break
        if k <= n - 1 and (not gaps or k != gaps[-1]):
            gaps.append(k)
        j += 1
    return gaps


def holder_diagnose(
    values,
    grid: TimeGrid,
    alpha,
    holder_threshold=100.0,
    reverse_threshold=1e-3,
    min_window_steps=4,
):
    """Estimate Hölder and reverse-Hölder constants of a sampled function.

    constant_upper maximizes ||f(t)-f(s)|| / |t-s|^alpha over pairs at dyadic
    separations; constant_reverse minimizes window-oscillation / |J|^alpha
    over sliding dyadic windows J. Windows shorter than min_window_steps grid
    steps are excluded: oscillation is unresolved below the grid scale. The
    pass flags compare against the (reported, configurable) thresholds; the
    constants themselves are estimates from one sample, not certified bounds.
    """
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must lie in (0,1), got {alpha}")
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim == 1:
        vals = vals[None, :]
    if vals.ndim != 2 or vals.shape[1] != grid.n:
        raise ShapeError(f"values shape {vals.shape} does not match grid n={grid.n}")
    n = grid.n
    if n < 16:
        raise ValidationError(f"need at least 16 grid points, got {n}")
    dt = grid.dt

    c_up = 0.0
    for k in _dyadic_gaps(n, dt):
        diff = vals[:, k:] - vals[:, :-k]
        sup = float(np.sqrt((diff * diff).sum(axis=0)).max())
        c_up = max(c_up, sup / (k * dt) ** alpha)

    c_rev = math.inf
    scales = []
    for k in _dyadic_gaps(n, dt):
        if k < min_window_steps:
            continue
        m = k + 1  # window of k steps spans m points
        osc = maximum_filter1d(vals, size=m, axis=1, mode="nearest") - minimum_filter1d(
            vals, size=m, axis=1, mode="nearest"
        )
        half = m // 2
        core = osc[:, half : n - (m - 1 - half)]  # windows fully inside the grid
        per_window = core.max(axis=0)  # largest single-component oscillation
        c_rev = min(c_rev, float(per_window.min()) / (k * dt) ** alpha)
        scales.append(k * dt)
    if not scales:
        raise ValidationError(
            f"grid too coarse: no dyadic window of at least {min_window_steps} steps"
        )

    return HolderReport(
        alpha=float(alpha),
        constant_upper=c_up,
        constant_reverse=c_rev,
        pass_holder=bool(c_up <= holder_threshold),
        pass_reverse=bool(c_rev >= reverse_threshold),
        scales_used=tuple(scales),
    )

"""Fractal time sets, spatial targets, and their natural measures.

Time sets live in [0,1]: intervals, middle-interval Cantor constructions
(keep a fraction lam at each end, remove the middle 1-2*lam), and finite
unions of intervals. Targets live in R^d: points, closed balls, Cantor
products, and unions of balls. Each carries a canonical discretization —
a probability measure on cell midpoints — used by the capacity and
hitting-probability machinery.

Regularity diagnostics: ``check_condition_S`` measures how uniformly a
measure scales (mass of [a-delta, a+delta] against delta^beta), and
``frostman_kernel_sup`` evaluates the truncated Riesz kernel sup that
controls hitting-probability upper bounds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ResourceError, ShapeError, ValidationError

__all__ = [
    "TimeSet",
    "TargetSet",
    "DiscreteMeasure",
    "ConditionSReport",
    "cantor_cells",
    "natural_measure",
    "check_condition_S",
    "frostman_kernel_sup",
    "discretize_target",
    "time_mask",
]

_ATOM_BUDGET = 1 << 22


# --------------------------------------------------------------------------- #
# time sets
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class TimeSet:
    """A compact subset of [0,1] used to restrict hitting times.

    kinds: interval(a, b) | cantor(lam, level, on [carrier]) |
    finite_union(intervals). Cantor sets default to the carrier
    [epsilon0, 1]; pass carrier=(0.0, 1.0) for the unit-interval version.
    """

    kind: str
    a: float | None = None
    b: float | None = None
    lam: float | None = None
    level: int | None = None
    epsilon0: float = 0.1
    carrier: tuple | None = None
    intervals: tuple | None = None

    def __post_init__(self):
        if not (0.0 < self.epsilon0 < 1.0):
            raise ValidationError(f"epsilon0 must lie in (0,1), got {self.epsilon0}")
        if self.kind == "interval":
            if self.a is None or self.b is None:
                raise ValidationError("interval needs endpoints a, b")
            # a == b is allowed: the degenerate interval {a} (single-time set)
            if not (0.0 <= self.a <= self.b <= 1.0):
                raise ValidationError(f"need 0 <= a <= b <= 1, got [{self.a}, {self.b}]")
        elif self.kind == "cantor":
            if self.lam is None or self.level is None:
                raise ValidationError("cantor needs lam and level")
            if not (0.0 < self.lam < 0.5):
                raise ValidationError(f"cantor ratio must lie in (0, 1/2), got {self.lam}")
            if int(self.level) < 1:
                raise ValidationError(f"cantor level must be >= 1, got {self.level}")
            object.__setattr__(self, "level", int(self.level))
            if self.carrier is None:
                object.__setattr__(self, "carrier", (self.epsilon0, 1.0))
            lo, hi = self.carrier
            if not (0.0 <= lo < hi <= 1.0):
                raise ValidationError(f"carrier must be a subinterval of [0,1], got {self.carrier}")
            object.__setattr__(self, "carrier", (float(lo), float(hi)))
        elif self.kind == "finite_union":
            if not self.intervals:
                raise ValidationError("finite_union needs at least one interval")
            ivs = tuple((float(a), float(b)) for a, b in self.intervals)
            for a, b in ivs:
                if not (0.0 <= a < b <= 1.0):
                    raise ValidationError(f"bad interval [{a}, {b}] in union")
            ivs = tuple(sorted(ivs))
            for (a0, b0), (a1, b1) in zip(ivs, ivs[1:]):
                if a1 < b0:
                    raise ValidationError("union intervals must be disjoint")
            object.__setattr__(self, "intervals", ivs)
        else:
            raise ValidationError(f"unknown time-set kind {self.kind!r}")

    def cells(self, level=None) -> np.ndarray:
        """Covering intervals of the set, as an (m, 2) array.

        For intervals and unions this is the set itself (level ignored);
        for a Cantor set, the construction cells at the given level
        (default: the set's own level).
        """
        if self.kind == "interval":
            return np.array([[self.a, self.b]])
        if self.kind == "finite_union":
            return np.asarray(self.intervals, dtype=np.float64)
        lvl = self.level if level is None else int(level)
        return cantor_cells(self.lam, lvl, self.carrier)

    def to_json(self) -> str:
        doc = {"kind": self.kind, "epsilon0": self.epsilon0}
        if self.kind == "interval":
            doc.update(a=self.a, b=self.b)
        elif self.kind == "cantor":
            doc.update(lam=self.lam, level=self.level, carrier=list(self.carrier))
        else:
            doc.update(intervals=[list(iv) for iv in self.intervals])
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "TimeSet":
        doc = json.loads(text)
        kind = doc.get("kind")
        if kind == "interval":
            return TimeSet(kind="interval", a=doc["a"], b=doc["b"],
                           epsilon0=doc.get("epsilon0", 0.1))
        if kind == "cantor":
            carrier = doc.get("carrier")
            return TimeSet(kind="cantor", lam=doc["lam"], level=doc["level"],
                           carrier=tuple(carrier) if carrier else None,
                           epsilon0=doc.get("epsilon0", 0.1))
        if kind == "finite_union":
            return TimeSet(kind="finite_union",
                           intervals=tuple(tuple(iv) for iv in doc["intervals"]),
                           epsilon0=doc.get("epsilon0", 0.1))
        raise ValidationError(f"unknown time-set kind {kind!r}")


def cantor_cells(lam, level, carrier=(0.0, 1.0)) -> np.ndarray:
    """Construction cells of the middle-interval Cantor set, as (2^level, 2).

    Each step keeps the first and last lam-fraction of every cell. Level 0
    is the carrier itself.
    """
    lam = float(lam)
    if not (0.0 < lam < 0.5):
        raise ValidationError(f"cantor ratio must lie in (0, 1/2), got {lam}")
    level = int(level)
    if level < 0:
        raise ValidationError(f"level must be >= 0, got {level}")
    if 1 << level > _ATOM_BUDGET:
        raise ResourceError(f"2^{level} cells exceed the atom budget {_ATOM_BUDGET}")
    lo, hi = float(carrier[0]), float(carrier[1])
    if hi <= lo:
        raise ValidationError(f"degenerate carrier [{lo}, {hi}]")
    cells = np.array([[lo, hi]])
    for _ in range(level):
        length = (cells[:, 1] - cells[:, 0]) * lam
        left = np.stack([cells[:, 0], cells[:, 0] + length], axis=1)
        right = np.stack([cells[:, 1] - length, cells[:, 1]], axis=1)
        cells = np.concatenate([left, right])
        cells = cells[np.argsort(cells[:, 0])]
    return cells


def time_mask(E: TimeSet, times, tol=None) -> np.ndarray:
    """Boolean mask of grid times lying in (a tol-neighborhood of) the set."""
    times = np.asarray(times, dtype=np.float64)
    if tol is None:
        tol = 0.0 if times.size < 2 else 0.5 * float(np.min(np.diff(times)))
    mask = np.zeros(times.shape, dtype=bool)
    for lo, hi in E.cells():
        mask |= (times >= lo - tol) & (times <= hi + tol)
    return mask


# --------------------------------------------------------------------------- #
# target sets
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class TargetSet:
    """A compact target in R^dim.

    kinds: point(x) | ball(center, radius) | cantor_product(lam_axes, level,
    box) | union(balls = sequence of (center, radius)).
    """

    kind: str
    dim: int
    x: tuple | None = None
    center: tuple | None = None
    radius: float | None = None
    lam_axes: tuple | None = None
    level: int | None = None
    box: tuple | None = None  # ((lo_1, hi_1), ..., (lo_d, hi_d))
    balls: tuple | None = None

    def __post_init__(self):
        d = int(self.dim)
        if d < 1:
            raise ValidationError(f"dim must be positive, got {self.dim}")
        object.__setattr__(self, "dim", d)

        def _vec(v, name):
            v = tuple(float(c) for c in np.atleast_1d(v))
            if len(v) != d:
                raise ShapeError(f"{name} has {len(v)} coordinates, dim is {d}")
            return v

        if self.kind == "point":
            if self.x is None:
                raise ValidationError("point target needs x")
            object.__setattr__(self, "x", _vec(self.x, "x"))
        elif self.kind == "ball":
            if self.center is None or self.radius is None:
                raise ValidationError("ball target needs center and radius")
            if not self.radius > 0:
                raise ValidationError(f"ball radius must be positive, got {self.radius}")
            object.__setattr__(self, "center", _vec(self.center, "center"))
        elif self.kind == "cantor_product":
            if self.lam_axes is None or self.level is None:
                raise ValidationError("cantor_product needs lam_axes and level")
            lams = tuple(float(l) for l in np.atleast_1d(self.lam_axes))
            if len(lams) == 1:
                lams = lams * d
            if len(lams) != d:
                raise ShapeError(f"{len(lams)} ratios for dim {d}")
            for l in lams:
                if not (0.0 < l < 0.5):
                    raise ValidationError(f"cantor ratio must lie in (0, 1/2), got {l}")
            object.__setattr__(self, "lam_axes", lams)
            if int(self.level) < 0:
                raise ValidationError("level must be >= 0")
            object.__setattr__(self, "level", int(self.level))
            box = self.box if self.box is not None else ((0.0, 1.0),) * d
            box = tuple((float(lo), float(hi)) for lo, hi in box)
            if len(box) != d or any(hi <= lo for lo, hi in box):
                raise ValidationError(f"bad bounding box {box}")
            object.__setattr__(self, "box", box)
        elif self.kind == "union":
            if not self.balls:
                raise ValidationError("union target needs at least one ball")
            norm = []
            for c, r in self.balls:
                if not r > 0:
                    raise ValidationError(f"ball radius must be positive, got {r}")
                norm.append((_vec(c, "center"), float(r)))
            object.__setattr__(self, "balls", tuple(norm))
        else:
            raise ValidationError(f"unknown target kind {self.kind!r}")

    def bounding_box(self) -> np.ndarray:
        """Axis-aligned bounding box, shape (2, dim)."""
        if self.kind == "point":
            p = np.asarray(self.x)
            return np.stack([p, p])
        if self.kind == "ball":
            c = np.asarray(self.center)
            return np.stack([c - self.radius, c + self.radius])
        if self.kind == "cantor_product":
            b = np.asarray(self.box)
            return np.stack([b[:, 0], b[:, 1]])
        lo = np.min([np.asarray(c) - r for c, r in self.balls], axis=0)
        hi = np.max([np.asarray(c) + r for c, r in self.balls], axis=0)
        return np.stack([lo, hi])

    def to_json(self) -> str:
        doc = {"kind": self.kind, "dim": self.dim}
        if self.kind == "point":
            doc["x"] = list(self.x)
        elif self.kind == "ball":
            doc.update(center=list(self.center), radius=self.radius)
        elif self.kind == "cantor_product":
            doc.update(lam=list(self.lam_axes), level=self.level,
                       box=[list(b) for b in self.box])
        else:
            doc["balls"] = [[list(c), r] for c, r in self.balls]
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "TargetSet":
        doc = json.loads(text)
        kind, d = doc.get("kind"), int(doc.get("dim", 1))
        if kind == "point":
            return TargetSet(kind="point", dim=d, x=tuple(doc["x"]))
        if kind == "ball":
            return TargetSet(kind="ball", dim=d, center=tuple(doc["center"]),
                             radius=doc["radius"])
        if kind == "cantor_product":
            return TargetSet(kind="cantor_product", dim=d, lam_axes=tuple(doc["lam"]),
                             level=doc["level"],
                             box=tuple(tuple(b) for b in doc["box"]))
        if kind == "union":
            return TargetSet(kind="union", dim=d,
                             balls=tuple((tuple(c), r) for c, r in doc["balls"]))
        raise ValidationError(f"unknown target kind {kind!r}")


# --------------------------------------------------------------------------- #
# discrete measures
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure on finitely many atoms, each standing for a cell.

    atoms: (n,) for measures on the line, (n, d) for spatial ones.
    cell_size is the resolution an atom represents (used to regularize
    kernel self-interactions).
    """

    atoms: np.ndarray
    weights: np.ndarray
    cell_size: float

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 1 or atoms.shape[0] != weights.shape[0]:
            raise ShapeError(
                f"{atoms.shape[0]} atoms vs {weights.shape} weights"
            )
        if np.any(weights < 0):
            raise ValidationError("weights must be nonnegative")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValidationError(f"weights sum to {weights.sum()}, not 1")
        if not self.cell_size > 0:
            raise ValidationError(f"cell_size must be positive, got {self.cell_size}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @property
    def n_atoms(self) -> int:
        return self.weights.shape[0]

    def to_csv(self, fname):
        atoms = self.atoms if self.atoms.ndim == 2 else self.atoms[:, None]
        d = atoms.shape[1]
        header = ",".join(f"x_{i + 1}" for i in range(d)) + ",weight"
        np.savetxt(fname, np.column_stack([atoms, self.weights]),
                   delimiter=",", header=header, comments="",
                   fmt="%.17g", footer=f"# cell_size={self.cell_size!r}")

    @staticmethod
    def from_csv(fname) -> "DiscreteMeasure":
        with open(fname) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        cell = None
        rows = []
        for ln in lines[1:]:
            if ln.startswith("#"):
                if "cell_size=" in ln:
                    cell = float(ln.split("cell_size=")[1])
                continue
            rows.append([float(v) for v in ln.split(",")])
        if cell is None or not rows:
            raise ValidationError(f"{fname}: not a measure CSV")
        arr = np.asarray(rows)
        atoms = arr[:, :-1]
        if atoms.shape[1] == 1:
            atoms = atoms[:, 0]
        return DiscreteMeasure(atoms=atoms, weights=arr[:, -1], cell_size=cell)


def natural_measure(E: TimeSet, level: int) -> DiscreteMeasure:
    """Canonical probability measure of a time set at a given resolution.

    Intervals get 2^level equal cells with midpoint atoms (normalized
    Lebesgue); Cantor sets get their 2^level construction cells with uniform
    weights (the self-similar measure); unions weight each interval by
    length, subdividing it into cells of roughly total_length/2^level.
    """
    level = int(level)
    if level < 0:
        raise ValidationError("level must be >= 0")
    if 1 << level > _ATOM_BUDGET:
        raise ResourceError(f"2^{level} atoms exceed the atom budget {_ATOM_BUDGET}")
    m = 1 << level
    if E.kind == "interval":
        width = (E.b - E.a) / m
        atoms = E.a + width * (np.arange(m) + 0.5)
        return DiscreteMeasure(atoms=atoms, weights=np.full(m, 1.0 / m), cell_size=width)
    if E.kind == "cantor":
        cells = cantor_cells(E.lam, level, E.carrier)
        atoms = cells.mean(axis=1)
        return DiscreteMeasure(
            atoms=atoms,
            weights=np.full(m, 1.0 / m),
            cell_size=float(E.lam ** level * (E.carrier[1] - E.carrier[0])),
        )
    # finite_union: cells of comparable size across components, length weights
    lengths = np.array([b - a for a, b in E.intervals])
    total = float(lengths.sum())
    target_cell = total / m
    atoms, weights, widths = [], [], []
    for (a, b), ln in zip(E.intervals, lengths):
        k = max(1, int(round(ln / target_cell)))
        width = ln / k
        atoms.append(a + width * (np.arange(k) + 0.5))
        weights.append(np.full(k, (ln / total) / k))
        widths.append(width)
    return DiscreteMeasure(
        atoms=np.concatenate(atoms),
        weights=np.concatenate(weights) / np.concatenate(weights).sum(),
        cell_size=float(max(widths)),
    )


# --------------------------------------------------------------------------- #
# regularity diagnostics
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ConditionSReport:
    c9_lower: float
    c9_upper: float
    spread: float
    passed: bool
    beta: float
    scales: tuple


def check_condition_S(nu: DiscreteMeasure, beta, scales, spread_bound=1e3) -> ConditionSReport:
    """Scaling regularity of a measure on the line.

    For every atom a and scale delta, forms nu([a-delta, a+delta]) / delta^beta
    and reports the smallest and largest ratio. passed requires their spread
    (largest/smallest) to stay below spread_bound. The default bound is a
    loose screen; sharp verdicts need a bound calibrated to the scale range,
    since off-beta degeneration grows only like a power of the cell size.
    """
    if nu.atoms.ndim != 1:
        raise ValidationError("condition-S check needs a measure on the line")
    if not (0.0 < beta <= 1.0):
        raise ValidationError(f"beta must lie in (0, 1], got {beta}")
    scales = np.atleast_1d(np.asarray(scales, dtype=np.float64))
    if scales.size == 0:
        raise ValidationError("need at least one scale")
    if np.any(scales <= 0):
        raise ValidationError("scales must be positive")
    order = np.argsort(nu.atoms)
    pos = nu.atoms[order]
    cum = np.concatenate([[0.0], np.cumsum(nu.weights[order])])
    lo_ratio, hi_ratio = math.inf, -math.inf
    for delta in scales:
        left = np.searchsorted(pos, pos - delta, side="left")
        right = np.searchsorted(pos, pos + delta, side="right")
        mass = cum[right] - cum[left]
        ratios = mass / delta ** beta
        lo_ratio = min(lo_ratio, float(ratios.min()))
        hi_ratio = max(hi_ratio, float(ratios.max()))
    spread = math.inf if lo_ratio <= 0 else hi_ratio / lo_ratio
    return ConditionSReport(
        c9_lower=lo_ratio,
        c9_upper=hi_ratio,
        spread=spread,
        passed=bool(np.isfinite(spread) and spread <= spread_bound),
        beta=float(beta),
        scales=tuple(float(s) for s in np.sort(scales)),
    )


def frostman_kernel_sup(nu: DiscreteMeasure, hurst, d, beta, r) -> float:
    """sup over atoms t of sum_s nu(s) / max{r^d, |s-t|^(hurst*d)}.

    beta does not enter the sum; it names the envelope phi_{d - beta/hurst}
    the caller compares against. The self-interaction |t-t| = 0 is smeared
    to a quarter-cell distance, the scale an atom's own cell contributes at.
    """
    if nu.atoms.ndim != 1:
        raise ValidationError("kernel sup needs a measure on the line")
    if not (0.0 < hurst < 1.0):
        raise ValidationError(f"hurst must lie in (0,1), got {hurst}")
    if int(d) < 1 or not r > 0:
        raise ValidationError("need d >= 1 and r > 0")
    hd = hurst * d
    floor = max(float(r) ** d, (nu.cell_size / 4.0) ** hd)
    pos = nu.atoms
    w = nu.weights
    best = 0.0
    chunk = max(1, int(2 ** 22 // max(pos.size, 1)))
    for i0 in range(0, pos.size, chunk):
        dist = np.abs(pos[i0 : i0 + chunk, None] - pos[None, :]) ** hd
        np.maximum(dist, floor, out=dist)
        totals = (w[None, :] / dist).sum(axis=1)
        best = max(best, float(totals.max()))
    return best


# --------------------------------------------------------------------------- #
# target discretization
# --------------------------------------------------------------------------- #


def _grid_cells_overlapping_ball(center, radius, side, dim):
    """Half-open grid cells [k*side, (k+1)*side) meeting the closed ball."""
    center = np.asarray(center, dtype=np.float64)
    lo_idx = np.floor((center - radius) / side).astype(np.int64)
    hi_idx = np.floor((center + radius) / side).astype(np.int64)
    ranges = [np.arange(a, b + 1) for a, b in zip(lo_idx, hi_idx)]
    mesh = np.meshgrid(*ranges, indexing="ij")
    idx = np.stack([m.ravel() for m in mesh], axis=1)
    lo = idx * side
    hi = lo + side
    nearest = np.clip(center, lo, hi)
    dist = np.sqrt(((nearest - center) ** 2).sum(axis=1))
    inside = dist < radius
    # ties touching at distance exactly radius count only where the nearest
    # point belongs to the half-open cell
    on_edge = np.isclose(dist, radius, rtol=0.0, atol=1e-12) & np.all(nearest < hi, axis=1)
    keep = inside | on_edge
    return np.stack([lo[keep], hi[keep]], axis=1)


def discretize_target(F: TargetSet, resolution) -> np.ndarray:
    """Finite cover of a target by axis-aligned cells, shape (m, 2, dim).

    Cells have side at most resolution, their union contains the target,
    and every cell center lies within resolution of it.
    """
    if not resolution > 0:
        raise ValidationError(f"resolution must be positive, got {resolution}")
    d = F.dim
    if F.kind == "point":
        c = np.asarray(F.x, dtype=np.float64)
        half = resolution / 2.0
        return np.stack([c - half, c + half])[None, :, :]
    if F.kind == "ball":
        return _grid_cells_overlapping_ball(F.center, F.radius, float(resolution), d)
    if F.kind == "union":
        covers = [
            _grid_cells_overlapping_ball(c, r, float(resolution), d) for c, r in F.balls
        ]
        cells = np.concatenate(covers)
        keys = np.round(cells[:, 0, :] / resolution).astype(np.int64)
        _, uniq = np.unique(keys, axis=0, return_index=True)
        return cells[np.sort(uniq)]
    # cantor_product: per-axis construction cells, subdivided to resolution
    axes = []
    for lam, (lo, hi) in zip(F.lam_axes, F.box):
        cells = cantor_cells(lam, F.level, (lo, hi))
        side = float(cells[0, 1] - cells[0, 0])
        if side > resolution:
            k = int(math.ceil(side / resolution))
            offs = np.arange(k) / k * side
            sub_lo = (cells[:, 0, None] + offs[None, :]).ravel()
            cells = np.stack([sub_lo, sub_lo + side / k], axis=1)
        axes.append(cells)
    counts = [a.shape[0] for a in axes]
    total = int(np.prod(counts))
    if total > _ATOM_BUDGET:
        raise ResourceError(f"{total} product cells exceed the atom budget")
    mesh = np.meshgrid(*[np.arange(c) for c in counts], indexing="ij")
    idx = np.stack([m.ravel() for m in mesh], axis=1)
    lo = np.stack([axes[j][idx[:, j], 0] for j in range(d)], axis=1)
    hi = np.stack([axes[j][idx[:, j], 1] for j in range(d)], axis=1)
    return np.stack([lo, hi], axis=1)

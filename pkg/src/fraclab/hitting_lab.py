"""Monte Carlo hitting-probability estimation for drifted rough paths.

An experiment fixes a sampled process (fractional path, optionally with an
independent rougher component mixed in), a deterministic drift, a time set
the path is restricted to, and a spatial target. Hitting is detected on the
grid: a path scores a hit when the minimum over retained grid times of its
distance to the target is at most the effective radius. Because grid
detection misses between-sample excursions, the effective radius may add a
modulus-of-continuity correction kappa * dt^h * sqrt(log(1/dt)) (h the
roughest scaling exponent present); corrected and uncorrected counts are
both reported, and a flag warns when the correction dominates the requested
radius.

Point hitting is never estimated directly (a grid almost surely misses a
point); instead `point_hit_scaling` sweeps shrinking ball radii with common
random numbers and reports the log-log slope of p(r). A terminal slope near
zero over resolved radii (ball still large relative to the grid modulus and
still recording hits) is the non-polarity signature: p(r) stays bounded
below. A persistent positive slope is consistent with the target being
missed in the limit.

All estimators draw paths through counter-based streams keyed by
(seed, path index), so results are independent of batch sizes and worker
counts, and per-path minimum distances are reused across radii (common
random numbers make monotonicity in the radius exact, not just in
expectation).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta as _beta_dist

from ._kern import min_dist_balls, min_dist_boxes
from .drift_library import DriftSpec, eval_drift
from .errors import ValidationError
from .fractal_sets import TargetSet, TimeSet, discretize_target, time_mask
from .potential_theory import CapacityEstimate
from .stochastic_paths import TimeGrid, sample_fbm_batch, sample_mixed_batch

__all__ = [
    "HitRule",
    "HitExperiment",
    "HitResult",
    "ScalingReport",
    "DichotomyVerdict",
    "SandwichReport",
    "estimate_hitting_prob",
    "point_hit_scaling",
    "dichotomy_predict",
    "bound_sandwich",
    "result_ledger_append",
    "result_ledger_lookup",
]

_Z95 = 1.959963984540054  # two-sided 95% normal quantile
_LEDGER_HEADER = "experiment_hash,p_hat,ci_low,ci_high,radius,n_paths,seed"


def default_threads() -> int:
    """Worker count for Monte Carlo batches (FRACLAB_THREADS, default 1)."""
    raw = os.environ.get("FRACLAB_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValidationError(f"FRACLAB_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ValidationError(f"FRACLAB_THREADS must be >= 1, got {n}")
    return n


@dataclass(frozen=True)
class HitRule:
    """Hit tolerance: base radius plus optional grid-modulus correction."""

    radius: float = 0.0
    holder_correction: bool = False
    kappa: float = 2.0

    def __post_init__(self):
        if not (np.isfinite(self.radius) and self.radius >= 0.0):
            raise ValidationError(f"hit radius must be >= 0, got {self.radius}")
        if not self.kappa > 0.0:
            raise ValidationError(f"kappa must be positive, got {self.kappa}")


@dataclass(frozen=True)
class HitExperiment:
    """Full specification of one Monte Carlo hitting run."""

    hurst: float
    dim: int
    drift: DriftSpec
    time_set: TimeSet
    target: TargetSet
    n_paths: int
    grid: TimeGrid
    hit_rule: HitRule = field(default_factory=HitRule)
    seed: int = 0
    alpha_mix: float | None = None

    def __post_init__(self):
        if not (0.0 < self.hurst < 1.0):
            raise ValidationError(f"hurst must lie in (0,1), got {self.hurst}")
        if self.alpha_mix is not None and not (0.0 < self.alpha_mix < 1.0):
            raise ValidationError(f"alpha_mix must lie in (0,1), got {self.alpha_mix}")
        d = int(self.dim)
        if d < 1:
            raise ValidationError(f"dim must be positive, got {self.dim}")
        object.__setattr__(self, "dim", d)
        if self.drift.dim != d:
            raise ValidationError(
                f"drift has dim {self.drift.dim}, experiment has dim {d}"
            )
        if self.target.dim != d:
            raise ValidationError(
                f"target has dim {self.target.dim}, experiment has dim {d}"
            )
        if int(self.n_paths) < 100:
            raise ValidationError(f"need n_paths >= 100, got {self.n_paths}")
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "seed", int(self.seed))

        cells = self.time_set.cells()
        lo, hi = float(cells[:, 0].min()), float(cells[:, 1].max())
        if lo < self.time_set.epsilon0 or hi > 1.0:
            raise ValidationError(
                f"time set spans [{lo}, {hi}], must lie within "
                f"[{self.time_set.epsilon0}, 1] (positive start keeps the "
                "process away from its degenerate origin)"
            )
        if not (self.grid.t0 <= lo and hi <= self.grid.t1):
            raise ValidationError("grid does not cover the time set")
        widths = cells[:, 1] - cells[:, 0]
        positive = widths[widths > 0]
        if positive.size and self.grid.dt > positive.min() + 1e-15:
            raise ValidationError(
                f"grid step {self.grid.dt} is coarser than the smallest "
                f"time-set cell {positive.min()}; refine the grid"
            )

    @property
    def roughness(self) -> float:
        """Smallest scaling exponent present in the sampled process."""
        return self.hurst if self.alpha_mix is None else min(self.hurst, self.alpha_mix)

    def modulus_correction(self) -> float:
        """Grid-modulus radius addition kappa * dt^h * sqrt(log(1/dt))."""
        if not self.hit_rule.holder_correction:
            return 0.0
        dt = self.grid.dt
        return self.hit_rule.kappa * dt ** self.roughness * math.sqrt(math.log(1.0 / dt))

    def to_json(self) -> str:
        doc = {
            "hurst": self.hurst,
            "alpha_mix": self.alpha_mix,
            "dim": self.dim,
            "drift": json.loads(self.drift.to_json()),
            "time_set": json.loads(self.time_set.to_json()),
            "target": json.loads(self.target.to_json()),
            "n_paths": self.n_paths,
            "grid": {"t0": self.grid.t0, "t1": self.grid.t1, "n": self.grid.n},
            "hit_rule": {
                "radius": self.hit_rule.radius,
                "holder_correction": self.hit_rule.holder_correction,
                "kappa": self.hit_rule.kappa,
            },
            "seed": self.seed,
        }
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "HitExperiment":
        doc = json.loads(text)
        rule = doc.get("hit_rule", {})
        return HitExperiment(
            hurst=doc["hurst"],
            alpha_mix=doc.get("alpha_mix"),
            dim=doc["dim"],
            drift=DriftSpec.from_json(json.dumps(doc["drift"])),
            time_set=TimeSet.from_json(json.dumps(doc["time_set"])),
            target=TargetSet.from_json(json.dumps(doc["target"])),
            n_paths=doc["n_paths"],
            grid=TimeGrid(doc["grid"]["t0"], doc["grid"]["t1"], doc["grid"]["n"]),
            hit_rule=HitRule(
                radius=rule.get("radius", 0.0),
                holder_correction=rule.get("holder_correction", False),
                kappa=rule.get("kappa", 2.0),
            ),
            seed=doc.get("seed", 0),
        )

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]


@dataclass(frozen=True)
class HitResult:
    """Estimated hitting probability with a 95% confidence interval."""

    p_hat: float
    ci_low: float
    ci_high: float
    hits: int
    n_paths: int
    effective_radius: float
    hits_raw: int
    correction_dominates: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "p_hat": self.p_hat,
                "ci_low": self.ci_low,
                "ci_high": self.ci_high,
                "hits": self.hits,
                "n_paths": self.n_paths,
                "effective_radius": self.effective_radius,
                "hits_raw": self.hits_raw,
                "correction_dominates": self.correction_dominates,
            }
        )


def _wilson_interval(hits: int, n: int) -> tuple[float, float]:
    p = hits / n
    z2 = _Z95 * _Z95
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = _Z95 * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


def _exact_interval(hits: int, n: int) -> tuple[float, float]:
    lo = 0.0 if hits == 0 else float(_beta_dist.ppf(0.025, hits, n - hits + 1))
    hi = 1.0 if hits == n else float(_beta_dist.ppf(0.975, hits + 1, n - hits))
    return lo, hi


def _binomial_interval(hits: int, n: int, method: str) -> tuple[float, float]:
    if method == "wilson":
        return _wilson_interval(hits, n)
    if method == "exact":
        return _exact_interval(hits, n)
    raise ValidationError(f"unknown interval method {method!r}")


def _target_geometry(F: TargetSet):
    """Exact ball/box description of a target for distance evaluation."""
    if F.kind == "point":
        return "balls", np.asarray([F.x], dtype=np.float64), np.zeros(1)
    if F.kind == "ball":
        return (
            "balls",
            np.asarray([F.center], dtype=np.float64),
            np.asarray([F.radius], dtype=np.float64),
        )
    if F.kind == "union":
        centers = np.asarray([c for c, _ in F.balls], dtype=np.float64)
        radii = np.asarray([r for _, r in F.balls], dtype=np.float64)
        return "balls", centers, radii
    # cantor_product: its own construction cells at the stored level are an
    # exact cover, and requesting exactly the largest cell side avoids any
    # subdivision.
    sides = [
        (hi - lo) * lam ** F.level for (lo, hi), lam in zip(F.box, F.lam_axes)
    ]
    cells = discretize_target(F, max(sides))
    return "boxes", np.ascontiguousarray(cells[:, 0]), np.ascontiguousarray(cells[:, 1])


def _min_target_distances(exp: HitExperiment, geometry, threads: int) -> np.ndarray:
    """Per-path minimum distance (over retained grid times) to the target."""
    grid = exp.grid
    mask = time_mask(exp.time_set, grid.times)
    if mask.size == 0:
        raise ValidationError("no grid times fall inside the time set")
    drift_vals = eval_drift(exp.drift, grid)[:, mask]
    kind, g1, g2 = geometry

    out = np.empty(exp.n_paths, dtype=np.float64)
    batch = int(max(16, min(1024, (1 << 24) // max(exp.dim * grid.n, 1))))
    ranges = [
        (b0, min(b0 + batch, exp.n_paths)) for b0 in range(0, exp.n_paths, batch)
    ]

    def run(span):
        b0, b1 = span
        if exp.alpha_mix is None:
            paths = sample_fbm_batch(
                exp.hurst, exp.dim, grid, exp.seed, start=b0, count=b1 - b0
            )
        else:
            paths = sample_mixed_batch(
                exp.hurst, exp.alpha_mix, exp.dim, grid, exp.seed, exp.seed,
                start=b0, count=b1 - b0,
            )
        shifted = np.ascontiguousarray(paths[:, :, mask] + drift_vals[None])
        if kind == "balls":
            out[b0:b1] = min_dist_balls(shifted, g1, g2)
        else:
            out[b0:b1] = min_dist_boxes(shifted, g1, g2)

    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, ranges))
    else:
        for span in ranges:
            run(span)
    return out


def _result_from_distances(
    dmin: np.ndarray, exp: HitExperiment, ci_method: str
) -> HitResult:
    correction = exp.modulus_correction()
    eff = exp.hit_rule.radius + correction
    hits = int(np.count_nonzero(dmin <= eff))
    hits_raw = int(np.count_nonzero(dmin <= exp.hit_rule.radius))
    n = exp.n_paths
    lo, hi = _binomial_interval(hits, n, ci_method)
    return HitResult(
        p_hat=hits / n,
        ci_low=lo,
        ci_high=hi,
        hits=hits,
        n_paths=n,
        effective_radius=eff,
        hits_raw=hits_raw,
        correction_dominates=bool(correction > exp.hit_rule.radius),
    )


def estimate_hitting_prob(
    exp: HitExperiment, *, threads: int | None = None, ci_method: str = "wilson"
) -> HitResult:
    """Monte Carlo estimate of the probability that the drifted path,
    restricted to the time set, comes within the effective radius of the
    target. Wilson 95% interval by default; ``ci_method="exact"`` switches
    to the equal-tailed exact binomial interval for small-hit regimes.
    """
    threads = default_threads() if threads is None else int(threads)
    dmin = _min_target_distances(exp, _target_geometry(exp.target), threads)
    return _result_from_distances(dmin, exp, ci_method)


@dataclass(frozen=True)
class ScalingReport:
    """p(r) table over shrinking ball radii with slope/plateau analysis."""

    radii: tuple
    p_table: tuple
    hits: tuple
    slopes: tuple
    slope: float
    plateau: bool
    resolved: tuple
    degenerate: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "radii": list(self.radii),
                "p_table": list(self.p_table),
                "hits": list(self.hits),
                "slopes": [None if math.isnan(s) else s for s in self.slopes],
                "slope": None if math.isnan(self.slope) else self.slope,
                "plateau": self.plateau,
                "resolved": list(self.resolved),
                "degenerate": self.degenerate,
            }
        )


def point_hit_scaling(
    exp: HitExperiment,
    radii,
    *,
    threads: int | None = None,
    min_hits: int = 20,
    floor_factor: float = 8.0,
    plateau_slope: float = 0.1,
    window: int = 4,
) -> ScalingReport:
    """Estimate p(r) = P{path comes within r of the target point} on a
    decreasing radius ladder with common random numbers, and test whether
    p(r) keeps decaying or plateaus.

    A radius is *resolved* when it exceeds ``floor_factor`` times the grid
    modulus dt^h and still records at least ``min_hits`` hits; slopes are
    least-squares fits of log p against log r. ``plateau`` is the fit over
    the smallest ``window`` resolved radii having slope at most
    ``plateau_slope``: the probability has stopped shrinking at scales the
    grid can still distinguish. All-zero hit tables come back flagged
    ``degenerate`` instead of raising.
    """
    threads = default_threads() if threads is None else int(threads)
    rad = [float(r) for r in radii]
    if len(rad) < 4:
        raise ValidationError("need at least 4 radii")
    if any(not 0.0 < b < a for a, b in zip(rad, rad[1:])):
        raise ValidationError(f"radii must decrease strictly: {rad}")
    if exp.target.kind not in {"point", "ball"}:
        raise ValidationError("radius scaling needs a point or ball target")
    center = np.asarray(
        exp.target.x if exp.target.kind == "point" else exp.target.center,
        dtype=np.float64,
    )

    geometry = ("balls", center[None, :], np.zeros(1))
    dmin = _min_target_distances(exp, geometry, threads)
    correction = exp.modulus_correction()

    hits = tuple(int(np.count_nonzero(dmin <= r + correction)) for r in rad)
    n = exp.n_paths
    p = tuple(h / n for h in hits)

    floor = floor_factor * exp.grid.dt ** exp.roughness
    resolved = tuple(
        r >= floor and h >= min_hits for r, h in zip(rad, hits)
    )
    slopes = []
    for k in range(len(rad) - 1):
        if hits[k] > 0 and hits[k + 1] > 0:
            slopes.append(
                math.log(p[k + 1] / p[k]) / math.log(rad[k + 1] / rad[k])
            )
        else:
            slopes.append(float("nan"))

    def _fit(idx):
        if len(idx) < 2:
            return float("nan")
        xs = np.log([rad[k] for k in idx])
        ys = np.log([p[k] for k in idx])
        return float(np.polyfit(xs, ys, 1)[0])

    res_idx = [k for k, ok in enumerate(resolved) if ok]
    slope = _fit(res_idx)
    tail = res_idx[-min(window, len(res_idx)):]
    tail_slope = _fit(tail)
    plateau = bool(len(tail) >= 2 and tail_slope <= plateau_slope)
    return ScalingReport(
        radii=tuple(rad),
        p_table=p,
        hits=hits,
        slopes=tuple(slopes),
        slope=slope,
        plateau=plateau,
        resolved=resolved,
        degenerate=bool(all(h == 0 for h in hits)),
    )


@dataclass(frozen=True)
class DichotomyVerdict:
    """Zero/positive prediction from the dimension threshold rule."""

    time_dim: float
    threshold: float
    target_dim: float
    prediction: str
    source: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "time_dim": self.time_dim,
                "threshold": self.threshold,
                "target_dim": self.target_dim,
                "prediction": self.prediction,
                "source": self.source,
            }
        )


def _time_set_dimension(E: TimeSet) -> float:
    if E.kind == "interval":
        return 0.0 if E.a == E.b else 1.0
    if E.kind == "cantor":
        return math.log(2.0) / math.log(1.0 / E.lam)
    return 1.0  # finite union of nondegenerate intervals


def _target_dimension(F: TargetSet) -> float:
    if F.kind == "point":
        return 0.0
    if F.kind in {"ball", "union"}:
        return float(F.dim)
    return sum(math.log(2.0) / math.log(1.0 / lam) for lam in F.lam_axes)


def dichotomy_predict(
    E: TimeSet, F: TargetSet, hurst: float, dim: int
) -> DichotomyVerdict:
    """Classify hitting as zero/positive from dimensions alone.

    The rule compares dim(F) with the threshold dim - dim(E)/hurst:
    strictly above means hitting with positive probability, strictly below
    means almost-sure missing, equality is the boundary case the dimension
    data cannot decide. For point targets this reduces to comparing
    hurst * dim with dim(E).
    """
    if not (0.0 < hurst < 1.0):
        raise ValidationError(f"hurst must lie in (0,1), got {hurst}")
    dim = int(dim)
    if dim < 1:
        raise ValidationError(f"dim must be positive, got {dim}")
    if F.dim != dim:
        raise ValidationError(f"target dim {F.dim} differs from ambient dim {dim}")
    beta = _time_set_dimension(E)
    threshold = dim - beta / hurst
    dim_f = _target_dimension(F)
    tol = 1e-9
    if dim_f > threshold + tol:
        prediction = "positive"
    elif dim_f < threshold - tol:
        prediction = "zero"
    else:
        prediction = "boundary"
    source = (
        "point rule: hurst*dim vs time-set dimension"
        if F.kind == "point"
        else "range rule: target dimension vs dim - time_dim/hurst"
    )
    return DichotomyVerdict(
        time_dim=beta,
        threshold=threshold,
        target_dim=dim_f,
        prediction=prediction,
        source=source,
    )


@dataclass(frozen=True)
class SandwichReport:
    """Qualitative consistency of MC probability vs capacity/measure bounds."""

    consistent: bool
    notes: tuple
    c1_range: tuple | None

    def to_json(self) -> str:
        return json.dumps(
            {
                "consistent": self.consistent,
                "notes": list(self.notes),
                "c1_range": None if self.c1_range is None else list(self.c1_range),
            }
        )


def bound_sandwich(
    result: HitResult,
    capacity: CapacityEstimate,
    hausdorff_val: float,
    *,
    p_floor: float = 0.05,
) -> SandwichReport:
    """Check that a Monte Carlo estimate sits between the capacity lower
    bound and the measure upper bound, up to the unknown constants.

    Inconsistencies are reported, never raised: a zero-capacity verdict
    cannot coexist with a clearly positive probability, a vanishing measure
    upper bound cannot coexist with persistent hits, and a positive
    capacity verdict is refuted by an interval pinning the probability at
    zero. When both bracketing estimates are positive the implied constant
    range [p_hat / hausdorff_val, capacity / p_hat] is reported.
    """
    hausdorff_val = float(hausdorff_val)
    if hausdorff_val < 0.0:
        raise ValidationError(f"measure estimate must be >= 0, got {hausdorff_val}")
    notes = []
    consistent = True

    if capacity.verdict == "zero" and result.ci_low > p_floor:
        consistent = False
        notes.append(
            f"zero-capacity verdict against p_hat={result.p_hat:.4g} "
            f"(ci_low={result.ci_low:.4g} > {p_floor})"
        )
    if capacity.verdict == "positive" and result.ci_high < 1e-3:
        consistent = False
        notes.append(
            f"positive-capacity verdict but ci_high={result.ci_high:.3g} "
            "pins the probability at zero at this radius"
        )
    if hausdorff_val < 1e-3 and result.ci_low > p_floor:
        consistent = False
        notes.append(
            f"measure upper bound {hausdorff_val:.3g} forces probability 0 "
            f"but ci_low={result.ci_low:.4g}"
        )

    c1_range = None
    if result.p_hat > 0.0 and capacity.verdict == "positive" and hausdorff_val > 0.0:
        c1_range = (result.p_hat / hausdorff_val, capacity.value / result.p_hat)
        if c1_range[0] > c1_range[1]:
            notes.append(
                "implied constant range is empty: "
                f"[{c1_range[0]:.4g}, {c1_range[1]:.4g}]"
            )
    if consistent and not notes:
        notes.append("no contradiction between MC estimate and bounds")
    return SandwichReport(consistent=consistent, notes=tuple(notes), c1_range=c1_range)


def result_ledger_append(fname, exp: HitExperiment, result: HitResult) -> str:
    """Append one result row to the CSV ledger; returns the experiment hash."""
    key = exp.content_hash()
    line = (
        f"{key},{result.p_hat:.17g},{result.ci_low:.17g},{result.ci_high:.17g},"
        f"{result.effective_radius:.17g},{result.n_paths},{exp.seed}"
    )
    fresh = not os.path.exists(fname) or os.path.getsize(fname) == 0
    with open(fname, "a") as fh:
        if fresh:
            fh.write(_LEDGER_HEADER + "\n")
        fh.write(line + "\n")
    return key


def result_ledger_lookup(fname, exp: HitExperiment) -> list[dict]:
    """Rows previously recorded for this experiment (resumable sweeps)."""
    key = exp.content_hash()
    if not os.path.exists(fname):
        return []
    rows = []
    with open(fname) as fh:
        header = fh.readline().strip()
        if header != _LEDGER_HEADER:
            raise ValidationError(f"{fname}: not a results ledger")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 7 or parts[0] != key:
                continue
            rows.append(
                {
                    "experiment_hash": parts[0],
                    "p_hat": float(parts[1]),
                    "ci_low": float(parts[2]),
                    "ci_high": float(parts[3]),
                    "radius": float(parts[4]),
                    "n_paths": int(parts[5]),
                    "seed": int(parts[6]),
                }
            )
    return rows

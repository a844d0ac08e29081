import json
import math

import numpy as np
import pytest

from fraclab.drift_library import (
    DriftSpec,
    eval_drift,
    holder_diagnose,
    tabulated_from_csv,
    weierstrass_alpha,
    weierstrass_eval,
)
from fraclab.errors import ShapeError, ValidationError
from fraclab.stochastic_paths import TimeGrid, sample_fbm, sample_fbm_batch, path_to_csv


def test_weierstrass_fixed_points():
    # geometric series at t=0
    assert weierstrass_eval(0.5, 2.0, 0.0, 1e-12) == pytest.approx(2.0, abs=2e-12)
    # t=1/2: first term -1, every later phase is an integer
    assert weierstrass_eval(0.5, 2.0, 0.5, 1e-12) == pytest.approx(0.0, abs=2e-12)


def test_weierstrass_against_long_summation():
    t = 1.0 / 3.0
    brute = sum(0.7 ** n * math.cos(2 * math.pi * ((t * 2.0 ** n) % 1.0)) for n in range(201))
    assert weierstrass_eval(0.7, 2.0, t, 1e-10) == pytest.approx(brute, abs=1e-9)


def test_weierstrass_truncation_is_certified():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        tau = rng.uniform(0.2, 0.9)
        theta = rng.uniform(1.0 / tau + 0.1, 5.0)
        t = rng.uniform(0.0, 1.0)
        tol = 1e-8
        a = weierstrass_eval(tau, theta, t, tol)
        b = weierstrass_eval(tau, theta, t, tol / 100.0)
        assert abs(a - b) <= tol


def test_weierstrass_periodic_for_even_integer_theta():
    for tau, theta in [(0.6, 2.0), (0.3, 4.0), (0.25, 6.0)]:
        tol = 1e-11
        assert abs(weierstrass_eval(tau, theta, 0.0, tol) - weierstrass_eval(tau, theta, 1.0, tol)) <= 2 * tol


def test_weierstrass_alpha_formula():
    assert weierstrass_alpha(0.5, 4.0) == pytest.approx(0.5, abs=1e-15)
    assert weierstrass_alpha(0.7, 2.0) == pytest.approx(math.log(1 / 0.7) / math.log(2), abs=1e-15)
    with pytest.raises(ValidationError):
        weierstrass_alpha(0.5, 2.0)  # tau*theta = 1: flat sum, not rough


def test_eval_drift_zero_and_diagonal():
    grid = TimeGrid(0.0, 1.0, 65)
    assert np.array_equal(eval_drift(DriftSpec(kind="zero", dim=3), grid), np.zeros((3, 65)))

    spec = DriftSpec(kind="weierstrass_diagonal", dim=2, tau=0.5, theta=4.0)
    m = eval_drift(spec, grid)
    assert m.shape == (2, 65)
    assert np.array_equal(m[0], m[1])
    assert m[0, 0] == pytest.approx(2.0, abs=2e-12)

    scalar = eval_drift(DriftSpec(kind="weierstrass", tau=0.5, theta=4.0), grid)
    assert np.array_equal(scalar[0], m[0])


def test_vectorized_matches_scalar_eval():
    grid = TimeGrid(0.0, 1.0, 33)
    for tau, theta, tol in [(0.6, 2.0, 1e-12), (0.5, 4.0, 1e-12), (0.4, 3.0, 1e-9)]:
        row = eval_drift(DriftSpec(kind="weierstrass", tau=tau, theta=theta, tol=tol), grid)[0]
        ref = [weierstrass_eval(tau, theta, t, tol) for t in grid.times]
        assert np.allclose(row, ref, atol=5e-9)


def test_fbm_realization_cached_and_deterministic():
    grid = TimeGrid(0.0, 1.0, 129)
    spec = DriftSpec(kind="fbm_realization", alpha=0.3, seed=11, dim=2)
    a = eval_drift(spec, grid)
    b = eval_drift(spec, grid)
    assert a is b  # write-once cache
    assert not a.flags.writeable
    # a drift realization is not any monte-carlo path of the same seed
    mc = sample_fbm_batch(0.3, 2, grid, seed=11, start=0, count=1)[0]
    assert not np.allclose(a, mc)


def test_tabulated_roundtrip_and_mismatch(tmp_path):
    grid = TimeGrid(0.0, 1.0, 33)
    p = sample_fbm(0.6, 2, grid, seed=5)
    f = tmp_path / "drift.csv"
    path_to_csv(p, f)
    spec = tabulated_from_csv(f)
    assert spec.dim == 2
    assert np.array_equal(eval_drift(spec, grid), p.values)
    with pytest.raises(ShapeError):
        eval_drift(spec, TimeGrid(0.0, 1.0, 65))


def test_drift_spec_json_roundtrip():
    spec = DriftSpec(kind="weierstrass_diagonal", dim=3, tau=0.5, theta=4.0, tol=1e-10)
    doc = json.loads(spec.to_json())
    assert doc == {"kind": "weierstrass_diagonal", "d": 3, "tol": 1e-10, "tau": 0.5, "theta": 4.0}
    back = DriftSpec.from_json(spec.to_json())
    assert back == spec
    spec2 = DriftSpec(kind="fbm_realization", alpha=0.3, seed=11, dim=2)
    assert DriftSpec.from_json(spec2.to_json()) == spec2


def test_drift_spec_validation():
    with pytest.raises(ValidationError):
        DriftSpec(kind="weierstrass", tau=0.5, theta=2.0)  # tau*theta = 1
    with pytest.raises(ValidationError):
        DriftSpec(kind="weierstrass", tau=1.2, theta=4.0)
    with pytest.raises(ValidationError):
        DriftSpec(kind="nope")
    with pytest.raises(ValidationError):
        DriftSpec(kind="fbm_realization", alpha=0.3)  # missing seed
    with pytest.raises(ShapeError):
        DriftSpec(kind="tabulated", grid=TimeGrid(0.0, 1.0, 8), values=np.zeros((1, 9)))


def test_holder_passes_for_weierstrass_at_its_exponent():
    grid = TimeGrid(0.0, 1.0, 2049)
    w = eval_drift(DriftSpec(kind="weierstrass", tau=0.5, theta=4.0), grid)
    rep = holder_diagnose(w, grid, weierstrass_alpha(0.5, 4.0))
    assert rep.pass_holder and rep.pass_reverse
    assert rep.constant_upper > 0 and rep.constant_reverse > 0
    assert all(s >= 4 * grid.dt for s in rep.scales_used)


def test_holder_zero_function_fails_reverse():
    grid = TimeGrid(0.0, 1.0, 256)
    rep = holder_diagnose(np.zeros((1, 256)), grid, 0.5)
    assert rep.constant_reverse == 0.0
    assert not rep.pass_reverse


def test_holder_linear_function():
    grid = TimeGrid(0.0, 1.0, 1025)
    rep = holder_diagnose(grid.times[None, :], grid, 0.5)
    assert rep.pass_holder
    assert rep.constant_upper <= 1.0 + 1e-12


def test_holder_band_on_sampled_fbm():
    """Exponent sweeps around the true Hurst index move the constants the
    right way: the upper constant blows up past it, the reverse constant
    degenerates below it."""
    grid = TimeGrid(0.0, 1.0, 2049)
    h = 0.5
    for seed in range(10):
        x = sample_fbm_batch(h, 1, grid, seed=seed, count=1)[0]
        at_h = holder_diagnose(x, grid, h)
        below = holder_diagnose(x, grid, h - 0.05)
        assert below.pass_holder and below.constant_upper <= 100.0
        above = holder_diagnose(x, grid, h + 0.2)
        assert above.constant_upper > 2.5 * at_h.constant_upper
        rev_low = holder_diagnose(x, grid, h - 0.2)
        assert rev_low.constant_reverse < 0.5 * at_h.constant_reverse


def test_holder_validation():
    grid = TimeGrid(0.0, 1.0, 8)
    with pytest.raises(ValidationError):
        holder_diagnose(np.zeros((1, 8)), grid, 0.5)  # too few points
    grid = TimeGrid(0.0, 1.0, 64)
    with pytest.raises(ShapeError):
        holder_diagnose(np.zeros((1, 63)), grid, 0.5)
    with pytest.raises(ValidationError):
        holder_diagnose(np.zeros((1, 64)), grid, 1.5)

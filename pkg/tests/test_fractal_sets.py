import math

import numpy as np
import pytest

from fraclab.errors import ResourceError, ShapeError, ValidationError
from fraclab.fractal_sets import (
    DiscreteMeasure,
    TargetSet,
    TimeSet,
    cantor_cells,
    check_condition_S,
    discretize_target,
    frostman_kernel_sup,
    natural_measure,
    time_mask,
)

CANTOR_DIM = math.log(2) / math.log(3)


class TestCantorCells:
    def test_first_levels(self):
        c1 = cantor_cells(1 / 3, 1, (0.0, 1.0))
        assert np.allclose(c1, [[0, 1 / 3], [2 / 3, 1]])
        c2 = cantor_cells(1 / 3, 2, (0.0, 1.0))
        assert c2.shape == (4, 2)
        assert np.allclose(c2[:, 1] - c2[:, 0], 1 / 9)

    def test_nesting(self):
        for lam in (0.25, 0.4):
            parents = cantor_cells(lam, 3, (0.0, 1.0))
            children = cantor_cells(lam, 4, (0.0, 1.0))
            for lo, hi in children:
                inside = (parents[:, 0] <= lo + 1e-15) & (hi <= parents[:, 1] + 1e-15)
                assert inside.sum() == 1

    def test_dimension_formula_quarter(self):
        # keep-ratio 1/4 gives similarity dimension log2/log4 = 1/2
        assert math.log(2) / math.log(1 / (1 / 4)) == pytest.approx(0.5)

    def test_domain(self):
        with pytest.raises(ValidationError):
            cantor_cells(0.5, 3)
        with pytest.raises(ValidationError):
            cantor_cells(-0.1, 3)
        with pytest.raises(ResourceError):
            cantor_cells(1 / 3, 40)


class TestNaturalMeasure:
    def test_interval_atoms(self):
        nu = natural_measure(TimeSet(kind="interval", a=0.0, b=1.0), 2)
        assert np.array_equal(nu.atoms, [1 / 8, 3 / 8, 5 / 8, 7 / 8])
        assert np.array_equal(nu.weights, [0.25] * 4)
        assert nu.weights.sum() == 1.0  # exact: dyadic weights

    def test_cantor_atoms(self):
        E = TimeSet(kind="cantor", lam=1 / 3, level=2, carrier=(0.0, 1.0))
        nu = natural_measure(E, 2)
        assert nu.n_atoms == 4
        assert np.array_equal(nu.weights, [0.25] * 4)
        assert nu.weights.sum() == 1.0
        assert np.allclose(nu.atoms, [1 / 18, 5 / 18, 13 / 18, 17 / 18])

    def test_cantor_cell_mass_scaling(self):
        # one level-1 cell carries mass 1/2 = (1/3)^dim exactly
        E = TimeSet(kind="cantor", lam=1 / 3, level=8, carrier=(0.0, 1.0))
        nu = natural_measure(E, 8)
        mass = nu.weights[nu.atoms <= 1 / 3].sum()
        ratio = mass / (1 / 3) ** CANTOR_DIM
        assert ratio == pytest.approx(1.0, abs=1e-12)

    def test_union_measure(self):
        E = TimeSet(kind="finite_union", intervals=((0.0, 0.25), (0.5, 1.0)))
        nu = natural_measure(E, 4)
        assert abs(nu.weights.sum() - 1.0) < 1e-12
        left = nu.weights[nu.atoms < 0.3].sum()
        assert left == pytest.approx(1 / 3, abs=1e-12)  # length-proportional


class TestConditionS:
    def test_lebesgue_passes_at_beta_one(self):
        nu = natural_measure(TimeSet(kind="interval", a=0.0, b=1.0), 12)
        scales = 2.0 ** -np.arange(0, 11)
        rep = check_condition_S(nu, 1.0, scales, spread_bound=3.0)
        assert rep.passed
        assert rep.c9_lower >= 1.0 - 1e-9
        assert rep.c9_upper <= 2.5

    def test_lebesgue_fails_at_smaller_beta(self):
        nu = natural_measure(TimeSet(kind="interval", a=0.0, b=1.0), 12)
        scales = 2.0 ** -np.arange(0, 11)
        rep = check_condition_S(nu, 0.8, scales, spread_bound=3.0)
        assert not rep.passed
        assert rep.spread > 3.0

    def test_cantor_passes_at_its_dimension(self):
        E = TimeSet(kind="cantor", lam=1 / 3, level=10, carrier=(0.0, 1.0))
        nu = natural_measure(E, 10)
        scales = 2.0 ** -np.arange(0, 15)
        scales = scales[scales >= nu.cell_size]
        rep = check_condition_S(nu, CANTOR_DIM, scales, spread_bound=9.0)
        assert rep.passed
        assert rep.spread <= 9.0

    def test_cantor_fails_at_wrong_beta(self):
        E = TimeSet(kind="cantor", lam=1 / 3, level=10, carrier=(0.0, 1.0))
        nu = natural_measure(E, 10)
        scales = 2.0 ** -np.arange(0, 15)
        scales = scales[scales >= nu.cell_size]
        rep = check_condition_S(nu, 0.9, scales, spread_bound=9.0)
        assert not rep.passed

    def test_empty_scales_rejected(self):
        nu = natural_measure(TimeSet(kind="interval", a=0.0, b=1.0), 4)
        with pytest.raises(ValidationError):
            check_condition_S(nu, 1.0, [])


class TestFrostmanKernel:
    def test_large_r_is_flat(self):
        nu = natural_measure(TimeSet(kind="interval", a=0.0, b=1.0), 8)
        for r in (1.0, 2.0, 5.0):
            assert frostman_kernel_sup(nu, 0.5, 1, 1.0, r) == pytest.approx(r ** -1, rel=1e-12)
        nu2 = natural_measure(TimeSet(kind="interval", a=0.0, b=1.0), 6)
        assert frostman_kernel_sup(nu2, 0.3, 2, 1.0, 2.0) == pytest.approx(2.0 ** -2, rel=1e-12)

    def test_lebesgue_brownian_bound(self):
        # hurst 1/2, d=1, beta=1: envelope index d - beta/hurst = -1, so the
        # kernel sup must stay below the constant 2*sqrt(2)+1 at every scale
        nu = natural_measure(TimeSet(kind="interval", a=0.0, b=1.0), 12)
        bound = 2.0 * math.sqrt(2.0) + 1.0
        vals = [frostman_kernel_sup(nu, 0.5, 1, 1.0, r) for r in 2.0 ** -np.arange(0, 13)]
        assert max(vals) <= bound
        # monotone nonincreasing in r
        assert all(vals[i] <= vals[i + 1] + 1e-12 for i in range(len(vals) - 1))

    def test_cantor_envelope_ratio_bounded(self):
        E = TimeSet(kind="cantor", lam=1 / 3, level=12, carrier=(0.0, 1.0))
        nu = natural_measure(E, 12)
        idx = 2.0 - CANTOR_DIM / 0.4  # envelope exponent for hurst=0.4, d=2
        ratios = []
        for j in range(1, 11):
            r = 2.0 ** -j
            ratios.append(frostman_kernel_sup(nu, 0.4, 2, CANTOR_DIM, r) / r ** -idx)
        assert max(ratios) <= 6.0  # reported envelope constant, small sweep
        assert max(ratios) / min(ratios) <= 4.0


class TestDiscretizeTarget:
    def test_ball_1d(self):
        F = TargetSet(kind="ball", dim=1, center=(0.0,), radius=0.5)
        cells = discretize_target(F, 0.25)
        assert 4 <= cells.shape[0] <= 5
        assert cells[:, 0, 0].min() <= -0.5 and cells[:, 1, 0].max() >= 0.5

    def test_point(self):
        F = TargetSet(kind="point", dim=2, x=(0.3, -0.4))
        cells = discretize_target(F, 0.1)
        assert cells.shape == (1, 2, 2)
        assert np.allclose(cells[0].mean(axis=0), [0.3, -0.4])

    def test_cantor_product(self):
        F = TargetSet(kind="cantor_product", dim=2, lam_axes=(1 / 3,), level=2)
        cells = discretize_target(F, 0.2)
        assert cells.shape[0] == 16
        sides = cells[:, 1, :] - cells[:, 0, :]
        assert np.allclose(sides, 1 / 9)

    def test_cantor_product_subdivides(self):
        F = TargetSet(kind="cantor_product", dim=1, lam_axes=(1 / 3,), level=1)
        cells = discretize_target(F, 0.1)  # level-1 cells have side 1/3
        sides = cells[:, 1, 0] - cells[:, 0, 0]
        assert np.all(sides <= 0.1 + 1e-12)
        assert cells.shape[0] == 2 * math.ceil((1 / 3) / 0.1)

    def test_union_dedupes(self):
        F = TargetSet(kind="union", dim=1, balls=(((0.0,), 0.3), ((0.1,), 0.3)))
        cells = discretize_target(F, 0.2)
        starts = cells[:, 0, 0]
        assert len(np.unique(np.round(starts / 0.2))) == len(starts)


class TestTimeMask:
    def test_interval_mask(self):
        t = np.linspace(0.0, 1.0, 11)
        E = TimeSet(kind="interval", a=0.32, b=0.68)
        # default tol dt/2: points whose cell touches the set are kept
        m = time_mask(E, t)
        assert np.array_equal(np.nonzero(m)[0], [3, 4, 5, 6, 7])
        m0 = time_mask(E, t, tol=0.0)
        assert np.array_equal(np.nonzero(m0)[0], [4, 5, 6])

    def test_cantor_mask_misses_gap(self):
        t = np.linspace(0.0, 1.0, 101)
        E = TimeSet(kind="cantor", lam=1 / 3, level=1, carrier=(0.0, 1.0))
        m = time_mask(E, t)
        assert not m[50]  # 0.5 sits in the removed middle third
        assert m[0] and m[100]


class TestSerialization:
    def test_time_set_json(self):
        for E in (
            TimeSet(kind="interval", a=0.2, b=0.9),
            TimeSet(kind="cantor", lam=0.3, level=4),
            TimeSet(kind="finite_union", intervals=((0.1, 0.2), (0.4, 0.8))),
        ):
            assert TimeSet.from_json(E.to_json()) == E

    def test_target_set_json(self):
        for F in (
            TargetSet(kind="point", dim=2, x=(0.1, 0.2)),
            TargetSet(kind="ball", dim=3, center=(0.0, 0.0, 0.0), radius=0.5),
            TargetSet(kind="cantor_product", dim=2, lam_axes=(1 / 3, 1 / 4), level=3),
            TargetSet(kind="union", dim=1, balls=(((0.0,), 1.0), ((2.0,), 0.5))),
        ):
            assert TargetSet.from_json(F.to_json()) == F

    def test_measure_csv_roundtrip(self, tmp_path):
        E = TimeSet(kind="cantor", lam=1 / 3, level=3, carrier=(0.0, 1.0))
        nu = natural_measure(E, 3)
        f = tmp_path / "nu.csv"
        nu.to_csv(f)
        back = DiscreteMeasure.from_csv(f)
        assert np.array_equal(back.atoms, nu.atoms)
        assert np.array_equal(back.weights, nu.weights)
        assert back.cell_size == nu.cell_size


class TestValidation:
    def test_time_set(self):
        with pytest.raises(ValidationError):
            TimeSet(kind="interval", a=0.5, b=0.2)
        with pytest.raises(ValidationError):
            TimeSet(kind="cantor", lam=0.6, level=3)
        with pytest.raises(ValidationError):
            TimeSet(kind="cantor", lam=0.3, level=0)
        with pytest.raises(ValidationError):
            TimeSet(kind="finite_union", intervals=((0.0, 0.5), (0.4, 0.8)))

    def test_target_set(self):
        with pytest.raises(ValidationError):
            TargetSet(kind="ball", dim=2, center=(0.0, 0.0), radius=0.0)
        with pytest.raises(ShapeError):
            TargetSet(kind="point", dim=3, x=(0.0, 0.0))
        with pytest.raises(ValidationError):
            TargetSet(kind="union", dim=1, balls=())

    def test_measure(self):
        with pytest.raises(ValidationError):
            DiscreteMeasure(atoms=np.array([0.1, 0.2]), weights=np.array([0.6, 0.6]), cell_size=0.1)
        with pytest.raises(ValidationError):
            DiscreteMeasure(atoms=np.array([0.1, 0.2]), weights=np.array([1.2, -0.2]), cell_size=0.1)
        with pytest.raises(ShapeError):
            DiscreteMeasure(atoms=np.array([0.1]), weights=np.array([0.5, 0.5]), cell_size=0.1)

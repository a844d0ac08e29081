import json
import math

import numpy as np
import pytest

from fraclab.drift_library import DriftSpec
from fraclab.errors import ShapeError, ValidationError
from fraclab.fractal_sets import TimeSet, natural_measure
from fraclab.parabolic_geometry import (
    DimensionEstimate,
    MetricSpec,
    PointCloud,
    box_count,
    graph_dim_parabolic,
    hausdorff_upper,
    minkowski_dim,
    rho_H,
)

CANTOR_DIM = math.log(2) / math.log(3)
W_GRAPH_DIM = 2.0 + math.log(0.7) / math.log(2.0)  # 1.4854...


def _interval_cloud(level=12):
    nu = natural_measure(TimeSet(kind="interval", a=0.0, b=1.0), level)
    return nu, PointCloud(points=nu.atoms[:, None], metric=MetricSpec(kind="euclidean", dim=1))


def _cantor_cloud(level=12):
    nu = natural_measure(TimeSet(kind="cantor", lam=1 / 3, level=level, carrier=(0.0, 1.0)), level)
    return nu, PointCloud(points=nu.atoms[:, None], metric=MetricSpec(kind="euclidean", dim=1))


def _time_axis_cloud(hurst, n=40001):
    t = np.linspace(0.0, 1.0, n)
    return PointCloud(
        points=np.column_stack([t, np.zeros(n)]),
        metric=MetricSpec(kind="parabolic", dim=1, hurst=hurst),
    )


class TestRho:
    def test_pointwise(self):
        assert rho_H((0.3, 1.0, 2.0), (0.3, 1.0, 2.0), 0.5) == 0.0
        # dt=0.04 -> sqrt = 0.2 beats the space gap 0.1
        assert rho_H((0.04, 0.1), (0.0, 0.0), 0.5) == pytest.approx(0.2, abs=1e-12)

    def test_h_one_is_max_norm(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            u, v = rng.uniform(-1, 1, (2, 4))
            expect = max(abs(u[0] - v[0]), float(np.sqrt(((u[1:] - v[1:]) ** 2).sum())))
            assert rho_H(u, v, 1.0) == pytest.approx(expect, abs=1e-12)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(11)
        pts = rng.uniform(0, 1, (10_000, 3, 3))
        for h in (0.3, 0.5, 0.8):
            for u, v, w in pts[:: 10]:
                duv, dvw, duw = rho_H(u, v, h), rho_H(v, w, h), rho_H(u, w, h)
                assert duw <= duv + dvw + 1e-12
                assert duv == pytest.approx(rho_H(v, u, h), abs=0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            rho_H((0.0, 1.0), (0.0, 1.0, 2.0), 0.5)


class TestBoxCount:
    def test_interval_grid_cover(self):
        rng = np.random.default_rng(1)
        cloud = PointCloud(points=rng.uniform(0, 1, 10_000)[:, None],
                           metric=MetricSpec(kind="euclidean", dim=1))
        assert box_count(cloud, 1 / 8) == 8

    def test_parabolic_time_axis(self):
        cloud = _time_axis_cloud(0.5)
        assert 50 <= box_count(cloud, 0.1) <= 101

    def test_single_point(self):
        cloud = PointCloud(points=[[0.3, 0.7]], metric=MetricSpec(kind="euclidean", dim=2))
        assert box_count(cloud, 0.25) == 1

    def test_monotone_and_saturates(self):
        _, cloud = _interval_cloud(8)
        counts = [box_count(cloud, r) for r in (2.0, 1.0, 0.5, 0.25, 0.125)]
        assert counts[0] == 1
        assert all(a <= b for a, b in zip(counts, counts[1:]))


class TestMinkowskiDim:
    def test_interval(self):
        _, cloud = _interval_cloud(12)
        est = minkowski_dim(cloud, 2.0 ** -9, 2.0 ** -3, 7)
        assert est.value == pytest.approx(1.0, abs=0.05)

    def test_cantor_triadic(self):
        _, cloud = _cantor_cloud(12)
        est = minkowski_dim(cloud, 3.0 ** -9, 3.0 ** -2, 8)
        assert est.value == pytest.approx(CANTOR_DIM, abs=0.05)
        # triadic ladder counts are exactly 2^k
        assert list(est.counts) == [4, 8, 16, 32, 64, 128, 256, 512]

    def test_weierstrass_graph_euclidean(self):
        grid_t = np.linspace(0.0, 1.0, 1 << 18)
        from fraclab.drift_library import eval_drift
        from fraclab.stochastic_paths import TimeGrid
        w = eval_drift(DriftSpec(kind="weierstrass", tau=0.7, theta=2.0, tol=1e-10),
                       TimeGrid(0.0, 1.0, 1 << 18))[0]
        cloud = PointCloud(points=np.column_stack([grid_t, w]),
                           metric=MetricSpec(kind="euclidean", dim=2))
        est = minkowski_dim(cloud, 2.0 ** -8, 2.0 ** -2, 7)
        assert est.value == pytest.approx(W_GRAPH_DIM, abs=0.1)

    def test_time_axis_parabolic_dimension(self):
        for h, n in [(0.5, 40001), (0.8, 20001)]:
            est = minkowski_dim(_time_axis_cloud(h, n), 2.0 ** -7, 2.0 ** -3, 9)
            assert est.value == pytest.approx(1.0 / h, abs=0.1)
            # the normalized variant H * dim recovers the euclidean dimension
            assert h * est.value == pytest.approx(1.0, abs=0.1)

    def test_product_dominates_factor(self):
        nu, _ = _cantor_cloud(10)
        pts2 = np.column_stack([nu.atoms, np.full(nu.n_atoms, 0.25)])
        prod = PointCloud(points=pts2, metric=MetricSpec(kind="euclidean", dim=2))
        base = minkowski_dim(_cantor_cloud(10)[1], 3.0 ** -7, 3.0 ** -2, 6)
        lifted = minkowski_dim(prod, 3.0 ** -7, 3.0 ** -2, 6)
        assert lifted.value >= base.value - 1e-9

    def test_validation(self):
        _, cloud = _interval_cloud(6)
        with pytest.raises(ValidationError):
            minkowski_dim(cloud, 0.25, 0.125, 5)
        with pytest.raises(ValidationError):
            minkowski_dim(cloud, 0.01, 0.25, 2)


class TestHausdorffUpper:
    def test_interval_length_cover(self):
        nu, cloud = _interval_cloud(12)
        for delta in (0.5, 2.0 ** -3, 2.0 ** -5):
            val = hausdorff_upper(cloud, 1.0, delta, r_floor=nu.cell_size)
            assert val <= 2.0
        off = hausdorff_upper(cloud, 1.0, 0.03, r_floor=nu.cell_size)
        assert off <= 2.01

    def test_cantor_exact_at_dimension(self):
        nu, cloud = _cantor_cloud(12)
        for j in (1, 2, 4):
            val = hausdorff_upper(cloud, CANTOR_DIM, 3.0 ** -j,
                                  ladder_ratio=3.0, r_floor=nu.cell_size)
            assert val == pytest.approx(2.0 ** CANTOR_DIM, rel=1e-12)

    def test_cantor_diverges_below_dimension(self):
        nu, cloud = _cantor_cloud(12)
        vals = [
            hausdorff_upper(cloud, 0.5, 3.0 ** -j, ladder_ratio=3.0, r_floor=nu.cell_size)
            for j in (1, 3, 5, 7)
        ]
        assert all(b > 1.2 * a for a, b in zip(vals, vals[1:]))

    def test_nonincreasing_in_beta(self):
        nu, cloud = _cantor_cloud(10)
        a = hausdorff_upper(cloud, 0.6, 0.25, r_floor=nu.cell_size)
        b = hausdorff_upper(cloud, 0.8, 0.25, r_floor=nu.cell_size)
        assert b <= a + 1e-12

    def test_floor_validation(self):
        _, cloud = _interval_cloud(6)
        with pytest.raises(ValidationError):
            hausdorff_upper(cloud, 1.0, 0.01, r_floor=0.5)


class TestGraphDim:
    def test_zero_drift_is_time_axis(self):
        E = TimeSet(kind="interval", a=0.0, b=1.0)
        est = graph_dim_parabolic(DriftSpec(kind="zero", dim=1), E, 0.5,
                                  n_grid=1 << 15, r_min=2.0 ** -7, r_max=2.0 ** -3, n_scales=9)
        assert est.value == pytest.approx(2.0, abs=0.1)

    def test_rough_drift_exceeds_euclidean_graph_dim(self):
        E = TimeSet(kind="interval", a=0.0, b=1.0)
        est = graph_dim_parabolic(
            DriftSpec(kind="weierstrass", tau=0.7, theta=2.0), E, 0.5,
            n_grid=1 << 19, r_min=2.0 ** -7, r_max=2.0 ** -3, n_scales=9,
        )
        assert est.value >= W_GRAPH_DIM - 0.1

    def test_diagonal_drift_stays_below_two(self):
        E = TimeSet(kind="interval", a=0.0, b=1.0)
        est = graph_dim_parabolic(
            DriftSpec(kind="weierstrass_diagonal", dim=2, tau=0.6, theta=2.0), E, 0.6,
            n_grid=1 << 19, r_min=2.0 ** -7, r_max=2.0 ** -3, n_scales=9,
        )
        bound = 1.0 + math.log(0.6) / math.log(2.0) + 1.0 / 0.6
        assert est.value <= bound + 0.1
        assert est.value < 2.0


class TestEstimateExport:
    def test_json_and_csv(self, tmp_path):
        _, cloud = _interval_cloud(10)
        est = minkowski_dim(cloud, 2.0 ** -7, 2.0 ** -3, 5)
        doc = json.loads(est.to_json())
        assert set(doc) == {"value", "stderr", "scales", "counts", "window"}
        assert doc["counts"] == list(est.counts)
        f = tmp_path / "dim.csv"
        est.to_csv(f)
        data = np.loadtxt(f, delimiter=",", skiprows=1)
        assert data.shape == (5, 2)
        assert np.allclose(np.exp(data[:, 1]), est.counts)


class TestValidationMisc:
    def test_cloud_shape(self):
        with pytest.raises(ShapeError):
            PointCloud(points=np.zeros((4, 3)), metric=MetricSpec(kind="euclidean", dim=2))
        with pytest.raises(ValidationError):
            PointCloud(points=np.zeros((0, 2)), metric=MetricSpec(kind="euclidean", dim=2))
        with pytest.raises(ValidationError):
            PointCloud(points=[[np.inf, 0.0]], metric=MetricSpec(kind="euclidean", dim=2))

    def test_metric_spec(self):
        with pytest.raises(ValidationError):
            MetricSpec(kind="parabolic", dim=1, hurst=1.2)
        with pytest.raises(ValidationError):
            MetricSpec(kind="spherical", dim=1)
        # hurst exactly 1 is allowed for the parabolic kind
        MetricSpec(kind="parabolic", dim=1, hurst=1.0)

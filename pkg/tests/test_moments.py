"""Smoothing spline (Reinsch form) oracles and the moment pipeline."""

import numpy as np
import pytest
from scipy.interpolate import CubicSpline, make_smoothing_spline

from ngif.dataset import DomainDescriptor, SnapshotDataset
from ngif.moments import (
    empirical_moments,
    fit_smoothing_spline,
    precompute_moment_table,
)
from ngif.testbank import eval_tests, sample_bank


def _objective(times, y, g, lam):
    """Penalized objective evaluated on natural-spline knot values g.

    Independent of the fitting code: curvature energy comes from the
    natural-spline identity int f''^2 = gamma^T R gamma with
    R gamma = Q^T g.
    """
    n = len(times)
    h = np.diff(times)
    q = np.zeros((n, n - 2))
    for j in range(n - 2):
        q[j, j] = 1.0 / h[j]
        q[j + 1, j] = -1.0 / h[j] - 1.0 / h[j + 1]
        q[j + 2, j] = 1.0 / h[j + 1]
    r = np.zeros((n - 2, n - 2))
    for j in range(n - 2):
        r[j, j] = (h[j] + h[j + 1]) / 3.0
        if j + 1 < n - 2:
            r[j, j + 1] = r[j + 1, j] = h[j + 1] / 6.0
    gamma = np.linalg.solve(r, q.T @ g)
    return np.sum((y - g) ** 2) + lam * gamma @ r @ gamma


class TestSplineOracles:
    def test_zero_lambda_interpolates(self):
        rng = np.random.default_rng(0)
        t = np.sort(rng.uniform(0, 5, 9))
        y = rng.standard_normal(9)
        sp = fit_smoothing_spline(t, y, 0.0)
        assert np.allclose(sp.evaluate(t), y, atol=1e-12)

    def test_interpolant_matches_natural_cubic_oracle(self):
        # lam = 0 must reproduce the classical natural cubic interpolant;
        # scipy's CubicSpline with natural boundary is the independent route
        rng = np.random.default_rng(1)
        t = np.sort(rng.uniform(0, 5, 11))
        y = np.sin(t) + 0.1 * rng.standard_normal(11)
        sp = fit_smoothing_spline(t, y, 0.0)
        cs = CubicSpline(t, y, bc_type="natural")
        tq = np.linspace(t[0], t[-1], 87)
        assert np.allclose(sp.evaluate(tq), cs(tq), atol=1e-9)
        assert np.allclose(sp.derivative(tq), cs(tq, 1), atol=1e-8)

    @pytest.mark.parametrize("lam", [1e-5, 1e-3, 0.1, 10.0])
    def test_matches_scipy_smoothing_spline(self, lam):
        # same objective, independently implemented via B-splines in scipy
        rng = np.random.default_rng(2)
        t = np.sort(rng.uniform(0, 4, 25))
        y = np.cos(2 * t) + 0.3 * rng.standard_normal(25)
        sp = fit_smoothing_spline(t, y, lam)
        ref = make_smoothing_spline(t, y, lam=lam)
        tq = np.linspace(t[0], t[-1], 63)
        scale = np.max(np.abs(ref(tq)))
        assert np.allclose(sp.evaluate(tq), ref(tq), atol=1e-8 * max(scale, 1.0))

    def test_optimality_against_perturbations(self):
        # the fit must minimize the penalized objective over knot values
        rng = np.random.default_rng(3)
        t = np.sort(rng.uniform(0, 3, 15))
        y = rng.standard_normal(15)
        lam = 0.02
        sp = fit_smoothing_spline(t, y, lam)
        g = sp.values[:, 0]
        j_star = _objective(t, y, g, lam)
        for _ in range(50):
            delta = rng.standard_normal(15)
            assert _objective(t, y, g + 1e-4 * delta, lam) >= j_star - 1e-12

    def test_large_lambda_tends_to_least_squares_line(self):
        rng = np.random.default_rng(4)
        t = np.linspace(0, 1, 20)
        y = 3.0 * t - 1.0 + 0.2 * rng.standard_normal(20)
        sp = fit_smoothing_spline(t, y, 1e9)
        design = np.column_stack([np.ones(20), t])
        beta, *_ = np.linalg.lstsq(design, y, rcond=None)
        assert np.allclose(sp.evaluate(t), design @ beta, atol=1e-6)
        assert np.allclose(sp.derivative(t), beta[1], atol=1e-5)

    def test_linearity_in_data(self):
        rng = np.random.default_rng(5)
        t = np.sort(rng.uniform(0, 2, 12))
        y1, y2 = rng.standard_normal((2, 12))
        lam = 1e-3
        s1 = fit_smoothing_spline(t, y1, lam)
        s2 = fit_smoothing_spline(t, y2, lam)
        s12 = fit_smoothing_spline(t, y1 + y2, lam)
        tq = np.linspace(t[0], t[-1], 31)
        assert np.allclose(s12.evaluate(tq), s1.evaluate(tq) + s2.evaluate(tq), atol=1e-12)

    def test_vector_fit_matches_columnwise(self):
        rng = np.random.default_rng(6)
        t = np.sort(rng.uniform(0, 2, 10))
        y = rng.standard_normal((10, 4))
        sp = fit_smoothing_spline(t, y, 1e-4)
        for c in range(4):
            spc = fit_smoothing_spline(t, y[:, c], 1e-4)
            assert np.allclose(sp.derivative(t)[:, c], spc.derivative(t), atol=1e-12)

    def test_exact_line_is_reproduced_with_any_lambda(self):
        t = np.linspace(0, 5, 16)
        y = 2.5 * t + 0.7
        for lam in (0.0, 1e-5, 1.0, 1e6):
            sp = fit_smoothing_spline(t, y, lam)
            assert np.allclose(sp.evaluate(t), y, atol=1e-9)
            assert np.allclose(sp.derivative(t), 2.5, atol=1e-9)

    def test_few_knots_linear_fallback(self):
        t = np.array([0.0, 1.0, 2.0])
        y = np.array([0.0, 1.0, 0.0])
        sp = fit_smoothing_spline(t, y, 1e-5)
        assert sp.linear_fallback
        # least-squares line through these points is flat at 1/3
        assert np.allclose(sp.evaluate(np.array([0.5, 1.5])), 1.0 / 3.0, atol=1e-12)
        assert np.allclose(sp.derivative(np.array([0.5])), 0.0, atol=1e-12)

    def test_single_knot(self):
        sp = fit_smoothing_spline(np.array([2.0]), np.array([5.0]), 0.0)
        assert sp.evaluate(2.0) == 5.0
        assert sp.derivative(2.0) == 0.0

    def test_out_of_range_query_rejected(self):
        sp = fit_smoothing_spline(np.linspace(0, 1, 8), np.zeros(8), 0.0)
        with pytest.raises(ValueError, match="range"):
            sp.evaluate(1.5)

    def test_duplicate_knots_rejected(self):
        with pytest.raises(ValueError, match="increasing"):
            fit_smoothing_spline(np.array([0.0, 0.0, 1.0, 2.0]), np.zeros(4), 0.0)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            fit_smoothing_spline(np.linspace(0, 1, 5), np.zeros(5), -1.0)


class TestEmpiricalMoments:
    def test_matches_direct_mean(self):
        rng = np.random.default_rng(7)
        bank = sample_bank(14, np.array([0.5]), 2, "euclidean", seed=1)
        samples = rng.standard_normal((3, 40, 2))
        ds = SnapshotDataset(
            times=np.array([0.0, 0.5, 1.0]),
            samples=samples,
            domain=DomainDescriptor("euclidean", 2),
        )
        mu = empirical_moments(ds, bank)
        for k in range(3):
            assert np.allclose(mu[k], eval_tests(bank, samples[k]).mean(axis=0), atol=1e-14)

    def test_chunking_invariance(self):
        import ngif.moments as m

        rng = np.random.default_rng(8)
        bank = sample_bank(6, np.array([0.5]), 2, "euclidean", seed=2)
        ds = SnapshotDataset(
            times=np.array([0.0]),
            samples=rng.standard_normal((1, 1000, 2)),
            domain=DomainDescriptor("euclidean", 2),
        )
        full = empirical_moments(ds, bank)
        old = m._CHUNK
        try:
            m._CHUNK = 7
            small = empirical_moments(ds, bank)
        finally:
            m._CHUNK = old
        assert np.allclose(full, small, atol=1e-12)

    def test_moment_table_against_chain_rule(self):
        # all particles ride one smooth curve c(t): the moment curve is
        # phi(c(t)) and its derivative must match grad phi . c'(t)
        bank = sample_bank(10, np.array([0.8]), 2, "euclidean", seed=3)
        times = np.linspace(0.0, 1.0, 81)
        curve = np.stack([np.cos(times), np.sin(2 * times)], axis=1)
        samples = np.repeat(curve[:, None, :], 5, axis=1)
        ds = SnapshotDataset(
            times=times, samples=samples, domain=DomainDescriptor("euclidean", 2)
        )
        table = precompute_moment_table(ds, bank, spline_lambda=1e-9)
        vel = np.stack([-np.sin(times), 2 * np.cos(2 * times)], axis=1)
        from ngif.testbank import grad_tests

        expected = np.einsum("kmd,kd->km", grad_tests(bank, curve), vel)
        err = np.abs(table.mu_dot - expected)
        # natural boundary conditions bias the derivative near the ends,
        # decaying geometrically inward; away from them the pipeline is sharp
        assert err[10:-10].max() < 1e-5
        assert err[3:-3].max() < 2e-3

    def test_laplacian_moments_identity(self):
        rng = np.random.default_rng(9)
        bank = sample_bank(8, np.array([0.5]), 2, "euclidean", seed=4)
        ds = SnapshotDataset(
            times=np.linspace(0, 1, 5),
            samples=rng.standard_normal((5, 30, 2)),
            domain=DomainDescriptor("euclidean", 2),
        )
        table = precompute_moment_table(ds, bank)
        sq = np.sum(bank.frequencies**2, axis=1)
        assert np.allclose(table.lap[:, 0::2], -sq * table.mu[:, 0::2], atol=1e-12)
        assert np.allclose(table.lap[:, 1::2], -sq * table.mu[:, 1::2], atol=1e-12)

    def test_dim_mismatch_rejected(self):
        bank = sample_bank(4, np.array([0.5]), 3, "euclidean", seed=5)
        ds = SnapshotDataset(
            times=np.array([0.0]),
            samples=np.zeros((1, 4, 2)),
            domain=DomainDescriptor("euclidean", 2),
        )
        with pytest.raises(ValueError, match="dim"):
            empirical_moments(ds, bank)

import numpy as np
import pytest
from scipy import optimize, stats

from bayesupdate.basis import gauss_hermite_rule
from bayesupdate.errors import EvidenceError
from bayesupdate.filters import assemble_z, spkf_update
from bayesupdate.models import (
    Lorenz84State,
    bayes_oracle_1d,
    cubic_model,
    diffusion1d_model,
    gaussian,
    gaussian_prior,
    identity_model,
    lorenz84_integrate,
    lorenz84_rhs,
    lorenz84_step,
)
from bayesupdate.rv import covariance, mean
from bayesupdate.surrogate import fit_projection
from bayesupdate.basis import hermite_basis

# 30-digit quadrature of N(0,1) prior x N(y; p^3, 1) at y = 1
CUBIC_ORACLE_MEAN = 0.262748549087103327611541071538781
CUBIC_ORACLE_VAR = 0.360747905003257791569247929428876


class TestIdentity:
    def test_observe(self, rng):
        m = identity_model(gaussian_prior([0.0, 0.0], 1.0), 0.1)
        p = rng.standard_normal(2)
        np.testing.assert_array_equal(m.forward.predict(p), p)

    def test_single_update_conjugate(self):
        m = identity_model(gaussian_prior(1.0, 2.0), 0.5)
        x = m.prior
        z = assemble_z(fit_projection(m.forward, x, gauss_hermite_rule(1, 2), hermite_basis(1, 1)), m.noise_pce(1))
        xa = spkf_update(x, z, [2.0])
        prec = 1 / 4 + 1 / 0.25
        assert mean(xa)[0] == pytest.approx((1 / 4 + 2.0 / 0.25) / prec, abs=1e-12)
        assert covariance(xa)[0, 0] == pytest.approx(1 / prec, abs=1e-12)

    def test_ten_updates_recursion(self):
        m = identity_model(gaussian_prior(0.0, 1.5), 0.7)
        x = m.prior
        for k in range(1, 11):
            z = assemble_z(x, m.noise_pce(x.germ_stop))
            x = spkf_update(x, z, [0.1 * k])
            expect = 1.5**2 * 0.7**2 / (0.7**2 + k * 1.5**2)
            assert covariance(x)[0, 0] == pytest.approx(expect, abs=1e-8)

    def test_measure_is_seeded(self):
        m = identity_model(gaussian_prior(0.0, 1.0), 1.0, truth=[0.3])
        a = m.measure(np.random.default_rng(4))
        b = m.measure(np.random.default_rng(4))
        np.testing.assert_array_equal(a, b)

    def test_residual_contract(self, rng):
        m = identity_model(gaussian_prior([0.0, 0.0], 1.0), 0.1)
        p = rng.standard_normal(2)
        u = m.forward.solve(p)
        assert np.abs(m.forward.residual(u, p)).max() == 0.0


class TestCubic:
    def test_observe(self):
        m = cubic_model()
        assert m.forward.predict([2.0])[0] == 8.0
        assert m.forward.predict([0.0])[0] == 0.0
        assert np.isfinite(m.observe_truth()).all()

    def test_oracle_reference_value(self):
        res = bayes_oracle_1d(stats.norm(0, 1), lambda p: np.asarray(p) ** 3, 1.0, 1.0, np.linspace(-8, 8, 801))
        assert res.mean == pytest.approx(CUBIC_ORACLE_MEAN, rel=1e-8)
        assert res.variance == pytest.approx(CUBIC_ORACLE_VAR, rel=1e-8)

    def test_lean_density_agrees(self):
        a = bayes_oracle_1d(stats.norm(0.5, 2.0), lambda p: np.asarray(p) ** 3, 1.0, 1.0, np.linspace(-8, 9, 801))
        b = bayes_oracle_1d(gaussian(0.5, 2.0), lambda p: np.asarray(p) ** 3, 1.0, 1.0, np.linspace(-8, 9, 801))
        assert a.mean == pytest.approx(b.mean, rel=1e-12)


class TestOracle:
    def test_conjugate(self):
        res = bayes_oracle_1d(stats.norm(1.0, 2.0), lambda p: p, 0.5, [2.0, 2.4], np.linspace(-10, 12, 801))
        prec = 1 / 4 + 2 / 0.25
        assert res.mean == pytest.approx((1 / 4 + 4.4 / 0.25) / prec, rel=1e-10)
        assert res.variance == pytest.approx(1 / prec, rel=1e-8)
        grid = np.linspace(-10, 12, 801)
        assert np.trapezoid(res.pdf, grid) == pytest.approx(1.0, abs=1e-6)

    def test_symmetry(self):
        res = bayes_oracle_1d(stats.norm(0, 1), lambda p: np.asarray(p) ** 3, 1.0, 0.0, np.linspace(-8, 8, 801))
        assert abs(res.mean) <= 1e-12

    def test_cube_root(self):
        res = bayes_oracle_1d(stats.norm(0, 30), lambda p: np.asarray(p) ** 3, 1e-3, 5.0, np.linspace(-5, 5, 2001))
        assert res.mean == pytest.approx(5.0 ** (1 / 3), rel=1e-5)

    def test_vanishing_evidence(self):
        with pytest.raises(EvidenceError):
            bayes_oracle_1d(stats.norm(0, 1), lambda p: p, 1e-3, 100.0, np.linspace(-5, 5, 101))


def lorenz_fixed_point():
    return optimize.fsolve(lambda v: lorenz84_rhs(v), [1.0, 0.1, 0.1], xtol=1e-14)


class TestLorenz:
    def test_equilibrium(self):
        v = lorenz_fixed_point()
        assert np.abs(lorenz84_rhs(v)).max() <= 1e-12
        s = lorenz84_step(Lorenz84State(*v), 0.01)
        assert np.abs(s.vector - v).max() <= 1e-10
        assert s.time == pytest.approx(0.01)

    def test_richardson_ratio(self):
        v0 = np.array([1.2, 0.5, -0.4])
        ref = lorenz84_integrate(v0, 0.1, 1e-5)
        err_h = np.linalg.norm(lorenz84_integrate(v0, 0.1, 0.05) - ref)
        err_h2 = np.linalg.norm(lorenz84_integrate(v0, 0.1, 0.025) - ref)
        assert 12.0 <= err_h / err_h2 <= 20.0

    def test_fine_step_reference(self):
        v0 = np.array([1.0, 0.0, 0.0])
        ref = lorenz84_integrate(v0, 10.0, 1e-4)
        assert np.abs(lorenz84_integrate(v0, 10.0, 1e-3) - ref).max() <= 1e-4

    def test_vectorised_states(self):
        v = np.array([[1.0, 0.5], [0.0, 0.2], [0.0, -0.3]])
        out = lorenz84_integrate(v, 1.0, 0.01)
        np.testing.assert_allclose(out[:, 1], lorenz84_integrate(v[:, 1], 1.0, 0.01), rtol=1e-14)

    def test_rejects_bad_duration(self):
        with pytest.raises(ValueError):
            lorenz84_integrate(np.ones(3), 0.015, 0.01)

    def test_non_finite(self):
        with pytest.raises(FloatingPointError), np.errstate(over="ignore", invalid="ignore"):
            lorenz84_integrate(np.array([1e200, 1e200, 1e200]), 0.02, 0.01)


class TestDiffusion:
    def test_constant_coefficient(self):
        m = diffusion1d_model(n=32)
        u = m.forward.solve(np.zeros(3))
        s = m.info["grid"]
        # central differences are exact for a quadratic solution
        assert np.abs(u - s * (1 - s) / 2).max() <= 1e-12

    def test_doubling_kappa_halves_u(self):
        m = diffusion1d_model(n=32)
        p = np.array([0.3, -0.2, 0.1])
        u1 = m.forward.solve(p)
        u2 = m.forward.solve(p + [np.log(2.0), 0.0, 0.0])
        np.testing.assert_allclose(u2, u1 / 2, rtol=1e-12)

    def test_patch_averages(self):
        m = diffusion1d_model(n=64, patches=5)
        obs = m.forward.predict(np.zeros(3))
        w = m.info["patch_width"]
        lo, hi = m.info["patch_centers"] - w / 2, m.info["patch_centers"] + w / 2
        prim = lambda s: s**2 / 4 - s**3 / 6  # noqa: E731
        exact = (prim(hi) - prim(lo)) / w
        assert np.abs(obs - exact).max() <= 1.0 / 64**2

    def test_residual_contract(self, rng):
        m = diffusion1d_model(n=16)
        p = rng.standard_normal(3) * 0.3
        u = m.forward.solve(p)
        assert np.abs(m.forward.residual(u, p)).max() <= 1e-9
        du = 1e-6 * rng.standard_normal(u.size)
        lin = m.forward.residual(u, p) + m.forward.residual_jacobian(u, p) @ du
        np.testing.assert_allclose(m.forward.residual(u + du, p), lin, atol=1e-9)

    def test_small_grid_rejected(self):
        with pytest.raises(ValueError):
            diffusion1d_model(n=4)

    def test_custom_load(self):
        m = diffusion1d_model(n=32, rhs=lambda s: np.zeros_like(s))
        assert np.abs(m.forward.solve(np.zeros(3))).max() == 0.0

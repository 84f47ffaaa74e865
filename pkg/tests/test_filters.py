import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from bayesupdate.basis import hermite_basis
from bayesupdate.errors import GermMismatchError
from bayesupdate.filters import (
    GainOperator,
    Observation,
    assemble_z,
    enkf_update,
    kalman_gain,
    pce_gain,
    posterior_covariance,
    spkf_update,
)
from bayesupdate.rv import Ensemble, PceVector, constant_pce, covariance, linear_pce, mean


def random_spd(rng, n, rank=None):
    a = rng.standard_normal((n, rank or n))
    return a @ a.T


def linear_setup(rng, m, i):
    """Prior on germ 0..m-1, observation H x + noise on germ m..m+i-1."""
    root = rng.standard_normal((m, m))
    x = linear_pce(rng.standard_normal(m), root)
    H = rng.standard_normal((i, m))
    noise = linear_pce(np.zeros(i), np.linalg.cholesky(random_spd(rng, i) + 0.1 * np.eye(i)), germ_offset=m)
    return x, assemble_z(x.transform(H), noise), H


class TestGain:
    def test_scalar(self):
        assert kalman_gain([[1.0]], [[2.0]]).K.tolist() == [[0.5]]

    def test_zero_covariance(self):
        g = kalman_gain([[0.0, 0.0]], np.zeros((2, 2)))
        assert np.all(g.K == 0) and g.pinv_rank == 0

    def test_singular_diagonal(self):
        g = kalman_gain([[1.0, 0.0]], np.diag([2.0, 0.0]))
        np.testing.assert_allclose(g.K, [[0.5, 0.0]])
        assert g.pinv_rank == 1

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            kalman_gain([[1.0, 0.0]], [[1.0, 0.5], [0.0, 1.0]])

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError, match="indefinite"):
            kalman_gain([[1.0, 0.0]], np.diag([1.0, -1.0]))

    def test_shape_check(self):
        with pytest.raises(ValueError):
            kalman_gain([[1.0]], np.eye(2))

    @given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10**6))
    def test_range_identity(self, m, i, seed):
        rng = np.random.default_rng(seed)
        rank = rng.integers(1, i + 1)
        a = rng.standard_normal((i, rank))
        C_z = a @ a.T
        C_xz = rng.standard_normal((m, rank)) @ a.T  # lives on range(C_z)
        g = kalman_gain(C_xz, C_z)
        proj = a @ np.linalg.pinv(a)
        assert np.linalg.norm(g.K @ C_z - C_xz @ proj) <= 1e-10 * max(1.0, np.linalg.norm(C_xz)) * np.linalg.cond(a) ** 2

    def test_json_round_trip(self):
        g = kalman_gain([[1.0, 2.0]], np.diag([2.0, 4.0]))
        back = GainOperator.from_dict(g.to_dict())
        np.testing.assert_array_equal(back.K, g.K)
        assert GainOperator.from_dict(__import__("json").loads(g.to_json())).pinv_rank == 2


class TestAssemble:
    def test_zero_noise(self):
        y = linear_pce([1.0], [[2.0]])
        z = assemble_z(y, constant_pce([0.0], germ_offset=1))
        np.testing.assert_allclose(z.evaluate(np.array([[0.5], [3.0]])), y.evaluate([[0.5]]))

    def test_covariances(self):
        x = linear_pce([0.0], [[1.0]])
        z = assemble_z(x, linear_pce([0.0], [[1.0]], germ_offset=1))
        assert covariance(z).tolist() == [[2.0]]
        assert covariance(x, z).tolist() == [[1.0]]

    def test_overlap_rejected(self):
        x = linear_pce([0.0], [[1.0, 1.0]])
        with pytest.raises(GermMismatchError):
            assemble_z(x, linear_pce([0.0], [[1.0]], germ_offset=1))

    def test_observation_dimension(self):
        with pytest.raises(ValueError):
            Observation([1.0, 2.0], linear_pce([0.0], [[1.0]]))


class TestSpkf:
    def test_uninformative(self, rng):
        x = PceVector(hermite_basis(1, 2), rng.standard_normal((2, 3)))
        z = constant_pce([0.3], germ_offset=1)
        xa = spkf_update(x, assemble_z(constant_pce([0.3]), z), [1.0])
        pts = rng.standard_normal((2, 5))
        np.testing.assert_allclose(xa.evaluate(pts), x.evaluate(pts), atol=1e-14)

    def test_conjugate(self):
        x = linear_pce([0.0], [[1.0]])
        z = assemble_z(x, linear_pce([0.0], [[1.0]], germ_offset=1))
        xa = spkf_update(x, z, [1.0])
        assert mean(xa)[0] == pytest.approx(0.5, abs=1e-15)
        assert covariance(xa)[0, 0] == pytest.approx(0.5, abs=1e-15)
        assert xa.germ_dim == 2

    def test_conjugate_distribution(self):
        x = linear_pce([0.0], [[1.0]])
        z = assemble_z(x, linear_pce([0.0], [[1.0]], germ_offset=1))
        xa = spkf_update(x, z, [1.0])
        draws = xa.evaluate(np.random.default_rng(11).standard_normal((2, 100_000)))[0]
        assert stats.kstest(draws, stats.norm(0.5, np.sqrt(0.5)).cdf).pvalue > 0.01

    @given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 10**6))
    def test_contraction_and_mean_identity(self, m, i, seed):
        rng = np.random.default_rng(seed)
        x, z, _ = linear_setup(rng, m, i)
        y = rng.standard_normal(i)
        g = pce_gain(x, z)
        xa = spkf_update(x, z, y, g)
        np.testing.assert_allclose(mean(xa), mean(x) + g.K @ (y - mean(z)), atol=1e-12, rtol=1e-12)
        c_xf, c_xa = covariance(x), covariance(xa)
        assert np.linalg.eigvalsh(c_xf - c_xa).min() >= -1e-10 * max(1.0, np.abs(c_xf).max())
        np.testing.assert_allclose(c_xa, posterior_covariance(c_xf, g), atol=1e-9 * max(1.0, np.abs(c_xf).max()))

    def test_repeated_updates_recursion(self):
        sigma, sigma_e = 2.0, 0.5
        x = linear_pce([0.0], [[sigma]])
        for k in range(1, 11):
            eps = linear_pce([0.0], [[sigma_e]], germ_offset=x.germ_stop)
            x = spkf_update(x, assemble_z(x, eps), [0.3])
            expect = sigma**2 * sigma_e**2 / (sigma_e**2 + k * sigma**2)
            assert covariance(x)[0, 0] == pytest.approx(expect, abs=1e-8)
            assert x.germ_dim == k + 1

    def test_normalisation_mismatch(self):
        x = linear_pce([0.0], [[1.0]])
        z = PceVector(hermite_basis(2, 1, normalized=False), [[0.0, 1.0, 1.0]])
        with pytest.raises(GermMismatchError):
            spkf_update(x, z, [0.0])

    def test_observation_size(self):
        x = linear_pce([0.0], [[1.0]])
        with pytest.raises(ValueError):
            spkf_update(x, assemble_z(x, linear_pce([0.0], [[1.0]], 1)), [0.0, 1.0])


class TestEnkf:
    def test_zero_innovation(self, rng):
        x = Ensemble(rng.standard_normal((2, 6)))
        xa = enkf_update(x, Ensemble(np.full((1, 6), 0.4)), [0.4])
        np.testing.assert_array_equal(xa.samples, x.samples)

    def test_two_members(self):
        xa = enkf_update(Ensemble([[-1.0, 1.0]]), Ensemble([[-1.0, 1.0]]), [0.0])
        np.testing.assert_allclose(xa.samples, [[0.0, 0.0]], atol=1e-15)

    def test_large_ensemble_conjugate(self):
        rng = np.random.default_rng(2)
        s = 40_000
        x = rng.standard_normal((1, s))
        z = x + rng.standard_normal((1, s))
        xa = enkf_update(Ensemble(x), Ensemble(z), [1.0])
        assert abs(xa.mean[0] - 0.5) <= 3 / np.sqrt(s)

    def test_size_checks(self):
        with pytest.raises(ValueError):
            enkf_update(Ensemble([[1.0]]), Ensemble([[1.0]]), [0.0])
        with pytest.raises(ValueError):
            enkf_update(Ensemble([[1.0, 2.0]]), Ensemble([[1.0, 2.0, 3.0]]), [0.0])

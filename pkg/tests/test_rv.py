import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bayesupdate.basis import HermiteBasis, build_index_set, hermite_basis
from bayesupdate.errors import GermMismatchError
from bayesupdate.rv import (
    Ensemble,
    ParameterTransform,
    PceVector,
    TransformComponent,
    align,
    constant_pce,
    covariance,
    draw_germ,
    ensemble_covariance,
    gaussian_regerm,
    kde_pdf,
    linear_pce,
    mean,
    sample,
    to_normalized,
    transform_forward,
    transform_inverse,
)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def random_pce(rng, dim=2, germ=2, degree=2, normalized=True, offset=0):
    b = hermite_basis(germ, degree, normalized=normalized)
    return PceVector(b, rng.standard_normal((dim, len(b))), offset)


class TestMoments:
    def test_constant_mean(self):
        assert mean(constant_pce([3.0, -1.0])).tolist() == [3.0, -1.0]

    def test_zero_mean_germ(self):
        assert mean(linear_pce([0.0], [[1.0]]))[0] == 0.0

    def test_monic_mean(self):
        v = PceVector(hermite_basis(1, 2, normalized=False), [[1.0, 2.0, 5.0]])
        assert mean(v)[0] == 1.0
        # quadrature oracle of the expansion
        x, w = np.polynomial.hermite_e.hermegauss(5)
        vals = 1.0 + 2.0 * x + 5.0 * (x**2 - 1)
        assert np.dot(w, vals) / w.sum() == pytest.approx(1.0, abs=1e-13)

    def test_constant_covariance(self):
        assert covariance(constant_pce([1.0, 2.0])).tolist() == [[0.0, 0.0], [0.0, 0.0]]

    def test_unit_variance(self):
        assert covariance(linear_pce([0.0], [[1.0]])).tolist() == [[1.0]]

    def test_disjoint_blocks_exactly_zero(self, rng):
        v = random_pce(rng, offset=0)
        w = random_pce(rng, offset=2)
        assert np.all(covariance(v, w) == 0.0)

    def test_monic_norms(self):
        v = PceVector(hermite_basis(1, 2, normalized=False), [[0.0, 1.0, 1.0]])
        assert covariance(v)[0, 0] == pytest.approx(3.0)  # 1 + 2!

    def test_mixed_normalisation_rejected(self, rng):
        with pytest.raises(GermMismatchError):
            covariance(random_pce(rng), random_pce(rng, normalized=False))

    def test_to_normalized_preserves_moments(self, rng):
        v = random_pce(rng, normalized=False)
        w = to_normalized(v)
        np.testing.assert_allclose(mean(w), mean(v), atol=1e-14)
        np.testing.assert_allclose(covariance(w), covariance(v), atol=1e-12)

    def test_monte_carlo_consistency(self):
        rng = np.random.default_rng(5)
        v = random_pce(rng, dim=2, germ=2, degree=2)
        draws = v.evaluate(rng.standard_normal((2, 100_000)))
        c = covariance(v)
        se_mean = np.sqrt(np.diag(c) / draws.shape[1])
        assert np.all(np.abs(draws.mean(axis=1) - mean(v)) <= 3 * se_mean)
        emp = np.cov(draws)
        # standard error of a sample covariance entry from fourth moments
        d = draws - draws.mean(axis=1, keepdims=True)
        se_cov = np.sqrt(np.var(d[:, None, :] * d[None, :, :], axis=2) / draws.shape[1])
        assert np.all(np.abs(emp - c) <= 3 * se_cov)

    @given(arrays(float, (3, 6), elements=finite))
    def test_covariance_symmetric_psd(self, coeffs):
        v = PceVector(hermite_basis(2, 2), coeffs)
        c = covariance(v)
        assert np.abs(c - c.T).max() <= 1e-12
        assert np.linalg.eigvalsh(c).min() >= -1e-10


class TestAlignment:
    def test_sum_over_blocks(self):
        x = linear_pce([1.0], [[2.0]], germ_offset=0)
        e = linear_pce([0.0], [[0.5]], germ_offset=1)
        z = x + e
        assert z.germ_offset == 0 and z.germ_dim == 2
        np.testing.assert_allclose(covariance(z), [[4.25]])
        np.testing.assert_allclose(covariance(x, z), [[4.0]])

    def test_align_keeps_values(self, rng):
        v = random_pce(rng, germ=1, degree=3, offset=1)
        w = random_pce(rng, germ=2, degree=1, offset=2)
        basis, (a, b), lo = align(v, w)
        pts = rng.standard_normal((4, 7))
        joint = basis.evaluate(pts[lo:lo + basis.dim])
        np.testing.assert_allclose(a @ joint.T, v.evaluate(pts), atol=1e-12)
        np.testing.assert_allclose(b @ joint.T, w.evaluate(pts), atol=1e-12)

    def test_evaluate_needs_enough_germ(self, rng):
        with pytest.raises(GermMismatchError):
            random_pce(rng, offset=2).evaluate(np.zeros((3, 1)))

    def test_lift_rejects_smaller_range(self, rng):
        with pytest.raises(GermMismatchError):
            random_pce(rng, offset=1).lift(2, 3)

    def test_transform(self, rng):
        v = random_pce(rng)
        A = np.array([[2.0, 0.0], [1.0, -1.0]])
        w = v.transform(A, [1.0, 2.0])
        np.testing.assert_allclose(mean(w), A @ mean(v) + [1.0, 2.0])
        np.testing.assert_allclose(covariance(w), A @ covariance(v) @ A.T, atol=1e-12)

    def test_json_round_trip(self, rng, tmp_path):
        v = random_pce(rng, offset=3)
        back = PceVector.from_json(v.to_json(tmp_path / "v.json"))
        np.testing.assert_array_equal(back.coeffs, v.coeffs)
        assert back.germ_offset == 3 and back.basis == v.basis
        assert PceVector.from_json(tmp_path / "v.json").basis == v.basis


class TestSampling:
    def test_constant_columns(self, rng):
        e = sample(constant_pce([2.0]), rng.standard_normal((1, 4)))
        assert np.all(e.samples == 2.0)

    def test_identity_map(self):
        e = sample(linear_pce([0.0], [[1.0]]), [[-1.0, 0.0, 2.0]])
        np.testing.assert_allclose(e.samples, [[-1.0, 0.0, 2.0]])

    def test_monic_h2(self):
        v = PceVector(hermite_basis(1, 2, normalized=False), [[0.0, 0.0, 1.0]])
        assert sample(v, [[2.0]]).samples[0, 0] == 3.0

    def test_draws_are_deterministic(self):
        a = draw_germ(np.random.default_rng(1), 2, 3)
        b = draw_germ(np.random.default_rng(1), 2, 3)
        np.testing.assert_array_equal(a, b)


class TestEnsembleCovariance:
    def test_constant(self):
        e = Ensemble(np.ones((2, 5)))
        assert np.all(ensemble_covariance(e, e) == 0.0)

    def test_two_points(self):
        e = Ensemble([[-1.0, 1.0]])
        assert ensemble_covariance(e, e)[0, 0] == 2.0
        assert ensemble_covariance(e, Ensemble([[1.0, -1.0]]))[0, 0] == -2.0

    def test_needs_two_members(self):
        with pytest.raises(ValueError):
            ensemble_covariance(Ensemble([[1.0]]), Ensemble([[1.0]]))

    def test_csv_round_trip(self, rng, tmp_path):
        e = Ensemble(rng.standard_normal((2, 4)), names=("a", "b"))
        e.to_csv(tmp_path / "e.csv")
        back = Ensemble.from_csv(tmp_path / "e.csv")
        np.testing.assert_array_equal(back.samples, e.samples)
        assert back.names == ("a", "b")


class TestTransforms:
    def test_identity(self):
        t = ParameterTransform.build(["identity"])
        assert transform_forward(t, [1.5])[0] == 1.5

    def test_log(self):
        t = ParameterTransform.build([{"kind": "log", "a": 0.0}])
        assert transform_forward(t, [1.0])[0] == 0.0
        assert transform_inverse(t, [0.0])[0] == 1.0

    def test_logit_midpoint(self):
        t = ParameterTransform.build([{"kind": "logit", "a": 0.0, "b": 1.0}])
        assert transform_forward(t, [0.5])[0] == pytest.approx(0.0, abs=1e-15)

    def test_outside_admissible(self):
        t = ParameterTransform.build([{"kind": "log", "a": 1.0}])
        with pytest.raises(ValueError):
            transform_forward(t, [0.5])

    @pytest.mark.parametrize("kind", ["logit", "probit", "arctan"])
    def test_endpoints_map_to_infinity(self, kind):
        c = TransformComponent(kind, a=-1.0, b=2.0)
        assert c.forward(-1.0 + 1e-12) < -5 and c.forward(2.0 - 1e-12) > 5

    @pytest.mark.parametrize("spec", [
        {"kind": "identity"}, {"kind": "log", "a": -2.0, "scale": 3.0},
        {"kind": "logit", "a": -1.0, "b": 4.0}, {"kind": "probit", "a": 0.0, "b": 2.0},
        {"kind": "arctan", "a": 1.0, "b": 3.0},
    ])
    def test_round_trip(self, spec):
        c = TransformComponent(**spec)
        rng = np.random.default_rng(3)
        lo = c.a if spec["kind"] != "identity" else -10.0
        hi = c.b if spec["kind"] not in ("identity", "log") else lo + 20.0
        p = rng.uniform(lo, hi, 1000)
        p = p[c.admissible(p)]
        assert np.abs(c.inverse(c.forward(p)) - p).max() <= 1e-10

    @given(st.floats(-30, 30))
    def test_inverse_lands_in_admissible_set(self, x):
        for c in (TransformComponent("log", a=1.0), TransformComponent("arctan", a=0.0, b=1.0)):
            p = c.inverse(x)
            assert c.a <= p and (c.kind == "log" or p <= c.b)


class TestKde:
    def test_standard_normal_peak(self):
        e = Ensemble(np.random.default_rng(0).standard_normal((1, 20_000)))
        assert kde_pdf(e, [0.0])[0] == pytest.approx(1 / np.sqrt(2 * np.pi), abs=0.02)

    def test_symmetry(self):
        vals = kde_pdf(Ensemble([[-1.0, 1.0]]), [-0.7, 0.7])
        assert vals[0] == pytest.approx(vals[1], rel=1e-14)

    def test_tails(self):
        e = Ensemble(np.random.default_rng(0).standard_normal((1, 500)))
        assert np.all(kde_pdf(e, [50.0, -50.0]) < 1e-6)

    def test_zero_variance(self):
        with pytest.raises(ValueError):
            kde_pdf(Ensemble(np.ones((1, 10))), [0.0])


class TestRegerm:
    def test_moments_preserved(self, rng):
        a = rng.standard_normal((3, 3))
        cov = a @ a.T
        v = gaussian_regerm([1.0, 2.0, 3.0], cov, germ_offset=4)
        np.testing.assert_allclose(mean(v), [1.0, 2.0, 3.0])
        np.testing.assert_allclose(covariance(v), cov, atol=1e-12)
        assert v.germ_offset == 4 and v.germ_dim == 3

    def test_basis_layout(self):
        v = gaussian_regerm([0.0], [[4.0]], degree=2)
        assert v.basis == HermiteBasis(build_index_set(1, 2))
        np.testing.assert_allclose(v.coeffs, [[0.0, 2.0, 0.0]])

    def test_dict_layout(self, rng):
        data = json.loads(random_pce(rng).to_json())
        assert set(data) == {"basis", "germ_offset", "coeffs"}

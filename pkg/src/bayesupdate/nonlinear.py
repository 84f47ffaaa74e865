"""Conditional-expectation filters beyond the affine Kalman map.

The one computational device used throughout: to get ``E[Psi | z = y_obs]``
fit a polynomial map ``phi`` in ``z`` to ``Psi`` by weighted least squares over
a quadrature rule on the joint (xi, eta) germ, then evaluate ``phi(y_obs)``.
Quadrature rules here always cover global germ variables ``0 .. rule.dim``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .basis import HermiteBasis, QuadratureRule, build_index_set, gauss_hermite_rule
from .errors import EstimationError, GermMismatchError, RankDeficiencyError
from .rv import PceVector, align, covariance
from .surrogate import project_values, weighted_lstsq

log = logging.getLogger(__name__)

MAX_MAP_DEGREE = 3
CLIP_RTOL = 1e-6
GRAM_MAX_COND = 1e10

Target = Union[PceVector, np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class PolynomialMap:
    """``phi(z) = coeffs @ [prod_i u_i^e_i]_e`` with standardised input ``u = (z - center) / scale``.

    ``features`` holds the total-degree exponent rows, intercept first.  The
    standardisation only improves conditioning; the span equals that of raw
    monomials in ``z``.
    """

    degree: int
    features: np.ndarray
    coeffs: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    mse: Optional[np.ndarray] = field(default=None)

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    @property
    def output_dim(self) -> int:
        return self.coeffs.shape[0]

    def feature_matrix(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[0] != self.input_dim:
            z = z.reshape(self.input_dim, -1)
        u = (z - self.center[:, None]) / self.scale[:, None]
        out = np.ones((u.shape[1], self.features.shape[0]))
        for i in range(self.input_dim):
            powers = u[i][:, None] ** np.arange(self.degree + 1)
            out *= powers[:, self.features[:, i]]
        return out

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        vals = self.coeffs @ self.feature_matrix(z).T
        return vals[:, 0] if z.ndim <= 1 else vals

    def affine(self) -> tuple[np.ndarray, np.ndarray]:
        """``(a, B)`` with ``phi(z) = a + B z``; only for degree-1 maps."""
        if self.degree != 1:
            raise ValueError("only degree-1 maps are affine")
        lin = self.coeffs[:, 1:1 + self.input_dim]
        order = [int(np.argmax(row)) for row in self.features[1:]]
        B = np.zeros((self.output_dim, self.input_dim))
        B[:, order] = lin / self.scale[order]
        a = self.coeffs[:, 0] - B @ self.center
        return a, B

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "features": self.features.tolist(),
            "coeffs": self.coeffs.tolist(),
            "center": self.center.tolist(),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolynomialMap":
        i = int(data["input_dim"])
        return cls(int(data["degree"]), np.asarray(data["features"], dtype=np.int64).reshape(-1, i),
                   np.atleast_2d(np.asarray(data["coeffs"], dtype=float)),
                   np.asarray(data.get("center", np.zeros(i)), dtype=float),
                   np.asarray(data.get("scale", np.ones(i)), dtype=float))


def _values_at(target: Target, rule: QuadratureRule) -> np.ndarray:
    if isinstance(target, PceVector):
        if target.germ_stop > rule.dim:
            raise GermMismatchError(f"rule covers {rule.dim} germ variables, target needs {target.germ_stop}")
        return target.evaluate(rule.nodes)
    if callable(target):
        return np.atleast_2d(target(rule.nodes))
    vals = np.atleast_2d(np.asarray(target, dtype=float))
    if vals.shape[1] != rule.size:
        raise ValueError("target values must be given at every rule node")
    return vals


def fit_map_values(target_values, z_values, weights, degree: int) -> PolynomialMap:
    """Weighted least-squares polynomial fit of ``target_values (P, S)`` on ``z_values (I, S)``."""
    if degree < 1:
        raise ValueError("map degree must be >= 1")
    y = np.atleast_2d(target_values)
    zv = np.atleast_2d(z_values)
    w = np.asarray(weights, dtype=float)
    center = zv @ w / w.sum()
    spread = np.sqrt(((zv - center[:, None]) ** 2) @ w / w.sum())
    if np.any(spread <= 1e-14 * np.maximum(1.0, np.abs(center))):
        raise RankDeficiencyError("observation prediction is (nearly) constant; optimal map undetermined",
                                  np.flatnonzero(spread <= 0))
    feats = build_index_set(zv.shape[0], degree).indices
    proto = PolynomialMap(degree, feats, np.zeros((y.shape[0], len(feats))), center, spread)
    fm = proto.feature_matrix(zv)
    coeffs = weighted_lstsq(fm, y, w)
    resid = y - coeffs @ fm.T
    mse = (resid ** 2) @ w
    return replace(proto, coeffs=coeffs, mse=mse)


def fit_optimal_map(target: Target, z: Target, degree: int, rule: QuadratureRule) -> PolynomialMap:
    """Best polynomial (degree ``degree`` in z) approximation of ``E[target | z]``.

    ``target``/``z`` may be chaos expansions, value arrays at the rule nodes, or
    callables of the node array.  The fitted map's ``mse`` is the quadrature
    MMSE residual of each output.
    """
    return fit_map_values(_values_at(target, rule), _values_at(z, rule), rule.weights, degree)


def conditional_moments(targets, z: Target, y_obs, degree: int, rule: QuadratureRule) -> np.ndarray:
    """``E[target | z = y_obs]`` for target values ``(P, S)`` via the optimal map."""
    return fit_map_values(targets, _values_at(z, rule), rule.weights, degree)(np.atleast_1d(y_obs))


def pce_degree(v: PceVector) -> int:
    return int(v.basis.index_set.degree)


def default_rule(x_f: PceVector, z: PceVector, degree: int, extra: int = 0, max_nodes: int = 10**6) -> QuadratureRule:
    """Joint-germ Gauss-Hermite rule exact for the map's normal equations."""
    q = max(pce_degree(x_f), degree * pce_degree(z)) + extra
    dim = max(x_f.germ_stop, z.germ_stop)
    return gauss_hermite_rule(dim, q + 1, max_nodes=max_nodes)


@dataclass(frozen=True, eq=False)
class PosteriorRv:
    """Assimilated vector ``mean + fluctuation`` with ``mean = phi(y_obs)``."""

    mean: np.ndarray
    fluctuation: PceVector
    covariance: Optional[np.ndarray] = None
    map: Optional[PolynomialMap] = None

    def to_pce(self) -> PceVector:
        return self.fluctuation.transform(np.eye(self.fluctuation.dim), self.mean)

    @property
    def fluctuation_covariance(self) -> np.ndarray:
        return covariance(self.fluctuation)


def ce_filter_update(x_f: PceVector, z: PceVector, phi: PolynomialMap, y_obs,
                     basis: Optional[HermiteBasis] = None, rule: Optional[QuadratureRule] = None) -> PosteriorRv:
    """``x_a = x_f + phi(y_obs) - phi(z)``, stored as ``phi(y_obs)`` plus ``x_f - phi(z)``.

    Degree-1 maps are applied coefficientwise (exact, coincides with the
    spectral Kalman filter).  Otherwise ``x_f - phi(z)`` is projected onto
    ``basis`` over the joint germ (default: total degree
    ``max(deg x_f, degree * deg z)``, which represents it exactly).
    """
    y_obs = np.atleast_1d(np.asarray(y_obs, dtype=float))
    if phi.input_dim != z.dim or phi.output_dim != x_f.dim or y_obs.size != z.dim:
        raise GermMismatchError("map, prediction and forecast dimensions are inconsistent")
    mean = phi(y_obs)
    if phi.degree == 1:
        a, B = phi.affine()
        jb, (xc, zc), offset = align(x_f, z)
        coeffs = xc - B @ zc
        coeffs[:, 0] -= a
        return PosteriorRv(mean, PceVector(jb, coeffs, offset), map=phi)
    dim = max(x_f.germ_stop, z.germ_stop)
    q = max(pce_degree(x_f), phi.degree * pce_degree(z))
    if basis is None:
        basis = HermiteBasis(build_index_set(dim, q), x_f.basis.normalized)
    if rule is None:
        rule = gauss_hermite_rule(dim, basis.degree + 1)
    if basis.dim != rule.dim or rule.dim < dim:
        raise GermMismatchError("projection basis/rule must cover the joint germ")
    vals = x_f.evaluate(rule.nodes) - phi(z.evaluate(rule.nodes))
    return PosteriorRv(mean, project_values(vals, basis, rule), map=phi)


def _sym_sqrt(mat, inverse: bool = False, floor: float = 0.0) -> np.ndarray:
    lam, q = np.linalg.eigh(0.5 * (mat + mat.T))
    keep = lam > floor
    root = np.zeros_like(lam)
    root[keep] = np.sqrt(lam[keep])
    if inverse:
        root[keep] = 1.0 / root[keep]
    return (q * root) @ q.T


def _check_psd(mat, name: str) -> None:
    lam = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    if lam.size and lam.min() < -1e-10 * max(1.0, abs(lam).max()):
        raise ValueError(f"{name} is not positive semi-definite (min eigenvalue {lam.min():.3e})")


def matching_transform(current, target, rtol: float = 1e-12) -> np.ndarray:
    """``target^{1/2} current^{+1/2}``: maps a vector with covariance ``current`` to one with ``target``."""
    current = np.atleast_2d(np.asarray(current, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    _check_psd(target, "target covariance")
    scale = max(np.abs(np.linalg.eigvalsh(current)).max(), np.abs(np.linalg.eigvalsh(target)).max())
    return _sym_sqrt(target) @ _sym_sqrt(current, inverse=True, floor=rtol * scale)


def corrected_covariance(x_f: PceVector, z: PceVector, y_obs, rule: QuadratureRule, degree: int = 2) -> np.ndarray:
    """``E[x x^T | y_obs] - m m^T`` from optimal maps of ``x`` and ``x (x) x``.

    Slightly indefinite estimates are clipped to the PSD cone; a clip larger
    than ``1e-6 * trace(C_xf)`` is treated as an estimation failure.
    """
    xv = _values_at(x_f, rule)
    m = xv.shape[0]
    outer = (xv[:, None, :] * xv[None, :, :]).reshape(m * m, -1)
    moments = conditional_moments(np.vstack([xv, outer]), z, y_obs, degree, rule)
    mean = moments[:m]
    cov = moments[m:].reshape(m, m) - np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    lam, q = np.linalg.eigh(cov)
    clip = float(-lam.min()) if lam.min() < 0 else 0.0
    if clip > 0:
        log.info("corrected covariance: clipped negative eigenvalue of magnitude %.3e", clip)
        limit = CLIP_RTOL * max(np.trace(covariance(x_f)), np.finfo(float).tiny)
        if clip > limit:
            raise EstimationError(f"conditional covariance estimate is indefinite by {clip:.3e} (> {limit:.3e})")
        cov = (q * np.clip(lam, 0.0, None)) @ q.T
    return cov


def covariance_match(p: PosteriorRv, target) -> PosteriorRv:
    """Linearly transform the fluctuation so its covariance equals ``target``."""
    T = matching_transform(p.fluctuation_covariance, target)
    return PosteriorRv(p.mean, p.fluctuation.transform(T), np.asarray(target, dtype=float), p.map)


@dataclass(frozen=True, eq=False)
class GermReduction:
    """Conditionally whitened germ ``zeta = transform @ [xi; eta]``.

    ``linear_rv`` is the first-order expansion of the fluctuation in ``zeta``
    (normalized degree-1 basis); ``second_moment`` is ``E[zeta zeta^T | y_obs]``
    re-estimated with the optimal-map machinery.
    """

    transform: np.ndarray
    rank: int
    singular_values: np.ndarray
    eigenvalues: np.ndarray
    cross_moment: np.ndarray
    germ_moment: np.ndarray
    linear_rv: PceVector
    second_moment: np.ndarray


def reduce_germ(p: PosteriorRv, z: PceVector, y_obs, rule: QuadratureRule, degree: int = 2,
                rtol: float = 1e-10) -> GermReduction:
    """Compress ``[xi; eta]`` to at most ``dim(x)`` conditionally orthonormal variables.

    ``R = E[x~ g^T | y]`` and ``C = E[g g^T | y] = Q L Q^T`` are estimated by
    optimal maps.  The SVD is taken of the cross moment with the whitened germ
    ``w = L^{+1/2} Q^T g``, i.e. ``R Q L^{+1/2} = U S V^T``, and
    ``zeta = V^T L^{+1/2} Q^T g``; vanishing eigenvalues use the pseudo-inverse.
    """
    g = rule.nodes
    xt = _values_at(p.fluctuation, rule)
    zv = _values_at(z, rule)
    m, gd = xt.shape[0], g.shape[0]
    cross = (xt[:, None, :] * g[None, :, :]).reshape(m * gd, -1)
    gg = (g[:, None, :] * g[None, :, :]).reshape(gd * gd, -1)
    phi = fit_map_values(np.vstack([xt, cross, gg]), zv, rule.weights, degree)
    mom = phi(np.atleast_1d(y_obs))
    cond_mean = mom[:m]
    R = mom[m:m + m * gd].reshape(m, gd)
    C = mom[m + m * gd:].reshape(gd, gd)
    C = 0.5 * (C + C.T)
    lam, Q = np.linalg.eigh(C)
    keep = lam > rtol * max(lam.max(), 0.0)
    inv_root = np.zeros_like(lam)
    inv_root[keep] = 1.0 / np.sqrt(lam[keep])
    W = inv_root[:, None] * Q.T
    U, S, Vt = np.linalg.svd(R @ W.T, full_matrices=False)
    # singular values below rtol * max(s_max, 1) count as zero
    rank = int(np.sum(S > rtol * max(S.max(initial=0.0), 1.0))) if S.size else 0
    if rank == 0 or S.max(initial=0.0) <= 0:
        raise EstimationError("fluctuation is conditionally uncorrelated with the whole germ; nothing to reduce")
    A = Vt[:rank] @ W
    zeta = A @ g
    zz = (zeta[:, None, :] * zeta[None, :, :]).reshape(rank * rank, -1)
    second = _cond_expect(zz, zv, rule.weights, degree, y_obs).reshape(rank, rank)
    basis = HermiteBasis(build_index_set(rank, 1), True)
    coeffs = np.zeros((m, basis.cardinality))
    coeffs[:, 0] = cond_mean
    coeffs[:, 1:] = U[:, :rank] * S[:rank]
    return GermReduction(A, rank, S, lam, R, C, PceVector(basis, coeffs), 0.5 * (second + second.T))


def _cond_expect(targets, z_values, weights, degree, y_obs) -> np.ndarray:
    return fit_map_values(targets, z_values, weights, degree)(np.atleast_1d(y_obs))


def reexpansion_coefficients(p: PosteriorRv, reduction: GermReduction, basis: HermiteBasis, z: PceVector,
                             y_obs, rule: QuadratureRule, degree: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Galerkin coefficients ``X = B Phi^{-1}`` of the fluctuation in ``phi_a(zeta)``.

    ``Phi_ab = E[phi_a phi_b | y]`` and ``B[:, a] = E[x~ phi_a | y]``.
    Returns ``(X, Phi)``.
    """
    if basis.dim != reduction.rank:
        raise ValueError(f"basis over {basis.dim} variables for a {reduction.rank}-variable reduced germ")
    zeta = reduction.transform @ rule.nodes
    ph = basis.evaluate(zeta).T
    xt = _values_at(p.fluctuation, rule)
    j, m = ph.shape[0], xt.shape[0]
    pp = (ph[:, None, :] * ph[None, :, :]).reshape(j * j, -1)
    xp = (xt[:, None, :] * ph[None, :, :]).reshape(m * j, -1)
    mom = _cond_expect(np.vstack([pp, xp]), _values_at(z, rule), rule.weights, degree, y_obs)
    gram = mom[:j * j].reshape(j, j)
    gram = 0.5 * (gram + gram.T)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > GRAM_MAX_COND:
        raise EstimationError(f"conditional Gram matrix is ill-conditioned (cond={cond:.3g})")
    B = mom[j * j:].reshape(m, j)
    X = np.linalg.solve(gram, B.T).T
    return X, gram


def reexpand_posterior(p: PosteriorRv, reduction: GermReduction, basis: HermiteBasis, z: PceVector, y_obs,
                       rule: QuadratureRule, degree: int = 2, target_covariance=None) -> PceVector:
    """Posterior as a chaos expansion in the reduced germ ``zeta``.

    With ``target_covariance`` the truncated expansion is rescaled so that its
    conditional covariance ``sum_ab Phi_ab x_a x_b^T`` equals the target.
    """
    X, gram = reexpansion_coefficients(p, reduction, basis, z, y_obs, rule, degree)
    if target_covariance is not None:
        X = matching_transform(X @ gram @ X.T, target_covariance) @ X
    coeffs = X.copy()
    coeffs[:, 0] += p.mean
    return PceVector(basis, coeffs)


def expansion_covariance(X, gram) -> np.ndarray:
    """``sum_ab Phi_ab x_a x_b^T`` for coefficient columns ``X``."""
    return X @ gram @ X.T

"""Non-intrusive construction of chaos surrogates for a forward model.

Three routes are provided: interpolation at uni-solvent points, weighted
least-squares regression / quadrature projection, and a stochastic Galerkin
solve of the residual equation with Newton's method.  All of them reach the
model only through its ``solve``/``observe``/``residual`` callables.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .basis import HermiteBasis, QuadratureRule
from .errors import ConvergenceError, ModelEvaluationError, RankDeficiencyError, UnisolventError
from .rv import PceVector

log = logging.getLogger(__name__)

INTERP_WARN_COND = 1e8
INTERP_MAX_COND = 1e12
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class ForwardModel:
    """Deterministic model ``A(u, p) = f`` with observation ``y = Y(p, u)``.

    ``residual(u, p)`` returns ``f - A(u, p)`` and ``residual_jacobian(u, p)``
    its derivative with respect to ``u``.  Implementations must tolerate
    concurrent calls with distinct arguments.
    """

    solve: Callable[[np.ndarray], np.ndarray]
    observe: Callable[[np.ndarray, np.ndarray], np.ndarray]
    residual: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    residual_jacobian: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def predict(self, p) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return np.atleast_1d(self.observe(p, self.solve(p)))


@dataclass(frozen=True, eq=False)
class CollocationDesign:
    """Design points ``(L, S)``, optional probability weights and ``Psi[s, b] = psi_b(point_s)``."""

    points: np.ndarray
    weights: Optional[np.ndarray]
    psi_matrix: np.ndarray

    @property
    def size(self) -> int:
        return self.points.shape[1]


def make_design(basis: HermiteBasis, points, weights=None) -> CollocationDesign:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    w = None if weights is None else np.asarray(weights, dtype=float).ravel()
    if w is not None and w.size != pts.shape[1]:
        raise ValueError("one weight per design point required")
    return CollocationDesign(pts, w, basis.evaluate(pts))


def quadrature_design(basis: HermiteBasis, rule: QuadratureRule) -> CollocationDesign:
    return make_design(basis, rule.nodes, rule.weights)


def evaluate_model(model: ForwardModel, params: PceVector, points, germ_offset: Optional[int] = None,
                   output: str = "observe", map_fn=map) -> np.ndarray:
    """Run the model at every design point; returns ``(D, S)``.

    ``points`` covers the germ variables starting at ``germ_offset`` (default:
    the parameters' own block).  ``map_fn`` may be an executor's ``map`` since
    the node solves are independent.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    offset = params.germ_offset if germ_offset is None else germ_offset
    pvals = params.evaluate_block(pts, offset)

    def run(s):
        p = pvals[:, s]
        try:
            u = np.atleast_1d(model.solve(p))
            out = u if output == "state" else np.atleast_1d(model.observe(p, u))
        except Exception as exc:  # noqa: BLE001 - re-raised with node context
            raise ModelEvaluationError(f"model evaluation failed at node {s} (p={p}): {exc}", node=s) from exc
        if not np.all(np.isfinite(out)):
            raise ModelEvaluationError(f"non-finite model output at node {s} (p={p})", node=s)
        return np.asarray(out, dtype=float)

    return np.column_stack(list(map_fn(run, range(pts.shape[1]))))


def fit_interpolation(values, design: CollocationDesign, basis: HermiteBasis, germ_offset: int = 0) -> PceVector:
    """Solve ``Psi u_n = y_n`` for every output component (S = T required)."""
    y = np.atleast_2d(np.asarray(values, dtype=float))
    psi = design.psi_matrix
    if psi.shape[0] != psi.shape[1]:
        raise UnisolventError(f"interpolation needs S == T, got S={psi.shape[0]}, T={psi.shape[1]}")
    cond = np.linalg.cond(psi)
    if not np.isfinite(cond) or cond > INTERP_MAX_COND:
        raise UnisolventError(f"design points are not uni-solvent (cond(Psi)={cond:.3g})")
    if cond > INTERP_WARN_COND:
        warnings.warn(f"interpolation matrix has cond {cond:.3g}; regression with S > T is safer",
                      RuntimeWarning, stacklevel=2)
    coeffs = np.linalg.solve(psi, y.T).T
    return PceVector(basis, coeffs, germ_offset)


def weighted_lstsq(psi, values, weights=None) -> np.ndarray:
    """Minimise ``||W (Psi c - y)||`` per row of ``values`` via pivoted QR of ``W Psi``.

    ``weights`` are the squared weights ``w_s^2``; the normal matrix is never formed.
    Returns coefficients of shape ``(D, T)``.
    """
    psi = np.asarray(psi, dtype=float)
    y = np.atleast_2d(np.asarray(values, dtype=float))
    s, t = psi.shape
    if s < t:
        raise RankDeficiencyError(f"{s} design points for {t} basis functions", range(s, t))
    w = np.full(s, 1.0 / s) if weights is None else np.asarray(weights, dtype=float)
    sw = np.sqrt(w)
    q, r, piv = sla.qr(sw[:, None] * psi, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > RANK_RTOL * diag[0])) if diag[0] > 0 else 0
    if rank < t:
        bad = sorted(int(c) for c in piv[rank:])
        raise RankDeficiencyError(f"design matrix has rank {rank} < {t}; deficient columns {bad}", bad)
    sol = sla.solve_triangular(r, q.T @ (sw[:, None] * y.T))
    coeffs = np.empty((t, y.shape[0]))
    coeffs[piv] = sol
    return coeffs.T


def fit_regression(values, design: CollocationDesign, basis: HermiteBasis, germ_offset: int = 0) -> PceVector:
    """Weighted least-squares fit; uniform weights ``1/S`` if the design has none."""
    coeffs = weighted_lstsq(design.psi_matrix, values, design.weights)
    return PceVector(basis, coeffs, germ_offset)


def project_values(values, basis: HermiteBasis, rule: QuadratureRule, germ_offset: int = 0) -> PceVector:
    """Quadrature projection ``Phi^{-1} v`` with ``Phi = Psi^T W^2 Psi`` and ``v = Psi^T W^2 y``."""
    y = np.atleast_2d(np.asarray(values, dtype=float))
    psi = basis.evaluate(rule.nodes)
    wpsi = rule.weights[:, None] * psi
    gram = psi.T @ wpsi
    rhs = wpsi.T @ y.T
    try:
        coeffs = sla.solve(gram, rhs, assume_a="pos")
    except (sla.LinAlgError, ValueError) as exc:
        raise RankDeficiencyError("quadrature Gram matrix is singular; rule too coarse for the basis") from exc
    return PceVector(basis, coeffs.T, germ_offset)


def fit_projection(model: ForwardModel, params: PceVector, rule: QuadratureRule, basis: HermiteBasis,
                   output: str = "observe", map_fn=map) -> PceVector:
    """Project the model response onto ``basis`` using the quadrature ``rule``."""
    values = evaluate_model(model, params, rule.nodes, output=output, map_fn=map_fn)
    return project_values(values, basis, rule, params.germ_offset)


def galerkin_residual(model: ForwardModel, params: PceVector, u: PceVector, rule: QuadratureRule) -> np.ndarray:
    """Block residual ``[E[psi_a r(u(xi), p(xi))]]_a`` as an ``(N, T)`` table."""
    psi = u.basis.evaluate(rule.nodes)
    p_nodes = params.evaluate_block(rule.nodes, u.germ_offset)
    u_nodes = u.coeffs @ psi.T
    r = np.column_stack([np.atleast_1d(model.residual(u_nodes[:, s], p_nodes[:, s])) for s in range(rule.size)])
    return r @ (rule.weights[:, None] * psi)


def solve_galerkin(model: ForwardModel, params: PceVector, basis: HermiteBasis, rule: QuadratureRule,
                   tol: float = 1e-9, max_iter: int = 50, max_halvings: int = 10) -> PceVector:
    """Stochastic Galerkin solution of ``r(u(xi), p(xi)) = 0`` in ``span(basis)``.

    Newton on the ``N*T`` block system with tangent
    ``(D r)_{ab} = sum_s w_s psi_a(xi_s) J(xi_s) psi_b(xi_s)`` assembled by
    quadrature, safeguarded by step halving.  Starts from the deterministic
    solve at the mean germ.
    """
    if model.residual is None or model.residual_jacobian is None:
        raise ValueError("Galerkin solve needs residual and residual_jacobian")
    if rule.dim != basis.dim:
        raise ValueError("rule and basis dims differ")
    offset = params.germ_offset
    psi = basis.evaluate(rule.nodes)
    wpsi = rule.weights[:, None] * psi
    p_nodes = params.evaluate_block(rule.nodes, offset)
    u0 = np.atleast_1d(model.solve(params.evaluate_block(np.zeros((basis.dim, 1)), offset)[:, 0]))
    n, t = u0.size, basis.cardinality
    coeffs = np.zeros((n, t))
    coeffs[:, 0] = u0 / psi[0, 0] if basis.normalized else u0

    def block_residual(c):
        u_nodes = c @ psi.T
        r = np.column_stack([np.atleast_1d(model.residual(u_nodes[:, s], p_nodes[:, s]))
                             for s in range(rule.size)])
        return r @ wpsi, u_nodes

    res, u_nodes = block_residual(coeffs)
    norm0 = np.linalg.norm(res)
    history = [norm0]
    target = tol * max(norm0, 1.0)
    for it in range(max_iter):
        if history[-1] <= target:
            break
        jac = np.stack([np.atleast_2d(model.residual_jacobian(u_nodes[:, s], p_nodes[:, s]))
                        for s in range(rule.size)])
        # rows/cols ordered (a, n) so that block (a, b) is N x N
        tangent = np.einsum("sa,sb,snm->anbm", wpsi, psi, jac).reshape(t * n, t * n)
        rvec = res.T.ravel()
        step = -np.linalg.solve(tangent, rvec).reshape(t, n).T
        lam = 1.0
        for _ in range(max_halvings + 1):
            trial = coeffs + lam * step
            new_res, new_nodes = block_residual(trial)
            if np.linalg.norm(new_res) < (1 - 1e-4 * lam) * history[-1]:
                break
            lam *= 0.5
        coeffs, res, u_nodes = trial, new_res, new_nodes
        history.append(np.linalg.norm(res))
        log.debug("galerkin newton it=%d |r|=%.3e step=%.3g", it, history[-1], lam)
    if history[-1] > target:
        raise ConvergenceError(f"Newton did not converge in {max_iter} iterations (|r|={history[-1]:.3e})",
                               history)
    return PceVector(basis, coeffs, offset)

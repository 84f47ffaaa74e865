"""Gauss-Markov-Kalman updates on chaos expansions (SPKF) and ensembles (EnKF).

Both apply ``x_a = x_f + K (y_obs - z)`` with ``K = C_xz pinv(C_z)``; the
spectral variant does it coefficient by coefficient, so the assimilated
vector lives on the joint (xi, eta) germ.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import GermMismatchError
from .rv import Ensemble, PceVector, align, covariance, ensemble_covariance

PINV_RTOL = 1e-12
SYM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GainOperator:
    K: np.ndarray
    C_xz: np.ndarray
    C_z: np.ndarray
    pinv_rank: int

    def to_dict(self) -> dict:
        return {"K": self.K.tolist(), "C_xz": self.C_xz.tolist(), "C_z": self.C_z.tolist(),
                "pinv_rank": self.pinv_rank}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "GainOperator":
        return cls(np.atleast_2d(data["K"]), np.atleast_2d(data["C_xz"]), np.atleast_2d(data["C_z"]),
                   int(data["pinv_rank"]))


@dataclass(frozen=True, eq=False)
class Observation:
    """Measured value plus the chaos model of its additive error."""

    value: np.ndarray
    error_model: PceVector

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.value, dtype=float))
        if v.size != self.error_model.dim:
            raise ValueError("error model dimension differs from the observation")
        object.__setattr__(self, "value", v)


def kalman_gain(C_xz, C_z, rel_tol: float = PINV_RTOL) -> GainOperator:
    """``K = C_xz pinv(C_z)``; eigenvalues of C_z below ``rel_tol * max`` are dropped."""
    C_xz = np.atleast_2d(np.asarray(C_xz, dtype=float))
    C_z = np.atleast_2d(np.asarray(C_z, dtype=float))
    if C_z.shape[0] != C_z.shape[1] or C_xz.shape[1] != C_z.shape[0]:
        raise ValueError("incompatible covariance shapes")
    scale = max(np.abs(C_z).max(), np.finfo(float).tiny)
    if np.abs(C_z - C_z.T).max() > SYM_TOL * scale:
        raise ValueError("C_z is not symmetric")
    lam, q = np.linalg.eigh(0.5 * (C_z + C_z.T))
    top = lam.max() if lam.size else 0.0
    if lam.min() < -SYM_TOL * max(top, 1.0):
        raise ValueError(f"C_z is indefinite (min eigenvalue {lam.min():.3e})")
    keep = lam > rel_tol * top if top > 0 else np.zeros_like(lam, dtype=bool)
    inv = np.zeros_like(lam)
    inv[keep] = 1.0 / lam[keep]
    K = C_xz @ (q * inv) @ q.T
    return GainOperator(K, C_xz, C_z, int(keep.sum()))


def assemble_z(y: PceVector, eps: PceVector) -> PceVector:
    """``z = y + eps`` for ``y`` on the xi block and ``eps`` on a disjoint eta block."""
    if y.dim != eps.dim:
        raise ValueError("prediction and error have different dimensions")
    if y.germ_offset < eps.germ_stop and eps.germ_offset < y.germ_stop:
        raise GermMismatchError("prediction and measurement error share germ variables")
    return y + eps


def pce_gain(x_f: PceVector, z: PceVector, rel_tol: float = PINV_RTOL) -> GainOperator:
    return kalman_gain(covariance(x_f, z), covariance(z, z), rel_tol)


def spkf_update(x_f: PceVector, z: PceVector, y_obs, gain: GainOperator | None = None) -> PceVector:
    """Spectral Kalman filter: ``x_a = x_f + K (y_obs - z)`` on the joint germ.

    The constant column gains ``K (y_obs - mean(z))``, every other column ``-K z_a``.
    """
    y_obs = np.atleast_1d(np.asarray(y_obs, dtype=float))
    if y_obs.size != z.dim:
        raise ValueError("observation and prediction dimensions differ")
    if x_f.basis.normalized != z.basis.normalized:
        raise GermMismatchError("x_f and z use different basis normalisations")
    gain = gain or pce_gain(x_f, z)
    basis, (xc, zc), offset = align(x_f, z)
    coeffs = xc - gain.K @ zc
    coeffs[:, 0] += gain.K @ y_obs
    return PceVector(basis, coeffs, offset)


def enkf_update(x_f: Ensemble, z: Ensemble, y_obs) -> Ensemble:
    """Ensemble Kalman filter with perturbed predictions ``z(omega_s) = Y(x_s) + eps_s``."""
    if x_f.size != z.size:
        raise ValueError("forecast and prediction ensembles differ in size")
    if x_f.size < 2:
        raise ValueError("EnKF needs at least two members")
    y_obs = np.atleast_1d(np.asarray(y_obs, dtype=float))
    gain = kalman_gain(ensemble_covariance(x_f, z), ensemble_covariance(z, z))
    return Ensemble(x_f.samples + gain.K @ (y_obs[:, None] - z.samples), x_f.germ_samples, x_f.names)


def posterior_covariance(C_xf, gain: GainOperator) -> np.ndarray:
    """``C_xa = C_xf - K C_xz^T``."""
    return np.asarray(C_xf) - gain.K @ gain.C_xz.T

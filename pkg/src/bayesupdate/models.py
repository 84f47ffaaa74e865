"""Desk-scale test problems and a brute-force 1D Bayes oracle."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import legendre
from scipy import integrate, optimize
from scipy.linalg import solve_banded

from .errors import EvidenceError
from .rv import PceVector, linear_pce
from .surrogate import ForwardModel


@dataclass(frozen=True, eq=False)
class TestModel:
    """A forward model with a synthetic truth for virtual experiments."""

    __test__ = False  # not a pytest class

    name: str
    param_dim: int
    obs_dim: int
    forward: ForwardModel
    true_parameters: np.ndarray
    noise_std: np.ndarray
    prior: Optional[PceVector] = None
    info: dict = field(default_factory=dict)

    def observe_truth(self) -> np.ndarray:
        p = self.true_parameters
        return self.forward.predict(p)

    def measure(self, rng: np.random.Generator) -> np.ndarray:
        """One noisy measurement of the truth."""
        return self.observe_truth() + self.noise_std * rng.standard_normal(self.obs_dim)

    def noise_pce(self, germ_offset: int) -> PceVector:
        """Additive Gaussian error on its own germ block starting at ``germ_offset``."""
        return linear_pce(np.zeros(self.obs_dim), np.diag(self.noise_std), germ_offset)

    def with_truth(self, truth) -> "TestModel":
        return replace(self, true_parameters=np.atleast_1d(np.asarray(truth, dtype=float)))


def _as_vec(v, n) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return np.full(n, float(v[0])) if v.size == 1 and n > 1 else v


def gaussian_prior(mean, std) -> PceVector:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return linear_pce(mean, np.diag(_as_vec(std, mean.size)))


def _identity_forward(dim: int) -> ForwardModel:
    eye = np.eye(dim)
    return ForwardModel(
        solve=lambda p: np.array(p, dtype=float),
        observe=lambda p, u: np.array(u, dtype=float),
        residual=lambda u, p: np.asarray(p) - np.asarray(u),
        residual_jacobian=lambda u, p: -eye,
    )


def identity_model(prior: PceVector, noise_std, truth=None) -> TestModel:
    """Direct noisy observation of the parameters."""
    m = prior.dim
    truth = prior.mean if truth is None else truth
    return TestModel("identity", m, m, _identity_forward(m), np.atleast_1d(np.asarray(truth, dtype=float)),
                     _as_vec(noise_std, m), prior)


def cubic_model(noise_std=1.0, prior: Optional[PceVector] = None, truth=None) -> TestModel:
    """Scalar parameter observed through its third power plus Gaussian error."""
    prior = gaussian_prior(0.0, 1.0) if prior is None else prior
    fwd = ForwardModel(
        solve=lambda p: np.array(p, dtype=float),
        observe=lambda p, u: np.asarray(u, dtype=float) ** 3,
        residual=lambda u, p: np.asarray(p) - np.asarray(u),
        residual_jacobian=lambda u, p: -np.eye(1),
    )
    truth = prior.mean if truth is None else truth
    return TestModel("cubic", 1, 1, fwd, np.atleast_1d(np.asarray(truth, dtype=float)), _as_vec(noise_std, 1), prior)


# --- Lorenz-84 -------------------------------------------------------------------

LORENZ84_DEFAULTS = {"a": 0.25, "b": 4.0, "F": 8.0, "G": 1.0}


@dataclass(frozen=True)
class Lorenz84State:
    x: float
    y: float
    z: float
    a: float = 0.25
    b: float = 4.0
    F: float = 8.0
    G: float = 1.0
    time: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def params(self) -> tuple[float, float, float, float]:
        return self.a, self.b, self.F, self.G


LORENZ84_DEFAULTS = {"a": 0.25, "b": 4.0, "F": 8.0, "G": 1.0}


def lorenz84_rhs(v, a=0.25, b=4.0, F=8.0, G=1.0) -> np.ndarray:
    """Time derivative for states ``v`` of shape ``(3, ...)``."""
    x, y, z = v
    return np.stack([
        -y * y - z * z - a * x + a * F,
        x * y - b * x * z - y + G,
        b * x * y + x * z - z,
    ])


def rk4_step(v, h: float, params=(0.25, 4.0, 8.0, 1.0)) -> np.ndarray:
    k1 = lorenz84_rhs(v, *params)
    k2 = lorenz84_rhs(v + 0.5 * h * k1, *params)
    k3 = lorenz84_rhs(v + 0.5 * h * k2, *params)
    k4 = lorenz84_rhs(v + h * k3, *params)
    return v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def lorenz84_step(state: Lorenz84State, h: float) -> Lorenz84State:
    """One classical RK4 step of size ``h`` days."""
    if not h > 0:
        raise ValueError("step size must be positive")
    new = rk4_step(state.vector, h, state.params)
    if not np.all(np.isfinite(new)):
        raise FloatingPointError(f"non-finite Lorenz-84 state at t={state.time + h}")
    return replace(state, x=float(new[0]), y=float(new[1]), z=float(new[2]), time=state.time + h)


def lorenz84_integrate(v, duration: float, h: float = 0.01, params=(0.25, 4.0, 8.0, 1.0)) -> np.ndarray:
    """Integrate one or many states ``(3, ...)`` over ``duration`` days with fixed RK4 steps."""
    steps = int(round(duration / h))
    if steps < 1 or abs(steps * h - duration) > 1e-9 * max(1.0, duration):
        raise ValueError("duration must be a positive multiple of the step size")
    v = np.asarray(v, dtype=float)
    for _ in range(steps):
        v = rk4_step(v, h, params)
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("non-finite Lorenz-84 state")
    return v


# --- 1D diffusion ----------------------------------------------------------------

def _patch_matrix(n: int, centers, width: float, samples: int = 201) -> np.ndarray:
    """Rows average the piecewise-linear FD solution (zero boundary values) over each patch."""
    grid = np.linspace(0.0, 1.0, n + 1)
    rows = []
    for c in centers:
        t = np.linspace(c - width / 2, c + width / 2, samples)
        tw = np.full(samples, 1.0)
        tw[[0, -1]] = 0.5
        tw /= tw.sum()
        row = np.zeros(n + 1)
        k = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, n - 1)
        frac = (t - grid[k]) * n
        np.add.at(row, k, tw * (1 - frac))
        np.add.at(row, k + 1, tw * frac)
        rows.append(row[1:-1])
    return np.array(rows)


def diffusion1d_model(n: int = 64, param_dim: int = 3, patches: int = 5, rhs: Optional[Callable] = None,
                      noise_std=1e-3, prior: Optional[PceVector] = None, truth=None,
                      patch_width: float = 0.1) -> TestModel:
    """``-(kappa u')' = f`` on [0, 1], ``u(0) = u(1) = 0``, central differences.

    ``kappa(s) = exp(sum_m x_m P_m(2s - 1))`` with Legendre polynomials ``P_m``;
    observations are ``u`` averaged over ``patches`` equally spaced patches.
    """
    if n < 8:
        raise ValueError("need at least 8 grid intervals")
    h = 1.0 / n
    s_mid = (np.arange(n) + 0.5) * h
    s_in = np.arange(1, n) * h
    leg = np.stack([legendre.legval(2 * s_mid - 1, np.eye(param_dim)[m]) for m in range(param_dim)])
    f = np.ones(n - 1) if rhs is None else np.asarray(rhs(s_in), dtype=float)
    centers = (np.arange(patches) + 1) / (patches + 1)
    pmat = _patch_matrix(n, centers, patch_width)

    def kappa(p):
        return np.exp(np.asarray(p, dtype=float) @ leg)

    def banded(p):
        k = kappa(p)
        if not np.all(k > 0):
            raise ValueError("diffusion coefficient must be positive")
        ab = np.zeros((3, n - 1))
        ab[1] = (k[:-1] + k[1:]) / h**2
        ab[0, 1:] = -k[1:-1] / h**2
        ab[2, :-1] = -k[1:-1] / h**2
        return ab

    def dense(p):
        ab = banded(p)
        return np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[2, :-1], -1)

    def solve(p):
        return solve_banded((1, 1), banded(p), f)

    fwd = ForwardModel(
        solve=solve,
        observe=lambda p, u: pmat @ u,
        residual=lambda u, p: f - dense(p) @ u,
        residual_jacobian=lambda u, p: -dense(p),
    )
    prior = gaussian_prior(np.zeros(param_dim), 0.5) if prior is None else prior
    truth = prior.mean if truth is None else truth
    info = {"grid": s_in, "patch_centers": centers, "patch_width": patch_width, "kappa": kappa,
            "patch_matrix": pmat}
    return TestModel("diffusion1d", param_dim, patches, fwd, np.atleast_1d(np.asarray(truth, dtype=float)),
                     _as_vec(noise_std, patches), prior, info)


# --- Bayes oracle ----------------------------------------------------------------

LOG_EVIDENCE_FLOOR = -700.0


@dataclass(frozen=True, eq=False)
class OracleResult:
    mean: float
    variance: float
    pdf: np.ndarray
    log_evidence: float


def bayes_oracle_1d(prior, observe: Callable, noise_std: float, y_obs, grid) -> OracleResult:
    """Posterior of a scalar parameter by adaptive quadrature of prior times likelihood.

    ``prior`` is a scipy distribution (or anything with ``logpdf``/``pdf``),
    ``observe`` maps a scalar parameter to the predicted scalar measurement,
    and ``y_obs`` may hold several independent measurements.
    """
    ys = np.atleast_1d(np.asarray(y_obs, dtype=float))
    grid = np.asarray(grid, dtype=float)
    logprior = prior.logpdf if hasattr(prior, "logpdf") else (lambda p: np.log(prior.pdf(p)))

    def logpost(p):
        pred = np.asarray(observe(p), dtype=float)
        ll = -0.5 * np.sum(((ys[:, None] - np.atleast_1d(pred)[None, :]) / noise_std) ** 2, axis=0)
        ll -= ys.size * np.log(noise_std * np.sqrt(2 * np.pi))
        return logprior(np.atleast_1d(p)) + ll

    lg = logpost(grid)
    best = int(np.nanargmax(np.where(np.isfinite(lg), lg, -np.inf)))
    if not np.isfinite(lg[best]):
        raise EvidenceError("posterior density vanishes on the whole grid")
    lo, hi = grid[max(best - 1, 0)], grid[min(best + 1, grid.size - 1)]
    peak = optimize.minimize_scalar(lambda p: -logpost(p)[0], bounds=(lo, hi), method="bounded",
                                    options={"xatol": 1e-12}).x if hi > lo else grid[best]
    shift = max(float(logpost(peak)[0]), float(lg[best]))

    def dens(p):
        with np.errstate(over="ignore"):
            return float(np.exp(logpost(p)[0] - shift))

    inner = np.unique(np.concatenate([grid[:: max(1, grid.size // 80)], [grid[-1], peak]]))
    pts = inner[(inner > grid[0]) & (inner < grid[-1])]

    def total(fn):
        val = integrate.quad(fn, grid[0], grid[-1], points=pts, epsabs=0, epsrel=1e-12, limit=500)[0]
        val += integrate.quad(fn, -np.inf, grid[0], epsabs=0, epsrel=1e-12, limit=200)[0]
        val += integrate.quad(fn, grid[-1], np.inf, epsabs=0, epsrel=1e-12, limit=200)[0]
        return val

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        z = total(dens)
    if not np.isfinite(z):
        raise EvidenceError("posterior mass escapes the grid: observation is incompatible with the prior")
    if not z > 0:
        raise EvidenceError("posterior normalising constant is zero")
    log_z = shift + np.log(z)
    if log_z < LOG_EVIDENCE_FLOOR:
        raise EvidenceError(f"evidence exp({log_z:.1f}) vanishes: observation is incompatible with the prior")
    mean = total(lambda p: p * dens(p)) / z
    var = total(lambda p: (p - mean) ** 2 * dens(p)) / z
    pdf = np.exp(lg - shift) / z
    return OracleResult(float(mean), float(var), pdf, float(log_z))


@dataclass(frozen=True)
class GaussianDensity:
    """Scalar normal density; a lean stand-in for ``scipy.stats.norm`` inside quadrature loops."""

    mean: float
    std: float

    def logpdf(self, p):
        r = (np.asarray(p, dtype=float) - self.mean) / self.std
        return -0.5 * r * r - np.log(self.std * np.sqrt(2 * np.pi))

    def pdf(self, p):
        return np.exp(self.logpdf(p))


def gaussian(mean: float, std: float) -> GaussianDensity:
    return GaussianDensity(float(mean), float(std))

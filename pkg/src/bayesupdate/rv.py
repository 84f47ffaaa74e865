"""Random vectors as chaos expansions or ensembles, plus parameter transforms.

All chaos expansions live on one global standard-Gaussian germ.  A
:class:`PceVector` occupies the variables ``germ_offset .. germ_offset + basis.dim``
of that germ; expansions on disjoint blocks are independent, which makes the
cross terms of e.g. ``C_z = C_y + C_eps`` vanish structurally.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special, stats

from .basis import HermiteBasis, MultiIndexSet, build_index_set
from .errors import GermMismatchError


@dataclass(frozen=True, eq=False)
class PceVector:
    """``D``-dimensional random vector ``sum_a coeffs[:, a] psi_a(germ block)``."""

    basis: HermiteBasis
    coeffs: np.ndarray
    germ_offset: int = 0

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if c.shape[1] != self.basis.cardinality:
            raise ValueError(f"{c.shape[1]} coefficient columns for a basis of size {self.basis.cardinality}")
        if self.germ_offset < 0:
            raise ValueError("germ_offset must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    @property
    def germ_dim(self) -> int:
        return self.basis.dim

    @property
    def germ_stop(self) -> int:
        return self.germ_offset + self.basis.dim

    @property
    def mean(self) -> np.ndarray:
        return mean(self)

    def evaluate(self, germ_points) -> np.ndarray:
        """Values ``(D, S)`` at global germ points ``(L_total, S)``."""
        pts = np.atleast_2d(np.asarray(germ_points, dtype=float))
        if pts.shape[0] < self.germ_stop:
            raise GermMismatchError(f"germ points cover {pts.shape[0]} variables, need {self.germ_stop}")
        psi = self.basis.evaluate(pts[self.germ_offset:self.germ_stop])
        return self.coeffs @ psi.T

    def evaluate_block(self, points, offset: int | None = None) -> np.ndarray:
        """Values at points ``(L, S)`` for germ variables ``offset .. offset + L`` (default: own block)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lifted = self.lift(self.germ_offset if offset is None else offset, pts.shape[0])
        return lifted.coeffs @ lifted.basis.evaluate(pts).T

    def lift(self, offset: int, dim: int, index_set: MultiIndexSet | None = None) -> "PceVector":
        """Re-express on germ variables ``offset .. offset + dim`` (a superset of the own block).

        With ``index_set`` given (it must contain the lifted own indices) the
        coefficient table is scattered into that ordering.
        """
        if self.germ_offset < offset or self.germ_stop > offset + dim:
            raise GermMismatchError("target germ range does not cover this vector")
        lifted = self.basis.index_set.lift(self.germ_offset - offset, dim)
        if index_set is None:
            return PceVector(self.basis.with_index_set(lifted), self.coeffs, offset)
        pos = index_set.positions
        try:
            cols = [pos[ix] for ix in lifted]
        except KeyError as exc:
            raise GermMismatchError("target index set misses a coefficient") from exc
        coeffs = np.zeros((self.dim, len(index_set)))
        coeffs[:, cols] = self.coeffs
        return PceVector(self.basis.with_index_set(index_set), coeffs, offset)

    def __add__(self, other: "PceVector") -> "PceVector":
        basis, (a, b), offset = align(self, other)
        return PceVector(basis, a + b, offset)

    def __sub__(self, other: "PceVector") -> "PceVector":
        basis, (a, b), offset = align(self, other)
        return PceVector(basis, a - b, offset)

    def transform(self, matrix, shift=None) -> "PceVector":
        """Affine image ``matrix @ v + shift``."""
        coeffs = np.atleast_2d(matrix) @ self.coeffs
        if shift is not None:
            coeffs[:, 0] += np.asarray(shift, dtype=float)
        return PceVector(self.basis, coeffs, self.germ_offset)

    def to_dict(self) -> dict:
        return {"basis": self.basis.to_dict(), "germ_offset": self.germ_offset, "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PceVector":
        return cls(HermiteBasis.from_dict(data["basis"]), np.asarray(data["coeffs"], dtype=float),
                   int(data.get("germ_offset", 0)))

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "PceVector":
        p = Path(text_or_path) if not str(text_or_path).lstrip().startswith("{") else None
        return cls.from_dict(json.loads(p.read_text() if p else text_or_path))


def constant_pce(value, germ_dim: int = 1, germ_offset: int = 0, normalized: bool = True) -> PceVector:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    basis = HermiteBasis(build_index_set(germ_dim, 0), normalized)
    return PceVector(basis, value[:, None], germ_offset)


def linear_pce(mean, matrix, germ_offset: int = 0, degree: int = 1) -> PceVector:
    """Gaussian vector ``mean + matrix @ g`` with ``g`` of length ``matrix.shape[1]``.

    ``degree`` only pads the (normalized, total-degree) basis with zero
    higher-order coefficients.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    matrix = np.asarray(matrix, dtype=float).reshape(mean.size, -1)
    basis = HermiteBasis(build_index_set(matrix.shape[1], max(degree, 1)), True)
    coeffs = np.zeros((mean.size, basis.cardinality))
    coeffs[:, 0] = mean
    coeffs[:, 1:1 + matrix.shape[1]] = matrix
    return PceVector(basis, coeffs, germ_offset)


def to_normalized(v: PceVector) -> PceVector:
    if v.basis.normalized:
        return v
    scale = np.sqrt(v.basis.norms_sq)
    return PceVector(HermiteBasis(v.basis.index_set, True), v.coeffs * scale, v.germ_offset)


def align(*vectors: PceVector) -> tuple[HermiteBasis, list[np.ndarray], int]:
    """Common basis (germ range union, index union) and coefficient tables for each vector."""
    norm = {v.basis.normalized for v in vectors}
    if len(norm) > 1:
        vectors = tuple(to_normalized(v) for v in vectors)
    lo = min(v.germ_offset for v in vectors)
    hi = max(v.germ_stop for v in vectors)
    lifted = [v.basis.index_set.lift(v.germ_offset - lo, hi - lo) for v in vectors]
    union = lifted[0]
    for s in lifted[1:]:
        if s != union:
            union = union.union(s)
    tables = [v.lift(lo, hi - lo, union).coeffs for v in vectors]
    return HermiteBasis(union, vectors[0].basis.normalized), tables, lo


def mean(v: PceVector) -> np.ndarray:
    """Exact mean; ``E[psi_a] = 0`` for every non-constant Hermite term."""
    return v.coeffs[:, 0].copy()


def covariance(v: PceVector, w: PceVector | None = None) -> np.ndarray:
    """Exact cross-covariance ``sum_{a,b} E[psi_a psi_b] v_a w_b^T - mean(v) mean(w)^T``.

    The Hermite Gram matrix is diagonal, so only multi-indices shared by both
    expansions contribute; expansions on disjoint germ blocks give exactly 0.
    """
    if w is None:
        w = v
    if v.basis.normalized != w.basis.normalized:
        raise GermMismatchError("cannot mix normalized and monic expansions")
    lo = min(v.germ_offset, w.germ_offset)
    hi = max(v.germ_stop, w.germ_stop)
    iv = v.basis.index_set.lift(v.germ_offset - lo, hi - lo)
    iw = w.basis.index_set.lift(w.germ_offset - lo, hi - lo)
    pos_w = iw.positions
    pairs = [(a, pos_w[ix]) for a, ix in enumerate(iv) if a > 0 and ix in pos_w]
    out = np.zeros((v.dim, w.dim))
    if pairs:
        a, b = np.array(pairs).T
        out = (v.coeffs[:, a] * v.basis.norms_sq[a]) @ w.coeffs[:, b].T
    if v is w:
        out = 0.5 * (out + out.T)
    return out


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Samples ``(D, S)``: column ``s`` is the realisation at ``omega_s``."""

    samples: np.ndarray
    germ_samples: np.ndarray | None = None
    names: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=float))
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def dim(self) -> int:
        return self.samples.shape[0]

    @property
    def size(self) -> int:
        return self.samples.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=1)

    @property
    def covariance(self) -> np.ndarray:
        return ensemble_covariance(self, self)

    def to_csv(self, path=None) -> str:
        names = self.names or tuple(f"x{i}" for i in range(self.dim))
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        writer.writerows([repr(float(v)) for v in col] for col in self.samples.T)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "Ensemble":
        text = str(path_or_text)
        if "\n" not in text:
            text = Path(text).read_text()
        rows = list(csv.reader(io.StringIO(text)))
        data = np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        return cls(data.T, names=tuple(rows[0]))


def sample(v: PceVector, germ_draws) -> Ensemble:
    """Evaluate ``v`` at given germ draws ``(L_total, S)``; deterministic in the draws."""
    draws = np.atleast_2d(np.asarray(germ_draws, dtype=float))
    return Ensemble(v.evaluate(draws), draws)


def draw_germ(rng: np.random.Generator, dim: int, size: int) -> np.ndarray:
    return rng.standard_normal((dim, size))


def ensemble_covariance(e: Ensemble, f: Ensemble) -> np.ndarray:
    """Unbiased sample cross-covariance (``1/(S-1)`` normalisation)."""
    a, b = e.samples, f.samples
    if a.shape[1] != b.shape[1]:
        raise ValueError("ensembles have different sizes")
    s = a.shape[1]
    if s < 2:
        raise ValueError("sample covariance needs at least two members")
    da = a - a.mean(axis=1, keepdims=True)
    db = b - b.mean(axis=1, keepdims=True)
    return da @ db.T / (s - 1)


def gaussian_regerm(mean_vec, cov, germ_offset: int = 0, degree: int = 1) -> PceVector:
    """Linear expansion with the given first two moments on a fresh ``D``-variable germ.

    Uses the symmetric square root of ``cov`` (negative eigenvalues clipped).
    Lossless for Gaussian inputs, moment-preserving otherwise.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    lam, q = np.linalg.eigh(0.5 * (cov + cov.T))
    root = (q * np.sqrt(np.clip(lam, 0.0, None))) @ q.T
    return linear_pce(mean_vec, root, germ_offset, degree)


# --- constrained-parameter transforms ----------------------------------------------

TRANSFORM_KINDS = ("identity", "log", "logit", "probit", "arctan")


@dataclass(frozen=True)
class TransformComponent:
    """One scalar transform ``x = T(p)`` mapping the admissible set onto R.

    ``log``: p in (a, inf), x = log((p - a) / scale).  ``logit``, ``probit``,
    ``arctan``: p in (a, b), through the unit interval u = (p - a) / (b - a).
    """

    kind: str = "identity"
    a: float = 0.0
    b: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ValueError(f"unknown transform {self.kind!r}")
        if self.kind in ("logit", "probit", "arctan") and not self.b > self.a:
            raise ValueError("interval transforms need b > a")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def admissible(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.kind == "identity":
            return np.isfinite(p)
        if self.kind == "log":
            return p > self.a
        return (p > self.a) & (p < self.b)

    def forward(self, p):
        p = np.asarray(p, dtype=float)
        if not np.all(self.admissible(p)):
            raise ValueError(f"value outside the admissible set of the {self.kind} transform")
        if self.kind == "identity":
            return p.copy()
        if self.kind == "log":
            return np.log((p - self.a) / self.scale)
        u = (p - self.a) / (self.b - self.a)
        if self.kind == "logit":
            return np.log(p - self.a) - np.log(self.b - p)
        if self.kind == "probit":
            return special.ndtri(u)
        return np.tan(math.pi * (u - 0.5))

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "log":
            return self.a + self.scale * np.exp(x)
        if self.kind == "logit":
            u = special.expit(x)
        elif self.kind == "probit":
            u = special.ndtr(x)
        else:
            u = np.arctan(x) / math.pi + 0.5
        return self.a + (self.b - self.a) * u


@dataclass(frozen=True)
class ParameterTransform:
    """Componentwise bijection between constrained parameters p and unconstrained x."""

    components: tuple[TransformComponent, ...]

    @classmethod
    def build(cls, specs: Sequence) -> "ParameterTransform":
        comps = []
        for spec in specs:
            if isinstance(spec, TransformComponent):
                comps.append(spec)
            elif isinstance(spec, str):
                comps.append(TransformComponent(spec))
            else:
                comps.append(TransformComponent(**spec))
        return cls(tuple(comps))

    def _apply(self, values, method):
        v = np.asarray(values, dtype=float)
        if v.shape[0] != len(self.components):
            raise ValueError(f"expected {len(self.components)} components, got {v.shape[0]}")
        return np.stack([getattr(c, method)(v[i]) for i, c in enumerate(self.components)])


def transform_forward(t: ParameterTransform, p) -> np.ndarray:
    """Constrained p to unconstrained x."""
    return t._apply(p, "forward")


def transform_inverse(t: ParameterTransform, x) -> np.ndarray:
    """Unconstrained x back to p."""
    return t._apply(x, "inverse")


def kde_pdf(e: Ensemble, grid) -> np.ndarray:
    """Gaussian-kernel density estimate with Silverman's bandwidth (scalar ensembles)."""
    if e.dim != 1:
        raise ValueError("density estimates are for scalar ensembles")
    if e.size < 2:
        raise ValueError("need at least two samples")
    data = e.samples[0]
    if not np.std(data) > 0:
        raise ValueError("zero-variance ensemble: bandwidth undefined")
    return stats.gaussian_kde(data, bw_method="silverman")(np.asarray(grid, dtype=float))

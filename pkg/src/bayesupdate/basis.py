"""Multi-index sets, Hermite chaos bases and Gauss-Hermite quadrature.

Everything here is expressed w.r.t. independent standard Gaussian variables.
Point sets are stored column-wise: an array of shape ``(dim, S)`` holds ``S``
points in ``R^dim``.  Basis evaluations come back as the ``(S, T)`` matrix
``Psi[s, a] = psi_a(point_s)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

RULES = ("total", "tensor", "custom")
DEFAULT_MAX_NODES = 10**6


def _grlex_key(index: tuple[int, ...]):
    return (sum(index), tuple(-e for e in index))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MultiIndexSet:
    """Ordered, duplicate-free set of multi-indices.

    Rows of ``indices`` are exponent tuples.  Ordering is graded
    lexicographic with the zero index first, so coefficient slot 0 is always
    the constant term.
    """

    dim: int
    degree: int
    rule: str
    indices: np.ndarray

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("index set needs dim >= 1")
        if self.rule not in RULES:
            raise ValueError(f"unknown truncation rule {self.rule!r}")
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, self.dim)
        if idx.shape[0] == 0 or idx[0].any():
            raise ValueError("index set must start with the zero multi-index")
        if (idx < 0).any():
            raise ValueError("multi-index entries must be non-negative")
        object.__setattr__(self, "indices", _frozen(idx))

    @classmethod
    def from_indices(cls, dim: int, indices: Iterable[Sequence[int]]) -> "MultiIndexSet":
        """Custom set from arbitrary indices; adds the zero index if missing."""
        items = {tuple(int(e) for e in ix) for ix in indices}
        items.add((0,) * dim)
        if any(len(ix) != dim for ix in items):
            raise ValueError("multi-index length does not match dim")
        ordered = sorted(items, key=_grlex_key)
        degree = max(sum(ix) for ix in ordered)
        return cls(dim, degree, "custom", np.array(ordered, dtype=np.int64))

    def __len__(self) -> int:
        return self.indices.shape[0]

    def __iter__(self):
        return (tuple(int(e) for e in row) for row in self.indices)

    def __contains__(self, index) -> bool:
        return tuple(int(e) for e in index) in self.positions

    def __eq__(self, other) -> bool:
        if not isinstance(other, MultiIndexSet):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.indices, other.indices)

    def __hash__(self) -> int:
        return hash((self.dim, self.indices.tobytes()))

    @property
    def cardinality(self) -> int:
        return len(self)

    @cached_property
    def positions(self) -> dict[tuple[int, ...], int]:
        return {ix: k for k, ix in enumerate(self)}

    @cached_property
    def total_degrees(self) -> np.ndarray:
        return _frozen(self.indices.sum(axis=1))

    def lift(self, offset: int, dim: int) -> "MultiIndexSet":
        """Embed into a ``dim``-variable germ, starting at variable ``offset``."""
        if offset < 0 or offset + self.dim > dim:
            raise ValueError("lifted range exceeds the target germ")
        if offset == 0 and dim == self.dim:
            return self
        wide = np.zeros((len(self), dim), dtype=np.int64)
        wide[:, offset:offset + self.dim] = self.indices
        return MultiIndexSet(dim, self.degree, "custom", wide)

    def union(self, other: "MultiIndexSet") -> "MultiIndexSet":
        if other.dim != self.dim:
            raise ValueError("cannot merge index sets of different dim")
        return MultiIndexSet.from_indices(self.dim, itertools.chain(self, other))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "degree": self.degree,
            "rule": self.rule,
            "indices": self.indices.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MultiIndexSet":
        if "indices" not in data:
            return build_index_set(data["dim"], data["degree"], data.get("rule", "total"))
        return cls(int(data["dim"]), int(data["degree"]), data.get("rule", "custom"),
                   np.array(data["indices"], dtype=np.int64))


def build_index_set(dim: int, degree: int, rule: str = "total") -> MultiIndexSet:
    """Complete truncated multi-index set.

    ``rule="total"`` keeps indices with ``sum(alpha) <= degree`` (cardinality
    ``C(dim + degree, degree)``); ``rule="tensor"`` keeps ``max(alpha) <= degree``
    (cardinality ``(degree + 1) ** dim``).
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if rule == "total":
        items = [ix for ix in itertools.product(range(degree + 1), repeat=dim) if sum(ix) <= degree]
    elif rule == "tensor":
        items = list(itertools.product(range(degree + 1), repeat=dim))
    else:
        raise ValueError(f"rule must be 'total' or 'tensor', got {rule!r}")
    items.sort(key=_grlex_key)
    return MultiIndexSet(dim, degree, rule, np.array(items, dtype=np.int64))


def hermite_table(x: np.ndarray, degree: int, normalized: bool = True) -> np.ndarray:
    """Univariate probabilists' Hermite values, shape ``x.shape + (degree + 1,)``.

    Uses He_{n+1} = x He_n - n He_{n-1}; the normalized variant divides by sqrt(n!).
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = x
    for n in range(1, degree):
        out[..., n + 1] = x * out[..., n] - n * out[..., n - 1]
    if normalized:
        out /= np.sqrt([math.factorial(n) for n in range(degree + 1)])
    return out


@dataclass(frozen=True, eq=False)
class HermiteBasis:
    """Tensor-product Hermite polynomials over an index set."""

    index_set: MultiIndexSet
    normalized: bool = True

    @property
    def dim(self) -> int:
        return self.index_set.dim

    @property
    def cardinality(self) -> int:
        return len(self.index_set)

    @property
    def degree(self) -> int:
        return self.index_set.degree

    def __len__(self) -> int:
        return self.cardinality

    def __eq__(self, other) -> bool:
        if not isinstance(other, HermiteBasis):
            return NotImplemented
        return self.normalized == other.normalized and self.index_set == other.index_set

    def __hash__(self) -> int:
        return hash((self.index_set, self.normalized))

    @cached_property
    def norms_sq(self) -> np.ndarray:
        """E[psi_a^2]: 1 for the normalized basis, alpha! for the monic one."""
        if self.normalized:
            return _frozen(np.ones(self.cardinality))
        fact = np.array([math.factorial(k) for k in range(self.degree + 1)], dtype=float)
        return _frozen(np.prod(fact[self.index_set.indices], axis=1))

    def evaluate(self, points) -> np.ndarray:
        """Evaluate at ``points`` of shape ``(dim, S)``; returns ``(S, T)``."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] != self.dim:
            raise ValueError(f"points have dim {pts.shape[0]}, basis has dim {self.dim}")
        idx = self.index_set.indices
        psi = np.ones((pts.shape[1], self.cardinality))
        for d in range(self.dim):
            top = int(idx[:, d].max())
            if top == 0:
                continue
            table = hermite_table(pts[d], top, self.normalized)
            psi *= table[:, idx[:, d]]
        return psi

    def with_index_set(self, index_set: MultiIndexSet) -> "HermiteBasis":
        return HermiteBasis(index_set, self.normalized)

    def to_dict(self) -> dict:
        d = self.index_set.to_dict()
        d["normalized"] = self.normalized
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "HermiteBasis":
        return cls(MultiIndexSet.from_dict(data), bool(data.get("normalized", True)))


def hermite_basis(dim: int, degree: int, rule: str = "total", normalized: bool = True) -> HermiteBasis:
    return HermiteBasis(build_index_set(dim, degree, rule), normalized)


def eval_basis(basis: HermiteBasis, point) -> np.ndarray:
    """Values ``[psi_a(point)]`` in index-set order for a single point."""
    point = np.asarray(point, dtype=float).ravel()
    if point.size != basis.dim:
        raise ValueError(f"point has length {point.size}, basis has dim {basis.dim}")
    return basis.evaluate(point[:, None])[0]


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes ``(dim, S)`` with positive probability weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if nodes.shape[1] != weights.size:
            raise ValueError("node and weight counts differ")
        if (weights <= 0).any():
            raise ValueError("quadrature weights must be positive")
        object.__setattr__(self, "nodes", _frozen(nodes))
        object.__setattr__(self, "weights", _frozen(weights))

    @property
    def dim(self) -> int:
        return self.nodes.shape[0]

    @property
    def size(self) -> int:
        return self.weights.size

    def integrate(self, values) -> np.ndarray:
        """Weighted sum over the last axis of ``values``."""
        return np.asarray(values) @ self.weights

    def to_dict(self) -> dict:
        return {"dim": self.dim, "nodes": self.nodes.T.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "QuadratureRule":
        nodes = np.asarray(data["nodes"], dtype=float).reshape(-1, int(data["dim"])).T
        return cls(nodes, np.asarray(data["weights"], dtype=float))


def gauss_hermite_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Golub-Welsch nodes and probability weights for N(0, 1)."""
    if n < 1:
        raise ValueError("need at least one quadrature point")
    if n == 1:
        return np.zeros(1), np.ones(1)
    off = np.sqrt(np.arange(1, n, dtype=float))
    nodes, vecs = eigh_tridiagonal(np.zeros(n), off)
    weights = vecs[0] ** 2
    # the spectrum is symmetric; enforce it exactly
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights / weights.sum()


def gauss_hermite_rule(dim: int, points_per_dim, max_nodes: int = DEFAULT_MAX_NODES) -> QuadratureRule:
    """Tensor Gauss-Hermite rule; ``points_per_dim`` may be an int or one count per variable."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    counts = [int(points_per_dim)] * dim if np.isscalar(points_per_dim) else [int(c) for c in points_per_dim]
    if len(counts) != dim:
        raise ValueError("need one point count per dimension")
    if min(counts) < 1:
        raise ValueError("points_per_dim must be >= 1")
    if sum(math.log(c) for c in counts) > math.log(max_nodes) + 1e-12:
        raise ValueError(f"tensor rule would exceed {max_nodes} nodes")
    rules = [gauss_hermite_1d(c) for c in counts]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids])
    weights = np.prod(np.stack([w.ravel() for w in wgrids]), axis=0)
    return QuadratureRule(nodes, weights)


def product_rule(*rules: QuadratureRule) -> QuadratureRule:
    """Tensor product of rules over consecutive germ blocks."""
    nodes, weights = rules[0].nodes, rules[0].weights
    for r in rules[1:]:
        nodes = np.vstack([np.repeat(nodes, r.size, axis=1), np.tile(r.nodes, (1, nodes.shape[1]))])
        weights = np.repeat(weights, r.size) * np.tile(r.weights, weights.size)
    return QuadratureRule(nodes, weights)


def gram_matrix(basis: HermiteBasis, rule: QuadratureRule) -> np.ndarray:
    """Quadrature Gram matrix E[psi_a psi_b]."""
    if rule.dim != basis.dim:
        raise ValueError(f"rule has dim {rule.dim}, basis has dim {basis.dim}")
    psi = basis.evaluate(rule.nodes)
    gram = psi.T @ (rule.weights[:, None] * psi)
    return 0.5 * (gram + gram.T)

"""Finite-difference fields on the unit interval with homogeneous Dirichlet data.

Nodes sit at ``x_i = i*dx`` for ``i = 1..n`` (boundary values are implicit
zeros); edges sit at cell midpoints, so an edge field has ``n + 1`` entries.
All discrete pairings carry the weight ``dx``.

The array-level helpers (``grad_values``, ``div_values``, ...) broadcast over
leading axes and are what the time stepper and auditor use internally; the
typed wrappers below them validate grids.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solveh_banded

__all__ = [
    "Grid1D",
    "NodeField",
    "EdgeField",
    "SpectralBasis",
    "GridMismatchError",
    "gradient",
    "divergence",
    "h_inner",
    "edge_inner",
    "h_norm",
    "edge_norm",
    "v_norm",
    "laplacian_eigs",
    "sqrt_minus_A",
    "dual_norm_estimate",
    "dual_norm_exact",
    "solve_weighted",
]


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    n_interior: int

    def __post_init__(self):
        if int(self.n_interior) != self.n_interior or self.n_interior < 1:
            raise ValueError(f"n_interior must be a positive integer, got {self.n_interior!r}")

    @property
    def dx(self) -> float:
        return 1.0 / (self.n_interior + 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.n_interior + 1) * self.dx

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_interior + 1) + 0.5) * self.dx


class _GridFunction:
    """Shared behaviour of node and edge fields (immutable value arrays)."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid1D, values):
        values = np.array(values, dtype=float)
        expected = self._length(grid)
        if values.shape != (expected,):
            raise ValueError(
                f"{type(self).__name__} on a grid with n_interior={grid.n_interior} "
                f"needs {expected} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{type(self).__name__} values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    @staticmethod
    def _length(grid: Grid1D) -> int:
        raise NotImplementedError

    @classmethod
    def zeros(cls, grid: Grid1D):
        return cls(grid, np.zeros(cls._length(grid)))

    def _check(self, other):
        if type(other) is not type(self):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return type(self)(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return type(self)(self.grid, self.values - other.values)

    def __mul__(self, c):
        return type(self)(self.grid, float(c) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return type(self)(self.grid, -self.values)

    def __len__(self):
        return self.values.shape[0]

    def __repr__(self):
        return f"{type(self).__name__}(n_interior={self.grid.n_interior}, values={self.values!r})"


class NodeField(_GridFunction):
    __slots__ = ()

    @staticmethod
    def _length(grid):
        return grid.n_interior


class EdgeField(_GridFunction):
    __slots__ = ()

    @staticmethod
    def _length(grid):
        return grid.n_interior + 1


# -- array level -------------------------------------------------------------

def grad_values(v: np.ndarray, dx: float) -> np.ndarray:
    """Edge differences of node values ``v[..., n]`` with zero ghost nodes."""
    v = np.asarray(v, dtype=float)
    out = np.empty(v.shape[:-1] + (v.shape[-1] + 1,))
    out[..., 0] = v[..., 0]
    np.subtract(v[..., 1:], v[..., :-1], out=out[..., 1:-1])
    out[..., -1] = -v[..., -1]
    out /= dx
    return out


def div_values(q: np.ndarray, dx: float) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return (q[..., 1:] - q[..., :-1]) / dx


def node_inner_values(a, b, dx):
    return dx * np.sum(a * b, axis=-1)


def weighted_laplace_values(weights: np.ndarray, v: np.ndarray, dx: float) -> np.ndarray:
    """``div(weights * grad v)`` for edge weights of length ``n + 1``."""
    return div_values(weights * grad_values(v, dx), dx)


def solve_weighted(weights: np.ndarray, rhs: np.ndarray, coef: float, dx: float) -> np.ndarray:
    """Solve ``(I - coef * div(weights * grad)) v = rhs`` (tridiagonal, SPD).

    ``weights`` has one entry per edge and must be nonnegative.
    """
    w = coef * np.asarray(weights, dtype=float) / dx**2
    ab = np.empty((2, rhs.shape[-1]))
    ab[1] = 1.0 + w[:-1] + w[1:]
    ab[0, 0] = 0.0
    ab[0, 1:] = -w[1:-1]
    return solveh_banded(ab, rhs, lower=False, check_finite=False)


# -- typed API ---------------------------------------------------------------

def _same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("fields live on different grids")


def gradient(u: NodeField) -> EdgeField:
    return EdgeField(u.grid, grad_values(u.values, u.grid.dx))


def divergence(q: EdgeField) -> NodeField:
    return NodeField(q.grid, div_values(q.values, q.grid.dx))


def h_inner(u: NodeField, v: NodeField) -> float:
    _same_grid(u, v)
    return float(u.grid.dx * np.dot(u.values, v.values))


def edge_inner(q: EdgeField, r: EdgeField) -> float:
    _same_grid(q, r)
    return float(q.grid.dx * np.dot(q.values, r.values))


def h_norm(u: NodeField) -> float:
    return float(np.sqrt(h_inner(u, u)))


def edge_norm(q: EdgeField) -> float:
    return float(np.sqrt(edge_inner(q, q)))


def v_norm(u: NodeField, p: float) -> float:
    """Gradient ``p``-norm, equivalent to the W^{1,p}_0 norm by Poincare."""
    if not 1.0 < p < np.inf:
        raise ValueError(f"p must lie in (1, inf), got {p}")
    g = np.abs(grad_values(u.values, u.grid.dx))
    return float((u.grid.dx * np.sum(g**p)) ** (1.0 / p))


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Eigenpairs of the discrete Dirichlet Laplacian ``A_h = div grad``.

    ``vectors[k]`` holds the values of the (k+1)-th eigenvector, normalised in
    the discrete H inner product, and ``A_h e_k = -eigenvalues[k] e_k``.
    """

    grid: Grid1D
    eigenvalues: np.ndarray
    vectors: np.ndarray

    def __len__(self):
        return self.eigenvalues.shape[0]

    def eigenvector(self, k: int) -> NodeField:
        """Eigenvector with 1-based index ``k``."""
        return NodeField(self.grid, self.vectors[k - 1])

    def coefficients(self, u) -> np.ndarray:
        """H-projections ``<u, e_k>`` (accepts a NodeField or raw values)."""
        vals = u.values if isinstance(u, NodeField) else np.asarray(u, dtype=float)
        # einsum keeps the reduction order fixed (no threaded BLAS)
        return self.grid.dx * np.einsum("kn,...n->...k", self.vectors, vals)

    def synthesize(self, coefs: np.ndarray) -> np.ndarray:
        coefs = np.asarray(coefs, dtype=float)
        m = coefs.shape[-1]
        return np.einsum("...k,kn->...n", coefs, self.vectors[:m])

    @cached_property
    def sqrt_eigenvalues(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)

    @cached_property
    def sup_norms(self) -> np.ndarray:
        return np.max(np.abs(self.vectors), axis=1)


def laplacian_eigs(grid: Grid1D) -> SpectralBasis:
    n, dx = grid.n_interior, grid.dx
    k = np.arange(1, n + 1)
    lam = (4.0 / dx**2) * np.sin(k * np.pi * dx / 2.0) ** 2
    vecs = np.sin(np.pi * np.outer(k, grid.nodes))
    # discrete sine vectors have dx * sum sin^2 = 1/2 exactly
    vecs *= np.sqrt(2.0)
    vecs.flags.writeable = False
    lam.flags.writeable = False
    return SpectralBasis(grid, lam, vecs)


def sqrt_minus_A(u: NodeField, basis: SpectralBasis) -> NodeField:
    if u.grid != basis.grid:
        raise GridMismatchError("basis was built on a different grid")
    c = basis.coefficients(u)
    return NodeField(u.grid, basis.synthesize(basis.sqrt_eigenvalues * c))


def dual_norm_exact(w: NodeField, basis: SpectralBasis) -> float:
    """Exact discrete H^{-1} norm ``||(-A_h)^{-1/2} w||_H`` (the q = 2 case)."""
    c = basis.coefficients(w)
    return float(np.sqrt(np.sum(c**2 / basis.eigenvalues)))


def dual_norm_estimate(w: NodeField, qp: float, n_dirs: int, seed=None) -> float:
    """Sampled lower bound of the dual norm of ``w`` against ``v_norm(., q)``.

    ``q`` is the conjugate of ``qp``. Directions are drawn with eigen-coefficients
    scaled by ``lambda_k^{-1/2}`` (isotropic in the energy norm) from a single
    stream, so a larger ``n_dirs`` with the same seed only adds directions.
    """
    if not 1.0 < qp < np.inf:
        raise ValueError(f"conjugate exponent must lie in (1, inf), got {qp}")
    if n_dirs < 1:
        raise ValueError("n_dirs must be >= 1")
    q = qp / (qp - 1.0)
    grid = w.grid
    if not np.any(w.values):
        return 0.0
    basis = laplacian_eigs(grid)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_dirs, grid.n_interior)) / basis.sqrt_eigenvalues
    v = basis.synthesize(z)
    g = np.abs(grad_values(v, grid.dx))
    norms = (grid.dx * np.sum(g**q, axis=-1)) ** (1.0 / q)
    pairing = np.abs(grid.dx * v @ w.values)
    return float(np.max(pairing / norms))

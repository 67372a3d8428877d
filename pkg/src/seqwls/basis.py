"""Orthonormal basis families, Christoffel functions and optimal weights.

Two hierarchical families are provided:

* :class:`HermiteBasis` -- orthonormal probabilists' Hermite polynomials on the
  real line with the standard Gaussian reference measure. ``phi_j = H_{j-1}``.
* :class:`HaarTreeBasis` -- an ordered, tree-admissible list of Haar wavelets
  ``psi_{l,k}`` on ``[0, 1]`` with the uniform reference measure.

Basis indices ``j`` are 1-based throughout, matching ``phi_1, phi_2, ...``.
The Christoffel function is ``k_m(x) = sum_{j<=m} phi_j(x)^2`` and the optimal
sampling density relative to the reference measure is ``k_m / m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss


class DomainError(ValueError):
    """Raised when a point lies outside the basis domain."""


class SingularWeightError(ArithmeticError):
    """Raised when the optimal weight is requested where ``k_m(x) = 0``."""


_SQRT_2PI = math.sqrt(2.0 * math.pi)


class HaarNode(NamedTuple):
    """Dyadic index ``(level, shift)`` of the wavelet ``psi_{l,k}``."""

    level: int
    shift: int

    @property
    def support(self) -> tuple[float, float]:
        h = 2.0 ** -self.level
        return self.shift * h, (self.shift + 1) * h

    def children(self) -> tuple["HaarNode", "HaarNode"]:
        return (HaarNode(self.level + 1, 2 * self.shift),
                HaarNode(self.level + 1, 2 * self.shift + 1))


def hermite_table(x, m: int) -> np.ndarray:
    """Values of ``H_0..H_{m-1}`` at ``x``, shape ``x.shape + (m,)``.

    Uses the orthonormal three-term recurrence
    ``H_{k+1} = (x H_k - sqrt(k) H_{k-1}) / sqrt(k+1)``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (m,))
    out[..., 0] = 1.0
    if m > 1:
        out[..., 1] = x
    for k in range(1, m - 1):
        out[..., k + 1] = (x * out[..., k] - math.sqrt(k) * out[..., k - 1]) / math.sqrt(k + 1)
    return out


def hermite_eval(j: int, x):
    """Evaluate ``phi_j = H_{j-1}`` at ``x`` (scalar or array)."""
    if j < 1:
        raise ValueError(f"basis index must be >= 1, got {j}")
    vals = hermite_table(x, j)[..., j - 1]
    return float(vals) if np.ndim(vals) == 0 else vals


def _check_unit_interval(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(~((x >= 0.0) & (x <= 1.0))):
        raise DomainError("Haar basis is defined on [0, 1]")
    return x


def haar_eval(node: tuple[int, int], x):
    """Evaluate ``psi_{l,k}(x) = 2^{l/2} psi(2^l x - k)`` on ``[0, 1]``.

    Right-continuous at breakpoints and zero at ``x = 1``.
    """
    level, shift = node
    x = _check_unit_interval(x)
    t = np.ldexp(x, level) - shift
    amp = 2.0 ** (level / 2)
    vals = np.where((t >= 0.0) & (t < 0.5), amp, np.where((t >= 0.5) & (t < 1.0), -amp, 0.0))
    return float(vals) if vals.ndim == 0 else vals


class BasisFamily:
    """Common interface of the hierarchical orthonormal systems."""

    kind: str
    domain: tuple[float, float]

    def max_dim(self) -> int | None:
        return None

    def _check_dim(self, m: int) -> None:
        if m < 1:
            raise ValueError(f"dimension must be >= 1, got {m}")
        cap = self.max_dim()
        if cap is not None and m > cap:
            raise ValueError(f"basis only has {cap} functions, requested {m}")

    def check_points(self, x) -> np.ndarray:
        raise NotImplementedError

    def matrix(self, x, m: int) -> np.ndarray:
        """Collocation matrix ``[phi_j(x_i)]`` of shape ``(len(x), m)``."""
        raise NotImplementedError

    def eval(self, j: int, x):
        vals = self.matrix(np.atleast_1d(x), j)[:, j - 1]
        return float(vals[0]) if np.ndim(x) == 0 else vals

    def quadrature(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and reference-measure weights exact for ``V_m`` inner products."""
        raise NotImplementedError


@dataclass(frozen=True)
class HermiteBasis(BasisFamily):
    """Orthonormal Hermite polynomials for the standard Gaussian measure."""

    kind = "hermite"
    domain = (-math.inf, math.inf)
    quad_nodes: int = 200

    def check_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise DomainError("Hermite basis requires finite points")
        return x

    def matrix(self, x, m: int) -> np.ndarray:
        self._check_dim(m)
        x = self.check_points(np.atleast_1d(x))
        return hermite_table(x, m)

    def quadrature(self, m: int = 0):
        nodes, weights = hermegauss(max(self.quad_nodes, m + 1))
        return nodes, weights / _SQRT_2PI


@dataclass(frozen=True)
class HaarTreeBasis(BasisFamily):
    """Haar wavelets ordered along a tree-admissible node list."""

    nodes: tuple[HaarNode, ...] = (HaarNode(0, 0),)
    gl_points: int = 64

    kind = "haar"
    domain = (0.0, 1.0)

    def __post_init__(self):
        nodes = tuple(HaarNode(*n) for n in self.nodes)
        if not is_admissible(nodes):
            raise ValueError("node list is not tree-admissible")
        object.__setattr__(self, "nodes", nodes)

    def max_dim(self):
        return len(self.nodes)

    def check_points(self, x):
        return _check_unit_interval(x)

    def matrix(self, x, m: int) -> np.ndarray:
        self._check_dim(m)
        x = self.check_points(np.atleast_1d(x))
        levels, shifts = self.index_arrays()
        levels, shifts = levels[:m], shifts[:m]
        # index of the half-cell of level l+1 containing x; exact in binary
        cell = np.floor(np.ldexp(x[..., None], levels + 1)).astype(np.int64)
        sign = np.where((cell >> 1) == shifts, 1 - 2 * (cell & 1), 0)
        return sign * 2.0 ** (levels / 2.0)

    @cached_property
    def _index(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([n.level for n in self.nodes], dtype=np.int64),
                np.array([n.shift for n in self.nodes], dtype=np.int64))

    def index_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Levels and shifts of all nodes, in basis order."""
        return self._index

    def cells(self, m: int) -> np.ndarray:
        """Edges of the uniform dyadic grid on which ``phi_1..phi_m`` are constant."""
        finest = max(n.level for n in self.nodes[:m]) + 1
        return np.linspace(0.0, 1.0, 2**finest + 1)

    def quadrature(self, m: int):
        edges = self.cells(m)
        t, w = leggauss(self.gl_points)
        a, b = edges[:-1, None], edges[1:, None]
        nodes = (0.5 * (b - a) * (t[None, :] + 1.0) + a).ravel()
        weights = (0.5 * (b - a) * w[None, :]).ravel()
        return nodes, weights


def is_admissible(nodes: Sequence[tuple[int, int]]) -> bool:
    """Every node after the root has its parent earlier in the list."""
    if not nodes or tuple(nodes[0]) != (0, 0):
        return False
    seen = set()
    for level, shift in nodes:
        if not 0 <= shift < 2**level or (level, shift) in seen:
            return False
        if level > 0 and (level - 1, shift // 2) not in seen:
            return False
        seen.add((level, shift))
    return True


def grow_random_tree(seed: int, m_max: int) -> list[HaarNode]:
    """Grow a Haar index tree from the root by uniform frontier selection."""
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    nodes = [HaarNode(0, 0)]
    frontier = list(nodes[0].children())
    while len(nodes) < m_max:
        pick = frontier.pop(int(rng.integers(len(frontier))))
        nodes.append(pick)
        frontier.extend(pick.children())
    return nodes


def christoffel(basis: BasisFamily, m: int, x):
    """``k_m(x) = sum_{j<=m} phi_j(x)^2``."""
    vals = np.sum(basis.matrix(np.atleast_1d(x), m) ** 2, axis=1)
    return float(vals[0]) if np.ndim(x) == 0 else vals


def optimal_weight(basis: BasisFamily, m: int, x):
    """``w_m(x) = m / k_m(x)``; raises where the Christoffel function vanishes."""
    k = np.atleast_1d(christoffel(basis, m, np.atleast_1d(x)))
    if np.any(k <= 0.0):
        raise SingularWeightError("Christoffel function vanishes at a sample point")
    w = m / k
    return float(w[0]) if np.ndim(x) == 0 else w


def sigma_relative_density(basis: BasisFamily, j: int, x):
    """Density of ``sigma_j`` relative to the reference measure, ``phi_j(x)^2``."""
    vals = basis.eval(j, x)
    return vals * vals


def mu_density(basis: BasisFamily, m: int, x):
    """Density of ``mu_m`` relative to the reference measure, ``k_m(x) / m``."""
    return christoffel(basis, m, x) / m

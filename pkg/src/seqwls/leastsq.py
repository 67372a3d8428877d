"""Weighted empirical Gramians and the conditioned weighted least-squares fit."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .basis import BasisFamily, SingularWeightError

#: Acceptance threshold on ``||G - I||_2``.
STABILITY_THRESHOLD = 0.5


def _weighted_design(basis: BasisFamily, m: int, x) -> tuple[np.ndarray, np.ndarray]:
    phi = basis.matrix(np.atleast_1d(x), m)
    k = np.sum(phi * phi, axis=1)
    if np.any(k <= 0.0):
        raise SingularWeightError("Christoffel function vanishes at a sample point")
    return phi, m / k


def _symmetrize(G: np.ndarray) -> np.ndarray:
    return np.triu(G) + np.triu(G, 1).T


def assemble_gramian(basis: BasisFamily, m: int, x) -> np.ndarray:
    """``G_{jk} = (1/n) sum_i w_m(x_i) phi_j(x_i) phi_k(x_i)``.

    The upper triangle is computed and mirrored, so the result is exactly
    symmetric.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size == 0:
        raise ValueError("empty sample")
    phi, w = _weighted_design(basis, m, x)
    return _symmetrize((phi * w[:, None]).T @ phi / x.size)


def jacobi_eigenvalues(A, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm is ``<= tol`` times the
    Frobenius norm of ``A`` (absolute ``tol`` for the zero matrix).
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    scale = max(np.linalg.norm(A), 1.0)
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                diff = A[q, q] - A[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    t = apq / diff  # tan of a tiny rotation angle
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    return np.sort(np.diag(A))


def eigenvalues(G, method: str = "lapack") -> np.ndarray:
    if method == "lapack":
        return np.linalg.eigvalsh(G)
    if method == "jacobi":
        return jacobi_eigenvalues(G)
    raise ValueError(f"unknown eigenvalue method {method!r}")


def spectral_deviation(G, method: str = "lapack") -> float:
    """``||G - I||_2``, the largest absolute eigenvalue of ``G - I``."""
    G = np.asarray(G, dtype=float)
    lam = eigenvalues(G - np.eye(G.shape[0]), method)
    return float(np.max(np.abs(lam)))


def condition_number(G, method: str = "lapack") -> float:
    """``lambda_max / lambda_min``; ``inf`` when ``G`` is not positive definite."""
    lam = eigenvalues(np.asarray(G, dtype=float), method)
    if lam[0] <= 0.0:
        return math.inf
    return float(lam[-1] / lam[0])


@dataclass
class WlsFit:
    coefficients: np.ndarray
    deviation: float
    accepted: bool
    gramian: np.ndarray

    @property
    def condition(self) -> float:
        return condition_number(self.gramian)


def wls_fit(basis: BasisFamily, m: int, x, y, safeguard: bool = True) -> WlsFit:
    """Weighted least squares in ``V_m`` with the stability safeguard.

    Solves ``G c = d`` by Cholesky when ``||G - I||_2 <= 1/2``; otherwise the
    estimator is set to zero and the fit is flagged as rejected. With
    ``safeguard=False`` the system is solved whenever ``G`` is positive
    definite; ``accepted`` still reports the ``1/2`` test.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"{x.size} points but {y.size} observations")
    if x.size == 0:
        raise ValueError("empty sample")
    phi, w = _weighted_design(basis, m, x)
    G = _symmetrize((phi * w[:, None]).T @ phi / x.size)
    d = phi.T @ (w * y) / x.size
    delta = spectral_deviation(G)
    accepted = delta <= STABILITY_THRESHOLD
    if safeguard and not accepted:
        return WlsFit(np.zeros(m), delta, False, G)
    c = scipy.linalg.cho_solve(scipy.linalg.cho_factor(G), d)
    return WlsFit(c, delta, accepted, G)


def l2_error(basis: BasisFamily, m: int, coefficients, u: Callable) -> float:
    """``||u - sum_j c_j phi_j||`` in ``L^2(rho)``, by the basis quadrature rule."""
    nodes, weights = basis.quadrature(m)
    resid = u(nodes) - basis.matrix(nodes, m) @ np.asarray(coefficients, dtype=float)
    return math.sqrt(max(float(np.dot(weights, resid * resid)), 0.0))


def projection_coefficients(basis: BasisFamily, m: int, u: Callable) -> np.ndarray:
    """``<u, phi_j>`` for ``j = 1..m``."""
    nodes, weights = basis.quadrature(m)
    return basis.matrix(nodes, m).T @ (weights * u(nodes))


def best_approx_error(basis: BasisFamily, m: int, u: Callable) -> float:
    """``e_m(u) = ||u - P_m u||``."""
    return l2_error(basis, m, projection_coefficients(basis, m, u), u)


def l2_norm(basis: BasisFamily, u: Callable, m: int = 1) -> float:
    nodes, weights = basis.quadrature(m)
    vals = u(nodes)
    return math.sqrt(float(np.dot(weights, vals * vals)))

"""Sample-size rules and closed-form probability/cost bounds.

All formulas are evaluated in double precision; the ceiling is applied only
as the final operation of a sample-size rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Exponent constant of the matrix Chernoff bound.
GAMMA = 0.5 * (1.0 - math.log(2.0))
#: Oversampling constant ``c = 1/gamma = 2/(1 - ln 2)``.
C = 2.0 / (1.0 - math.log(2.0))


def _check_prob(eps: float, name: str = "eps") -> None:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {eps}")


def n_eps(m: int, eps: float) -> int:
    """``n_eps(m) = ceil(c m (ln 2m - ln eps))``, with ``n_eps(0) = 0``."""
    _check_prob(eps)
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return 0
    return math.ceil(C * m * (math.log(2 * m) - math.log(eps)))


def eps_schedule(m: int, eps0: float) -> float:
    """Failure probability ``6 eps0 / (pi m)^2`` for step ``m``; sums to ``eps0``."""
    _check_prob(eps0, "eps0")
    if m < 1:
        raise ValueError("m must be >= 1")
    return 6.0 * eps0 / (math.pi * m) ** 2


def n_uniform(m: int, eps0: float) -> int:
    """``ceil(c m (ln 2m + 2 ln m - ln(6 eps0 / pi^2)))``, i.e. ``n_{eps(m)}(m)``."""
    _check_prob(eps0, "eps0")
    if m < 1:
        raise ValueError("m must be >= 1")
    return math.ceil(C * m * (math.log(2 * m) + 2.0 * math.log(m)
                              - math.log(6.0 * eps0 / math.pi**2)))


@dataclass(frozen=True)
class BudgetRule:
    """A sample-size sequence ``n(m)`` parametrised by a failure probability."""

    eps: float

    kind = "abstract"

    def __post_init__(self):
        _check_prob(self.eps)

    def n(self, m: int) -> int:
        raise NotImplementedError

    def sizes(self, m_max: int) -> list[int]:
        return [self.n(m) for m in range(1, m_max + 1)]

    def tail_constant(self, tau: float) -> float:
        """Prefactor ``M_tau`` of the cost tail bound."""
        raise NotImplementedError


@dataclass(frozen=True)
class FixedEps(BudgetRule):
    """``n(m) = n_eps(m)`` with one failure probability for every ``m``."""

    kind = "fixed"

    def n(self, m):
        return n_eps(m, self.eps)

    def tail_constant(self, tau):
        return math.exp(2.0 * C * tau**2 / 3.0)


@dataclass(frozen=True)
class PerStepEps(BudgetRule):
    """``n(m) = n_{eps(m)}(m)`` with the summable schedule ``eps(m)``."""

    kind = "per_step"

    def n(self, m):
        return 0 if m == 0 else n_uniform(m, self.eps)

    def tail_constant(self, tau):
        return math.exp(2.0 * C * tau**2)


def harmonic_cost_sums(rule: BudgetRule, m_max: int) -> np.ndarray:
    """Partial sums ``sum_{k<=m} n(k)/(k+1)`` for ``m = 1..m_max``."""
    k = np.arange(1, m_max + 1)
    terms = np.array(rule.sizes(m_max), dtype=float) / (k + 1)
    return np.cumsum(terms)


def harmonic_cost_sum(rule: BudgetRule, m: int) -> float:
    """``sum_{k=1}^m n(k)/(k+1)``, the expected replacement total ``E s(m+1)``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return math.fsum(rule.n(k) / (k + 1) for k in range(1, m + 1))


def chernoff_tail(tau: float, mean: float) -> tuple[float, float]:
    """Upper tail bounds for a sum of independent Bernoulli variables.

    Returns ``((1+tau)^{-(1+tau) mean} e^{tau mean}, e^{-tau^2 mean / 3})``;
    the second form is only valid for ``tau`` in ``[0, 1]``.
    """
    if tau < 0 or mean < 0:
        raise ValueError("tau and mean must be nonnegative")
    exact = math.exp(mean * (tau - (1.0 + tau) * math.log1p(tau)))
    simplified = math.exp(-tau * tau * mean / 3.0)
    return exact, simplified


def cost_tail_bound(rule: BudgetRule, m: int, tau: float) -> float:
    """``M_tau exp(-tau^2 n(m-1) / 6)`` bounding ``P(C_m >= n(m) + (1+tau)(n(m-1)+1))``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if m < 2:
        raise ValueError("m must be >= 2")
    return rule.tail_constant(tau) * math.exp(-tau * tau * rule.n(m - 1) / 6.0)


def matrix_chernoff_bound(m: int, n: int, K: float) -> float:
    """``2 m exp(-gamma n / K)`` bounding ``P(||G_m - I||_2 >= 1/2)``."""
    if m < 1 or n < 0:
        raise ValueError("need m >= 1 and n >= 0")
    if K < m:
        raise ValueError(f"K = {K} cannot be smaller than m = {m}")
    return 2.0 * m * math.exp(-GAMMA * n / K)

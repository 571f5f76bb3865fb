"""Closed-form composition calculators for (eps, delta) budgets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from scipy.optimize import brentq
from scipy.special import gammaln

from .core import ApproxDP


@dataclass(frozen=True)
class CompositionQuery:
    """``k`` homogeneous ``(epsilon, delta)`` mechanisms and one target.

    Exactly one of ``eps_prime`` (solve for delta') and ``delta_prime``
    (solve for eps') is set.
    """

    k: int
    epsilon: float
    delta: float = 0.0
    eps_prime: float | None = None
    delta_prime: float | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if (self.eps_prime is None) == (self.delta_prime is None):
            raise ValueError("set exactly one of eps_prime and delta_prime")

    def solve(self) -> ApproxDP:
        if self.eps_prime is not None:
            return ApproxDP(self.eps_prime, optimal_homogeneous(self.k, self.epsilon, self.delta, self.eps_prime))
        return ApproxDP(optimal_epsilon(self.k, self.epsilon, self.delta, self.delta_prime), self.delta_prime)


def _log_comb(k: int, i: int) -> float:
    return gammaln(k + 1) - gammaln(i + 1) - gammaln(k - i + 1)


def pure_rr_delta(k: int, epsilon: float, eps_prime: float) -> float:
    """Hockey-stick at ``e^eps_prime`` between k-fold products of ``RR_eps`` laws.

    The ``2^k`` outcomes collapse to ``k + 1`` classes by the number ``i``
    of flipped bits: mass ``C(k,i) p^(k-i) q^i`` under one secret and
    ``C(k,i) p^i q^(k-i)`` under the other.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    log_p = -math.log1p(math.exp(-epsilon))
    log_q = -epsilon + log_p
    terms = []
    for i in range(k + 1):
        a = _log_comb(k, i) + (k - i) * log_p + i * log_q
        b = _log_comb(k, i) + eps_prime + i * log_p + (k - i) * log_q
        if a > b:
            terms.append(-math.exp(a) * math.expm1(b - a))
    return math.fsum(terms)


def optimal_homogeneous(k: int, epsilon: float, delta: float, eps_prime: float) -> float:
    """Smallest ``delta'`` with k-fold ``(epsilon, delta)`` composition ``(eps_prime, delta')``-DP.

    ``delta' = 1 - (1 - delta)^k (1 - pure_rr_delta(k, epsilon, eps_prime))``.
    """
    if epsilon < 0 or eps_prime < 0:
        raise ValueError("epsilons must be >= 0")
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    pure = pure_rr_delta(k, epsilon, eps_prime)
    return -math.expm1(k * math.log1p(-delta) + math.log1p(-pure))


def optimal_epsilon(k: int, epsilon: float, delta: float, delta_prime: float, xtol: float = 1e-12) -> float:
    """Smallest ``eps'`` whose optimal ``delta'`` is at most ``delta_prime``.

    Returns ``inf`` when ``delta_prime`` is below ``1 - (1 - delta)^k``,
    the floor no ``eps'`` can beat.
    """
    if not 0.0 <= delta_prime <= 1.0:
        raise ValueError("delta_prime must lie in [0, 1]")

    def excess(e):
        return optimal_homogeneous(k, epsilon, delta, e) - delta_prime

    if excess(0.0) <= 0.0:
        return 0.0
    hi = k * epsilon
    if excess(hi) > 0.0:
        return math.inf
    return brentq(excess, 0.0, hi, xtol=xtol)


def advanced_composition(k: int, epsilon: float, delta: float, delta_slack: float) -> tuple:
    """Upper bound ``(sqrt(2k ln(1/ds)) eps + k eps (e^eps - 1), k delta + ds)``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 < delta_slack < 1.0:
        raise ValueError("delta_slack must lie in (0, 1)")
    eps_prime = math.sqrt(2.0 * k * math.log(1.0 / delta_slack)) * epsilon + k * epsilon * math.expm1(epsilon)
    return eps_prime, k * delta + delta_slack


def basic_composition(budgets: Sequence[ApproxDP]) -> ApproxDP:
    """``(sum eps_i, sum delta_i)``."""
    budgets = list(budgets)
    if not budgets:
        raise ValueError("nothing to compose")
    for b in budgets:
        if not isinstance(b, ApproxDP):
            raise TypeError("basic composition takes ApproxDP budgets")
    return ApproxDP(math.fsum(b.epsilon for b in budgets), min(1.0, math.fsum(b.delta for b in budgets)))


def compose_report(budgets: Sequence[ApproxDP], delta_slack: float = 1e-6) -> dict:
    """Basic, advanced and (when homogeneous) optimal bounds side by side."""
    budgets = list(budgets)
    k = len(budgets)
    out = {"k": k, "basic": basic_composition(budgets)}
    homogeneous = len({(b.epsilon, b.delta) for b in budgets}) == 1
    if homogeneous:
        eps, delta = budgets[0].epsilon, budgets[0].delta
        e_adv, d_adv = advanced_composition(k, eps, delta, delta_slack)
        out["advanced"] = ApproxDP(e_adv, min(d_adv, 1.0))
        out["optimal"] = ApproxDP(optimal_epsilon(k, eps, delta, min(d_adv, 1.0)), min(d_adv, 1.0))
    else:
        out["note"] = "heterogeneous budgets: optimal composition not computed, basic bound reported"
    return out

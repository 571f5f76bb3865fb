"""Renyi budget monitor, concurrent RDP verification and CDP bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    EQ_TOL,
    RDP,
    TCDP,
    ZCDP,
    Adversary,
    ApproxDP,
    ConditionedSystem,
    SystemPair,
    compose_pairs,
)
from .divergence import (
    VerificationVerdict,
    check_dominance,
    conjugate,
    max_renyi,
    renyi_divergence,
)
from .engine import count_adversaries, DEFAULT_CAP


@dataclass(frozen=True)
class BudgetMonitor:
    """Remaining worst-case Renyi budget at every history of ``M^0`` vs ``M^1``.

    ``moment[h] = sup_A sum P^alpha Q^(1-alpha)`` over adversaries playing the
    remaining rounds of the conditional systems ``M^b|_h``. The monitor value
    is ``ell(h) = moment[h] ** (1 / (alpha - 1)) = exp(sup_A D_alpha)``.
    """

    alpha: float
    moment: dict = field(repr=False)
    choice: dict = field(repr=False)
    horizon: int = 0

    def ell(self, history=()) -> float:
        v = self.moment[tuple(history)]
        if math.isinf(v):
            return math.inf
        return v ** (1.0 / (self.alpha - 1.0))

    def remaining(self, history=()) -> float:
        """Worst-case remaining ``D_alpha`` after ``history`` (``log ell``)."""
        v = self.moment[tuple(history)]
        if math.isinf(v):
            return math.inf
        return math.log(v) / (self.alpha - 1.0) if v > 0 else -math.inf

    @property
    def divergence(self) -> float:
        return self.remaining(())

    def worst_adversary(self, history=()) -> Adversary:
        """The greedy adversary attaining ``moment[history]``."""
        start = tuple(history)
        strategy = {}
        for h, q in self.choice.items():
            if h[: len(start)] == start:
                strategy[h[len(start):]] = q
        return Adversary(_prune(strategy), self.horizon - len(start))


def _prune(strategy: dict) -> dict:
    """Keep only the histories the strategy itself reaches."""
    keep = {}
    stack = [()]
    while stack:
        h = stack.pop()
        if h not in strategy:
            continue
        q = keep[h] = strategy[h]
        stack.extend(k for k in strategy if len(k) == len(h) + 1 and k[:-1] == h and k[-1][0] == q)
    return keep


def budget_monitor(pair: SystemPair, alpha: float, check: bool = False,
                   cap: int | None = None) -> BudgetMonitor:
    """Backward induction for ``sup_A exp((alpha-1) D_alpha(IT(A:M^0) || IT(A:M^1)))``.

    ``V(h) = max_x sum_y P(y|h,x)^alpha Q(y|h,x)^(1-alpha) V(h+(x,y))`` with
    ``V = 1`` at full depth. Since every factor is nonnegative and the
    objective is a product along the strategy tree, the greedy maximizer is
    optimal. With ``check=True`` the root value is compared with an
    exhaustive sweep (skipped when that sweep would exceed ``cap``).
    """
    if not alpha > 1:
        raise ValueError("alpha must be > 1")
    m0, m1 = pair.m0, pair.m1
    horizon = pair.horizon
    moment: dict = {}
    choice: dict = {}

    def value(h):
        if len(h) == horizon:
            return 1.0
        best, best_q = -1.0, None
        for q in m0.allowed_queries(h):
            p, r = m0.row(h, q), m1.row(h, q)
            total = 0.0
            for j, y in enumerate(m0.response_labels(q)):
                child = value(h + ((q, y),))
                if p[j] <= 0.0:
                    continue
                if r[j] <= 0.0:
                    total = math.inf
                    continue
                total += float(p[j]) ** alpha * float(r[j]) ** (1.0 - alpha) * child
            if total > best:
                best, best_q = total, q
        moment[h] = best
        choice[h] = best_q
        return best

    value(())
    monitor = BudgetMonitor(alpha, moment, choice, horizon)
    if check:
        cap = DEFAULT_CAP if cap is None else cap
        if count_adversaries(m0) <= cap:
            brute = max_renyi_one_direction(pair, alpha, cap=cap)
            dp = monitor.divergence
            if not (math.isinf(dp) and math.isinf(brute)) and abs(dp - brute) > 1e-9 * max(1.0, abs(brute)):
                raise AssertionError(f"budget monitor {dp!r} disagrees with exhaustive sweep {brute!r}")
    return monitor


def max_renyi_one_direction(pair: SystemPair, alpha: float, history=(), cap: int | None = None) -> float:
    """Exhaustive ``sup_A D_alpha(IT(A:M^0|_h) || IT(A:M^1|_h))``."""
    from .engine import enumerate_adversaries, transcript_distribution

    m0, m1 = pair.m0, pair.m1
    if history:
        m0, m1 = ConditionedSystem(m0, history), ConditionedSystem(m1, history)
    best = -math.inf
    for adv in enumerate_adversaries(m0, cap=cap):
        d = renyi_divergence(transcript_distribution(adv, m0), transcript_distribution(adv, m1), alpha)
        best = max(best, d)
    return best


def rdp_level(pair: SystemPair, alpha: float) -> float:
    """Exact ``(alpha, eps)``-RDP level: worst case over adversaries and directions."""
    return max(budget_monitor(pair, alpha).divergence, budget_monitor(pair.swapped(), alpha).divergence)


# -- tracker check -------------------------------------------------------------


def _conditionals(joint: np.ndarray):
    marg = joint.sum(axis=1)
    cond = joint / marg[:, None]
    return marg, cond


def tracker_hypothesis(P, Q, beta: float, B: float) -> bool:
    """``P <=_beta e^B Q`` on the joint space."""
    P, Q = np.asarray(P, float), np.asarray(Q, float)
    return check_dominance(P.ravel(), math.exp(B) * Q.ravel(), beta)


def check_tracker(P, Q, beta: float, B: float, tol: float = 1e-9) -> bool:
    """Whether ``P_1 * ell_1^(1/beta) <=_beta e^B Q_1`` for joint laws ``P, Q``.

    ``P`` and ``Q`` are ``|Y1| x |Y2|`` arrays with full support.
    ``ell_1(y1) = exp(D_alpha(P_2|y1 || Q_2|y1))`` with ``alpha`` the
    conjugate of ``beta``. Whenever :func:`tracker_hypothesis` holds the
    result must be ``True``.
    """
    P, Q = np.asarray(P, float), np.asarray(Q, float)
    if P.ndim != 2 or P.shape != Q.shape:
        raise ValueError("P and Q must be joint tables of equal shape")
    if np.any(P <= 0) or np.any(Q <= 0):
        raise ValueError("the tracker check needs supp(P) = supp(Q) = Y1 x Y2")
    alpha = conjugate(beta)
    p1, p2 = _conditionals(P)
    q1, q2 = _conditionals(Q)
    ell = np.array([math.exp(renyi_divergence(p2[i], q2[i], alpha)) for i in range(P.shape[0])])
    return check_dominance(p1 * ell ** (1.0 / beta), math.exp(B) * q1, beta, tol=tol)


# -- concurrent composition ------------------------------------------------------


def verify_concurrent_rdp(pairs: Sequence[SystemPair], alpha: float, eps_list: Sequence[float],
                          cap: int | None = None, method: str = "enumerate",
                          jobs: int = 1, tol: float = EQ_TOL) -> VerificationVerdict:
    """Check that ``COMP`` of the pairs stays within ``(alpha, sum eps_i)``.

    ``achieved`` in the verdict is the worst two-sided ``D_alpha`` found;
    ``verdict.gap`` is the distance to the additive bound.
    """
    if len(pairs) != len(eps_list):
        raise ValueError("one epsilon per pair")
    bound = math.fsum(eps_list)
    worst = max_renyi(compose_pairs(pairs), alpha, cap=cap, method=method, jobs=jobs)
    return VerificationVerdict(
        worst.divergence <= bound + tol,
        {"alpha": alpha, "bound": bound, "eps_list": list(eps_list)},
        worst.divergence,
        worst,
        0,
        method,
    )


# -- budget calculus ---------------------------------------------------------------


def cdp_compose(budgets: Sequence) -> ZCDP | TCDP | RDP:
    """Compose homogeneous RDP / zCDP / tCDP budgets.

    zCDP: rhos add. tCDP: rhos add and omega is the smallest one (the
    range of alphas every mechanism covers). RDP: epsilons add at a shared
    alpha.
    """
    budgets = list(budgets)
    if not budgets:
        raise ValueError("nothing to compose")
    kinds = {type(b) for b in budgets}
    if len(kinds) != 1:
        raise TypeError(f"mixed budget variants: {sorted(k.__name__ for k in kinds)}")
    kind = kinds.pop()
    if kind is ZCDP:
        return ZCDP(math.fsum(b.rho for b in budgets))
    if kind is TCDP:
        return TCDP(math.fsum(b.rho for b in budgets), min(b.omega for b in budgets))
    if kind is RDP:
        alphas = {b.alpha for b in budgets}
        if len(alphas) != 1:
            raise ValueError("RDP budgets must share alpha")
        return RDP(alphas.pop(), math.fsum(b.epsilon for b in budgets))
    raise TypeError(f"cannot compose {kind.__name__} budgets here")


def rdp_to_dp(budget, delta: float, alpha: float | None = None) -> ApproxDP:
    """Standard conversion ``eps = eps_rdp + log(1/delta) / (alpha - 1)``.

    zCDP/tCDP budgets are first read at ``alpha`` (required for them).
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if isinstance(budget, (ZCDP, TCDP)):
        if alpha is None:
            raise ValueError("alpha is required to convert a concentrated-DP budget")
        budget = budget.to_rdp(alpha)
    if not isinstance(budget, RDP):
        raise TypeError("expected an RDP, zCDP or tCDP budget")
    return ApproxDP(budget.epsilon + math.log(1.0 / delta) / (budget.alpha - 1.0), delta)

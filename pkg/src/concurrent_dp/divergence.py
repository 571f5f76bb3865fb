"""Hockey-stick and Renyi divergences, and worst-case privacy verification.

Both verifiers quantify over every deterministic adversary. Two routes are
available: ``method="enumerate"`` scores each adversary from
:func:`~concurrent_dp.engine.enumerate_adversaries` explicitly, and
``method="dp"`` solves the same supremum by backward induction over
histories (the objective is a sum over a strategy tree of nonnegative
per-leaf terms, so the greedy choice at each node is optimal).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Mapping

import numpy as np
from scipy.special import logsumexp

from .core import EQ_TOL, Adversary, SystemPair, path_products
from .engine import TranscriptDistribution, enumerate_adversaries, transcript_distribution


def _aligned(P, Q):
    if isinstance(P, TranscriptDistribution):
        P = P.probs
    if isinstance(Q, TranscriptDistribution):
        Q = Q.probs
    if isinstance(P, Mapping) or isinstance(Q, Mapping):
        keys = list(dict.fromkeys(list(P) + list(Q)))
        p = np.array([P.get(k, 0.0) for k in keys], dtype=float)
        q = np.array([Q.get(k, 0.0) for k in keys], dtype=float)
        return keys, p, q
    p = np.asarray(P, dtype=float)
    q = np.asarray(Q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("P and Q must live on the same universe")
    return list(range(p.size)), p.ravel(), q.ravel()


def hockey_stick(P, Q, epsilon: float) -> float:
    """``sum_t max(P(t) - e^eps Q(t), 0)``: the least delta valid at ``epsilon``."""
    _, p, q = _aligned(P, Q)
    return float(math.fsum(np.maximum(p - math.exp(epsilon) * q, 0.0)))


def optimal_event(P, Q, epsilon: float) -> set:
    """The event ``{t : P(t) > e^eps Q(t)}`` attaining :func:`hockey_stick`."""
    keys, p, q = _aligned(P, Q)
    mask = p > math.exp(epsilon) * q
    return {k for k, m in zip(keys, mask) if m}


def renyi_divergence(P, Q, alpha: float) -> float:
    """``D_alpha(P || Q)`` in nats; ``inf`` when ``P`` is not dominated by ``Q``.

    Accumulates ``log sum P^alpha Q^(1-alpha)`` in the log domain.
    """
    if not alpha > 1:
        raise ValueError("alpha must be > 1")
    _, p, q = _aligned(P, Q)
    on = p > 0
    if np.any(on & (q <= 0)):
        return math.inf
    logs = alpha * np.log(p[on]) + (1.0 - alpha) * np.log(q[on])
    val = float(logsumexp(logs)) / (alpha - 1.0)
    if -1e-15 < val < 0.0:
        val = 0.0
    return val


def renyi_moment(P, Q, alpha: float) -> float:
    """``sum P^alpha Q^(1-alpha)`` (``= exp((alpha-1) D_alpha)``)."""
    _, p, q = _aligned(P, Q)
    on = p > 0
    if np.any(on & (q <= 0)):
        return math.inf
    return float(np.sum(p[on] ** alpha * q[on] ** (1.0 - alpha)))


# -- dominance / duality ------------------------------------------------------


def conjugate(x: float) -> float:
    """Holder conjugate ``x / (x - 1)``."""
    if not x > 1:
        raise ValueError("Holder exponent must be > 1")
    return x / (x - 1.0)


def check_dominance(P, Q, beta: float, tol: float = 1e-9) -> bool:
    """Whether ``||h||_{P,1} <= ||h||_{Q,beta}`` for every ``h >= 0``.

    ``P`` and ``Q`` are nonnegative measures on a common finite universe. The
    supremum of the ratio over ``h`` is ``||P/Q||_{Q,alpha}`` with ``alpha``
    the conjugate of ``beta``, so the check is ``sum P^alpha Q^(1-alpha) <= 1``
    (up to relative tolerance ``tol``).
    """
    _, p, q = _aligned(P, Q)
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("measures must be nonnegative")
    alpha = conjugate(beta)
    on = p > 0
    if np.any(on & (q <= 0)):
        return False
    log_norm = logsumexp(alpha * np.log(p[on]) + (1.0 - alpha) * np.log(q[on])) if on.any() else -np.inf
    return bool(log_norm <= math.log1p(tol))


def dual_witness_h(P, Q, alpha: float) -> np.ndarray:
    """Maximizer ``h(y) = (P(y)/Q(y))^(alpha-1)`` of the Holder ratio.

    If some point has ``Q = 0 < P`` the indicator of the first such point is
    returned instead; it violates every finite dominance bound.
    """
    _, p, q = _aligned(P, Q)
    bad = (p > 0) & (q <= 0)
    if bad.any():
        h = np.zeros_like(p)
        h[np.argmax(bad)] = 1.0
        return h
    h = np.zeros_like(p)
    on = q > 0
    h[on] = (p[on] / q[on]) ** (alpha - 1.0)
    return h


def holder_ratio(h, P, Q, beta: float) -> float:
    """``||h||_{P,1} / ||h||_{Q,beta}`` (``inf`` if the denominator vanishes)."""
    _, p, q = _aligned(P, Q)
    h = np.asarray(h, dtype=float).ravel()
    num = float(np.dot(p, h))
    den = float(np.dot(q, h**beta)) ** (1.0 / beta)
    if den == 0.0:
        return math.inf if num > 0 else 0.0
    return num / den


# -- worst-case verification --------------------------------------------------


@dataclass(frozen=True)
class HockeyStickResult:
    epsilon: float
    delta: float
    witness_set: frozenset = field(repr=False)
    witness_adversary: Adversary | None = field(repr=False)
    direction: int = 0


@dataclass(frozen=True)
class RenyiResult:
    alpha: float
    divergence: float
    witness_adversary: Adversary | None = field(repr=False)
    direction: int = 0

    @property
    def beta(self) -> float:
        return conjugate(self.alpha)


@dataclass(frozen=True)
class VerificationVerdict:
    passed: bool
    claim: dict
    achieved: float
    worst: Any = field(repr=False)
    adversaries_checked: int = 0
    method: str = "enumerate"

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    @property
    def gap(self) -> float:
        """Slack between the claimed bound and the worst value found."""
        bound = self.claim.get("delta", self.claim.get("bound"))
        return bound - self.achieved


def _hs_score(adv, pair, epsilon):
    P = transcript_distribution(adv, pair.m0)
    Q = transcript_distribution(adv, pair.m1)
    return hockey_stick(P, Q, epsilon), hockey_stick(Q, P, epsilon)


def _renyi_score(adv, pair, alpha):
    P = transcript_distribution(adv, pair.m0)
    Q = transcript_distribution(adv, pair.m1)
    return renyi_divergence(P, Q, alpha), renyi_divergence(Q, P, alpha)


def _sweep(pair: SystemPair, score, cap: int | None, jobs: int):
    """Return ``(best_value, best_direction, best_adversary, count)``."""
    advs = enumerate_adversaries(pair.m0, cap=cap)
    best = (-math.inf, 0, None)
    n = 0
    if jobs > 1:
        advs = list(advs)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(partial(score, pair=pair), advs, chunksize=max(1, len(advs) // (4 * jobs))))
        items = zip(advs, scores)
    else:
        items = ((a, score(a, pair=pair)) for a in advs)
    for adv, (v0, v1) in items:
        n += 1
        for b, v in ((0, v0), (1, v1)):
            if v > best[0]:
                best = (v, b, adv)
    return best[0], best[1], best[2], n


def max_hockey_stick_dp(pair: SystemPair, epsilon: float, b: int = 0) -> HockeyStickResult:
    """Exact ``sup_A hockey_stick(IT(A:M^b), IT(A:M^(1-b)), epsilon)`` by backward induction."""
    mb, mo = pair[b], pair[1 - b]
    horizon = pair.horizon
    scale = math.exp(epsilon)
    choice: dict = {}

    def value(h, pb, po):
        if len(h) == horizon:
            return max(pb - scale * po, 0.0)
        if pb <= 0.0:
            # nothing left to gain below a branch M^b never takes
            choice[h] = mb.allowed_queries(h)[0]
            return 0.0
        best, best_q = -1.0, None
        for q in mb.allowed_queries(h):
            rb, ro = mb.row(h, q), mo.row(h, q) if po > 0 else None
            total = 0.0
            for j, y in enumerate(mb.response_labels(q)):
                cb = pb * float(rb[j])
                co = po * float(ro[j]) if ro is not None else 0.0
                if cb > 0.0:
                    total += value(h + ((q, y),), cb, co)
            if total > best:
                best, best_q = total, q
        choice[h] = best_q
        return best

    delta = value((), 1.0, 1.0)
    adv = _greedy_adversary(mb, choice, horizon)
    P = transcript_distribution(adv, mb)
    Q = transcript_distribution(adv, mo)
    return HockeyStickResult(epsilon, delta, frozenset(optimal_event(P, Q, epsilon)), adv, b)


def _greedy_adversary(system, choice, horizon) -> Adversary:
    strategy = {}

    def walk(h):
        if len(h) == horizon:
            return
        q = choice.get(h, system.allowed_queries(h)[0])
        strategy[h] = q
        for y in system.response_labels(q):
            walk(h + ((q, y),))

    walk(())
    return Adversary(strategy, horizon)


def max_hockey_stick(pair: SystemPair, epsilon: float, cap: int | None = None,
                     method: str = "enumerate", jobs: int = 1) -> HockeyStickResult:
    """Worst-case delta at ``epsilon`` over adversaries and both directions."""
    if method == "dp":
        r0 = max_hockey_stick_dp(pair, epsilon, 0)
        r1 = max_hockey_stick_dp(pair, epsilon, 1)
        return r0 if r0.delta >= r1.delta else r1
    if method != "enumerate":
        raise ValueError(f"unknown method {method!r}")
    value, b, adv, _ = _sweep(pair, partial(_hs_score, epsilon=epsilon), cap, jobs)
    P = transcript_distribution(adv, pair[b])
    Q = transcript_distribution(adv, pair[1 - b])
    return HockeyStickResult(epsilon, value, frozenset(optimal_event(P, Q, epsilon)), adv, b)


def verify_approx_dp(pair: SystemPair, epsilon: float, delta: float, cap: int | None = None,
                     method: str = "enumerate", jobs: int = 1, tol: float = EQ_TOL) -> VerificationVerdict:
    """PASS iff every adversary, in both directions, has hockey-stick ``<= delta + tol``."""
    if method == "enumerate":
        value, b, adv, n = _sweep(pair, partial(_hs_score, epsilon=epsilon), cap, jobs)
        P = transcript_distribution(adv, pair[b])
        Q = transcript_distribution(adv, pair[1 - b])
        worst = HockeyStickResult(epsilon, value, frozenset(optimal_event(P, Q, epsilon)), adv, b)
    else:
        worst = max_hockey_stick(pair, epsilon, method=method)
        n = 0
    return VerificationVerdict(
        worst.delta <= delta + tol,
        {"epsilon": epsilon, "delta": delta},
        worst.delta,
        worst,
        n,
        method,
    )


def max_renyi(pair: SystemPair, alpha: float, cap: int | None = None,
              method: str = "enumerate", jobs: int = 1) -> RenyiResult:
    """Worst-case ``D_alpha`` over adversaries and both directions."""
    if method == "dp":
        from .renyi import budget_monitor

        r = [budget_monitor(p, alpha) for p in (pair, pair.swapped())]
        b = 0 if r[0].divergence >= r[1].divergence else 1
        return RenyiResult(alpha, r[b].divergence, r[b].worst_adversary(), b)
    value, b, adv, _ = _sweep(pair, partial(_renyi_score, alpha=alpha), cap, jobs)
    return RenyiResult(alpha, value, adv, b)


def verify_rdp(pair: SystemPair, alpha: float, bound: float, cap: int | None = None,
               method: str = "enumerate", jobs: int = 1, tol: float = EQ_TOL) -> VerificationVerdict:
    """PASS iff every adversary, in both directions, has ``D_alpha <= bound + tol``."""
    if method == "enumerate":
        value, b, adv, n = _sweep(pair, partial(_renyi_score, alpha=alpha), cap, jobs)
        worst = RenyiResult(alpha, value, adv, b)
    else:
        worst = max_renyi(pair, alpha, method=method)
        n = 0
    return VerificationVerdict(
        worst.divergence <= bound + tol,
        {"alpha": alpha, "bound": bound},
        worst.divergence,
        worst,
        n,
        method,
    )


def transcript_products(pair: SystemPair) -> tuple:
    """Path products of both systems (used by the dp routes and tests)."""
    return path_products(pair.m0), path_products(pair.m1)

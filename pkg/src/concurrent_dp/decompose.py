"""Decompose an (eps, delta)-indistinguishable pair into approximate randomized response.

Given ``(M^0, M^1)`` this builds four systems ``E^0, E^1, N'^0, N'^1`` with

    M^b = delta * E^b + (1 - delta) * (p * N'^b + q * N'^(1-b)),
    p = e^eps / (1 + e^eps),  q = 1 / (1 + e^eps),

holding on the path product of every transcript. The pipeline is
``control_tables -> build_error_systems -> subtract_system -> pure_split``.

Everything works on path products ``M(h) = prod_i Pr[y_i | h_<i, x_i]``
over the full history tree; kernels are recovered at the end by ratios of
consecutive depths.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    EQ_TOL,
    Adversary,
    InteractiveSystem,
    SystemPair,
    all_histories,
    path_products,
)
from .engine import TranscriptDistribution, enumerate_adversaries, transcript_distribution

TINY_EPSILON = 1e-9
# differences below this fraction of a mass are rounding residue
_ROUNDING = 8 * np.finfo(float).eps


class ConstructionError(RuntimeError):
    """A decomposition stage failed; ``stage`` names which one."""

    def __init__(self, stage: str, message: str, history=None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.history = history


def _full_space(pair: SystemPair):
    for m in (pair.m0, pair.m1):
        if not isinstance(m, InteractiveSystem):
            raise TypeError("decomposition needs table-backed systems (InteractiveSystem)")
    return pair.m0.queries, pair.m0.responses, pair.horizon


def _children(h, x, responses):
    return [h + ((x, y),) for y in responses]


@dataclass(frozen=True)
class ControlTables:
    """``lower[b][(h, x)]`` and ``upper[b][h]`` for both directions.

    ``top[b][h] = max_x lower[b][(h, x)]`` for ``len(h) < T``, and at full
    depth ``max(M^b(h) - e^eps M^(1-b)(h), 0)``; it seeds the error systems.
    """

    epsilon: float
    lower: tuple = field(repr=False)
    upper: tuple = field(repr=False)
    top: tuple = field(repr=False)
    products: tuple = field(repr=False)

    def start(self, b: int) -> float:
        """``max_x Lower^b(empty, x)``: the worst delta over adversaries in direction ``b``."""
        return self.top[b][()]


def control_tables(pair: SystemPair, epsilon: float, delta: float | None = None,
                   tol: float = EQ_TOL) -> ControlTables:
    """Backward recursion for ``Lower`` plus the ``Upper`` table.

    When ``delta`` is given, asserts ``Lower^b(empty, x) <= delta`` for every
    ``x`` and ``b``. The domination ``Lower^b <= Upper^b + e^-eps Lower^(1-b)``
    is asserted at every node regardless.
    """
    queries, responses, horizon = _full_space(pair)
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    scale, r = math.exp(epsilon), math.exp(-epsilon)
    prods = (path_products(pair.m0), path_products(pair.m1))
    lower = ({}, {})
    top = ({}, {})
    upper = tuple({h: prods[b][h] - r * prods[1 - b][h] for h in prods[b]} for b in (0, 1))

    histories = all_histories(queries, responses, horizon)
    for b in (0, 1):
        for h in histories:
            if len(h) == horizon - 1:
                for x in queries:
                    for c in _children(h, x, responses):
                        top[b][c] = max(prods[b][c] - scale * prods[1 - b][c], 0.0)
        for h in reversed(histories):
            for x in queries:
                lower[b][(h, x)] = math.fsum(top[b][c] for c in _children(h, x, responses))
            top[b][h] = max(lower[b][(h, x)] for x in queries)

    for h in histories:
        for x in queries:
            for b in (0, 1):
                lhs = lower[b][(h, x)]
                rhs = upper[b][h] + r * lower[1 - b][(h, x)]
                if lhs > rhs + tol:
                    raise ConstructionError(
                        "control_tables",
                        f"Lower^{b} exceeds Upper^{b} + e^-eps Lower^{1 - b} by {lhs - rhs:.3g}",
                        (h, x),
                    )
    if delta is not None:
        for b in (0, 1):
            for x in queries:
                v = lower[b][((), x)]
                if v > delta + tol:
                    raise ConstructionError(
                        "control_tables",
                        f"Lower^{b}(empty, {x!r}) = {v!r} exceeds delta = {delta!r}: "
                        "the pair is not indistinguishable at this level",
                        ((), x),
                    )
    return ControlTables(epsilon, lower, upper, top, prods)


def _close_gaps(a, c, u0, u1, g0, g1, r, a_star):
    """Raise ``(a, c)`` as far as ``a <= u0 + r c``, ``c <= u1 + r a`` and the gaps allow.

    Returns the greatest feasible point ``(a_f, c_f)`` dominating ``(a, c)``
    with ``a_f <= a + g0`` and ``c_f <= c + g1``. It is the greatest fixed
    point of ``a = min(A, u0 + r c)``, ``c = min(C, u1 + r a)``, namely
    ``a_f = min(A, u0 + r C, a_star)`` where ``a_star`` is the ``a`` at which
    both constraints are tight. With ``u_b = M^b - r M^(1-b)`` that point is
    ``(M^0, M^1)``; callers pass ``M^0`` directly because the textbook form
    ``(u0 + r u1) / (1 - r^2)`` loses all precision as ``r -> 1``.
    """
    A, C = a + g0, c + g1
    a_f = max(a, min(A, u0 + r * C, a_star))
    c_f = max(c, min(C, u1 + r * a_f))
    return a_f, c_f


def _scaled_error_products(pair: SystemPair, epsilon: float, delta: float,
                           tables: ControlTables, tol: float) -> tuple:
    """``delta * E^b(h)`` on every history, built forward from the root."""
    queries, responses, horizon = _full_space(pair)
    r = math.exp(-epsilon)
    D = ({(): delta}, {(): delta})
    for h in all_histories(queries, responses, horizon):
        for x in queries:
            kids = _children(h, x, responses)
            vals = [[tables.top[b][c] for c in kids] for b in (0, 1)]
            gaps = [D[b][h] - math.fsum(vals[b]) for b in (0, 1)]
            for b in (0, 1):
                if gaps[b] < -tol:
                    raise ConstructionError(
                        "build_error_systems",
                        f"seed mass exceeds parent mass by {-gaps[b]:.3g} in direction {b}",
                        (h, x),
                    )
                gaps[b] = max(gaps[b], 0.0)
            for j, c in enumerate(kids):
                if gaps[0] <= 0.0 and gaps[1] <= 0.0:
                    break
                a, cc = vals[0][j], vals[1][j]
                a_f, c_f = _close_gaps(a, cc, tables.upper[0][c], tables.upper[1][c],
                                       gaps[0], gaps[1], r, tables.products[0][c])
                gaps[0] -= a_f - a
                gaps[1] -= c_f - cc
                vals[0][j], vals[1][j] = a_f, c_f
            scale = max(D[0][h], D[1][h], 1.0)
            if max(abs(gaps[0]), abs(gaps[1])) > tol * scale:
                raise ConstructionError(
                    "build_error_systems",
                    f"gap closure left residual {gaps!r}; delta is below the true level",
                    (h, x),
                )
            for b in (0, 1):
                for j, c in enumerate(kids):
                    D[b][c] = vals[b][j]
    return D


def _uniform_system(queries, responses, horizon, name=""):
    return InteractiveSystem.from_function(
        queries, responses, horizon, lambda h, x: np.full(len(responses), 1.0 / len(responses)), name
    )


def build_error_systems(pair: SystemPair, epsilon: float, delta: float,
                        tol: float = EQ_TOL) -> tuple:
    """The two error systems ``(E^0, E^1)``.

    Requirements, at every node: ``delta E^b >= seed^b`` (seeded by the
    ``Lower`` table) and ``delta E^b <= Upper^b + e^-eps delta E^(1-b)``.
    Children are processed in the declared response order.
    """
    queries, responses, horizon = _full_space(pair)
    if delta == 0:
        return tuple(_uniform_system(queries, responses, horizon, f"E{b}") for b in (0, 1))
    if not epsilon > 0:
        raise ValueError("error-system construction needs epsilon > 0")
    tables = control_tables(pair, epsilon, delta, tol)
    D = _scaled_error_products(pair, epsilon, delta, tables, tol)
    out = []
    for b in (0, 1):
        rows = {}
        uniform = np.full(len(responses), 1.0 / len(responses))
        for h in all_histories(queries, responses, horizon):
            for x in queries:
                kids = np.array([D[b][c] for c in _children(h, x, responses)])
                total = kids.sum()
                rows[(h, x)] = kids / total if D[b][h] > 0.0 and total > 0.0 else uniform
        out.append(InteractiveSystem(queries, responses, horizon, rows, f"E{b}"))
    return tuple(out)


def subtract_system(m: InteractiveSystem, e: InteractiveSystem, delta: float,
                    tol: float = 1e-12) -> InteractiveSystem:
    """``N = (M - delta E) / (1 - delta)``, so that ``M = delta E + (1 - delta) N``."""
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    if delta == 0:
        return m
    pm, pe = path_products(m), path_products(e)
    prods = {}
    for h, mass in pm.items():
        # tolerance applies before dividing; near delta = 1 the quotient amplifies rounding
        diff = mass - delta * pe[h]
        if diff < -tol:
            raise ConstructionError(
                "subtract_system",
                f"M < delta E on transcript {h!r} (difference {diff:.3g})",
                h,
            )
        if diff <= _ROUNDING * mass:
            diff = 0.0
        prods[h] = diff / (1.0 - delta)
    return InteractiveSystem.from_products(m.queries, m.responses, m.horizon, prods, f"N({m.name})")


def check_pure(n0, n1, epsilon: float, tol: float = EQ_TOL):
    """Raise unless ``N^b <= e^eps N^(1-b)`` on every full transcript."""
    p = (path_products(n0), path_products(n1))
    scale = math.exp(epsilon)
    horizon = n0.horizon
    for h in p[0]:
        if len(h) != horizon:
            continue
        for b in (0, 1):
            excess = p[b][h] - scale * p[1 - b][h]
            if excess > tol:
                raise ConstructionError(
                    "pure_split",
                    f"ratio bound fails on transcript {h!r}: N^{b} exceeds e^eps N^{1 - b} by {excess:.3g}",
                    h,
                )
    return p


def pure_split(n0, n1, epsilon: float, tol: float = EQ_TOL) -> tuple:
    """Solve ``N^b = p N'^b + q N'^(1-b)`` for nonnegative ``(N'^0, N'^1)``.

    The solution is ``N'^b = (e^eps N^b - N^(1-b)) / (e^eps - 1)``; it is
    nonnegative exactly when the pair is ``(eps, 0)``-indistinguishable.
    For ``epsilon`` below ``1e-6`` the division is ill-conditioned; there the
    inputs must agree and are returned unchanged.
    """
    p = check_pure(n0, n1, epsilon, tol)
    if epsilon < 1e-6:
        gap = max(abs(p[0][h] - p[1][h]) for h in p[0])
        if gap > max(tol, 10 * epsilon):
            raise ConstructionError("pure_split", f"near-zero epsilon but systems differ by {gap:.3g}")
        return n0, n1
    scale = math.exp(epsilon)
    denom = math.expm1(epsilon)
    out = []
    for b in (0, 1):
        prods = {h: max((scale * p[b][h] - p[1 - b][h]) / denom, 0.0) for h in p[b]}
        prods[()] = 1.0
        out.append(InteractiveSystem.from_products(n0.queries, n0.responses, n0.horizon, prods, f"N'{b}"))
    return tuple(out)


@dataclass(frozen=True)
class Decomposition:
    """``M^b = delta E^b + (1-delta)(p N'^b + q N'^(1-b))`` per transcript.

    ``n0``/``n1`` are the split systems ``N'^0``/``N'^1``. ``epsilon`` is the
    value actually used (``1e-9`` when zero was requested).
    """

    e0: InteractiveSystem
    e1: InteractiveSystem
    n0: InteractiveSystem
    n1: InteractiveSystem
    epsilon: float
    delta: float

    def error(self, b: int):
        return (self.e0, self.e1)[b]

    def pure(self, b: int):
        return (self.n0, self.n1)[b]

    @property
    def weights(self) -> tuple:
        """Branch weights ``(delta, (1-delta) p, (1-delta) q)``."""
        p = 1.0 / (1.0 + math.exp(-self.epsilon))
        return self.delta, (1.0 - self.delta) * p, (1.0 - self.delta) * (1.0 - p)

    def branches(self, b: int) -> tuple:
        """Systems selected by the three branches for secret ``b``."""
        return self.error(b), self.pure(b), self.pure(1 - b)

    def mixture_products(self, b: int) -> dict:
        w = self.weights
        parts = [path_products(s) for s in self.branches(b)]
        return {h: math.fsum(wi * part[h] for wi, part in zip(w, parts)) for h in parts[0]}


def decompose(pair: SystemPair, epsilon: float, delta: float, check: bool = True,
              tol: float = EQ_TOL) -> Decomposition:
    """Full pipeline; failures carry the stage name in ``ConstructionError.stage``."""
    queries, responses, horizon = _full_space(pair)
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    eps = TINY_EPSILON if epsilon == 0 else epsilon
    e0, e1 = build_error_systems(pair, eps, delta, tol)
    n0 = subtract_system(pair.m0, e0, delta)
    n1 = subtract_system(pair.m1, e1, delta)
    # N carries rounding of order ulp / (1 - delta); the identity weights it back by (1 - delta)
    s0, s1 = pure_split(n0, n1, eps, tol + 4 * _ROUNDING * horizon / (1.0 - delta))
    dec = Decomposition(e0, e1, s0, s1, eps, delta)
    if check:
        gap = identity_gap(dec, pair)
        if gap > tol:
            raise ConstructionError("identity", f"mixture identity off by {gap:.3g}")
    return dec


def identity_gap(dec: Decomposition, pair: SystemPair) -> float:
    """Largest per-transcript gap of the mixture identity, over the full history tree.

    A deterministic adversary's transcript law is the path product on the
    histories it reaches, so this bounds the gap for every adversary at once.
    """
    worst = 0.0
    for b in (0, 1):
        target = path_products(pair[b])
        mix = dec.mixture_products(b)
        worst = max(worst, max(abs(target[h] - mix[h]) for h in target))
    return worst


def check_identity(dec: Decomposition, pair: SystemPair, cap: int | None = None) -> float:
    """Largest identity gap over every enumerated deterministic adversary and transcript."""
    w = dec.weights
    worst = 0.0
    for adv in enumerate_adversaries(pair.m0, cap=cap):
        for b in (0, 1):
            target = transcript_distribution(adv, pair[b])
            parts = [transcript_distribution(adv, s) for s in dec.branches(b)]
            mix = TranscriptDistribution({})
            for wi, part in zip(w, parts):
                mix = part.mix(wi, mix)
            worst = max(worst, target.max_gap(mix))
    return worst


def simulate_via_rr(decomps: Sequence[Decomposition], adv: Adversary, b: int) -> TranscriptDistribution:
    """Exact output law of the simulator that draws one approximate-RR outcome per system.

    For each system ``i`` an independent three-way draw picks ``E_i^b``
    (weight ``delta_i``), ``N'_i^b`` or ``N'_i^(1-b)``; the adversary then
    interacts with the concurrent composition of the picked systems. The
    result equals ``IT(adv : COMP(M_1^b, ..., M_k^b))``.
    """
    decomps = list(decomps)
    out = TranscriptDistribution({})
    choices = [list(zip(d.weights, d.branches(b))) for d in decomps]
    for combo in itertools.product(*choices):
        weight = math.prod(w for w, _ in combo)
        if weight == 0.0:
            continue
        dist = transcript_distribution(adv, [s for _, s in combo])
        out = dist.mix(weight, out)
    return out

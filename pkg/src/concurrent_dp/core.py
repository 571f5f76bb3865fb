"""Finite interactive systems, adversaries and concurrent composition.

A system answers a query ``x`` given the interaction history
``((x_1, y_1), ..., (x_t, y_t))`` with a distribution over its response
labels. Everything here is finite: label spaces are tuples, horizons are
fixed, and kernels are stored as tables keyed by ``(history, query)``.

Adversaries are deterministic. For hockey-stick divergence the objective is
linear in a mixture of adversaries, and ``sum P^a Q^(1-a)`` is jointly convex
for ``a > 1``, so the supremum over randomized adversaries is attained at a
deterministic one. The library therefore never reifies randomized
adversaries.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterator, Mapping, Sequence

import numpy as np

Label = Hashable
History = tuple  # tuple of (query, response) pairs

ROW_TOL = 1e-12
EQ_TOL = 1e-9

SKIP = "__SKIP__"
ACK = "__ACK__"


class ExhaustedSystemError(ValueError):
    """A query was routed to a sub-system whose horizon is used up."""


class MissingRowError(KeyError):
    pass


def _unique(labels: Sequence[Label], what: str) -> tuple:
    labels = tuple(labels)
    if not labels:
        raise ValueError(f"{what} space must be nonempty")
    if len(set(labels)) != len(labels):
        raise ValueError(f"{what} labels must be unique: {labels!r}")
    return labels


def _frozen(row) -> np.ndarray:
    arr = np.array(row, dtype=float)
    arr.setflags(write=False)
    return arr


class System:
    """Common interface of every finite interactive system.

    Subclasses provide ``queries``, ``responses``, ``horizon`` and implement
    :meth:`row`. ``response_labels(q)`` is the label order of ``row(h, q)``.
    """

    queries: tuple
    responses: tuple
    horizon: int

    def allowed_queries(self, history: History) -> tuple:
        if len(history) >= self.horizon:
            return ()
        return self.queries

    def response_labels(self, query: Label) -> tuple:
        return self.responses

    def row(self, history: History, query: Label) -> np.ndarray:
        raise NotImplementedError

    def histories(self, depth: int | None = None) -> Iterator[History]:
        """All histories of length ``< depth`` (default: horizon) in DFS order."""
        depth = self.horizon if depth is None else depth

        def walk(h):
            yield h
            if len(h) + 1 >= depth:
                return
            for q in self.allowed_queries(h):
                for y in self.response_labels(q):
                    yield from walk(h + ((q, y),))

        if depth <= 0:
            return iter(())
        return walk(())


@dataclass(frozen=True, eq=False)
class InteractiveSystem(System):
    """Table-backed system: ``rows[(history, query)]`` is a probability vector."""

    queries: tuple
    responses: tuple
    horizon: int
    rows: Mapping[tuple, np.ndarray] = field(repr=False)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "queries", _unique(self.queries, "query"))
        object.__setattr__(self, "responses", _unique(self.responses, "response"))
        if int(self.horizon) < 1:
            raise ValueError("horizon must be a positive integer")
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(
            self, "rows", {key: _frozen(r) for key, r in dict(self.rows).items()}
        )

    def row(self, history, query):
        try:
            return self.rows[(tuple(history), query)]
        except KeyError:
            raise MissingRowError((history, query)) from None

    @classmethod
    def from_function(
        cls,
        queries: Sequence[Label],
        responses: Sequence[Label],
        horizon: int,
        kernel: Callable[[History, Label], Sequence[float]],
        name: str = "",
    ) -> "InteractiveSystem":
        """Tabulate ``kernel(history, query)`` over every history shorter than ``horizon``."""
        queries, responses = tuple(queries), tuple(responses)
        rows = {}
        for h in all_histories(queries, responses, horizon):
            for x in queries:
                rows[(h, x)] = kernel(h, x)
        return cls(queries, responses, horizon, rows, name)

    @classmethod
    def from_products(
        cls,
        queries: Sequence[Label],
        responses: Sequence[Label],
        horizon: int,
        products: Mapping[History, float],
        name: str = "",
    ) -> "InteractiveSystem":
        """Recover kernels from path products by consecutive-depth ratios.

        ``products`` maps every history of length ``1..horizon`` to the joint
        mass ``prod_i Pr[y_i | h_<i, x_i]``; the empty history has mass 1.
        Rows under a zero-mass prefix are filled with the uniform law.
        """
        queries, responses = tuple(queries), tuple(responses)
        uniform = np.full(len(responses), 1.0 / len(responses))
        rows = {}
        for h in all_histories(queries, responses, horizon):
            parent = 1.0 if not h else products[h]
            for x in queries:
                child = np.array([products[h + ((x, y),)] for y in responses])
                child = np.where(child < 0.0, 0.0, child)
                total = child.sum()
                if parent <= 0.0 or total <= 0.0:
                    rows[(h, x)] = uniform
                else:
                    # children sum to the parent up to rounding; normalizing by
                    # their own sum keeps rows exact where the parent is ~1e-17
                    rows[(h, x)] = child / total
        return cls(queries, responses, horizon, rows, name)

    def with_name(self, name: str) -> "InteractiveSystem":
        return InteractiveSystem(self.queries, self.responses, self.horizon, self.rows, name)


@dataclass(frozen=True, eq=False)
class SubMeasureSystem(InteractiveSystem):
    """Like :class:`InteractiveSystem` but rows may sum to less than one."""

    @property
    def total_mass(self) -> float:
        """Largest total path mass any deterministic adversary can collect."""

        def value(h):
            if len(h) == self.horizon:
                return 1.0
            return max(
                sum(p * value(h + ((x, y),)) for y, p in zip(self.responses, self.row(h, x)) if p > 0)
                for x in self.queries
            )

        return value(())


def all_histories(queries: Sequence[Label], responses: Sequence[Label], horizon: int) -> list:
    """Every history of length ``0..horizon-1`` over the product space."""
    steps = [(x, y) for x in queries for y in responses]
    out = []
    for t in range(horizon):
        out.extend(itertools.product(steps, repeat=t))
    return [tuple(h) for h in out]


class ComposedSystem(System):
    """Concurrent composition ``COMP(M_1, ..., M_k)``.

    Queries are pairs ``(i, x)`` with ``i`` a 0-based system index. The kernel
    for ``(i, x)`` is system ``i``'s kernel on its own sub-history; the other
    systems never see that round.
    """

    def __init__(self, systems: Sequence[System]):
        systems = tuple(systems)
        if not systems:
            raise ValueError("compose needs at least one system")
        self._systems = systems
        self.queries = tuple((i, x) for i, s in enumerate(systems) for x in s.queries)
        seen: dict = {}
        for s in systems:
            for y in s.responses:
                seen.setdefault(y, None)
        self.responses = tuple(seen)
        self.horizon = sum(s.horizon for s in systems)

    @property
    def systems(self) -> tuple:
        return self._systems

    @property
    def arity(self) -> int:
        return len(self._systems)

    def __repr__(self):
        return f"ComposedSystem(k={self.arity}, horizon={self.horizon})"

    @staticmethod
    def sub_history(history: History, i: int) -> History:
        return tuple((q[1], y) for q, y in history if q[0] == i)

    def allowed_queries(self, history):
        if len(history) >= self.horizon:
            return ()
        used = [0] * self.arity
        for q, _ in history:
            used[q[0]] += 1
        return tuple(
            (i, x)
            for i, s in enumerate(self._systems)
            if used[i] < s.horizon
            for x in s.allowed_queries(self.sub_history(history, i))
        )

    def response_labels(self, query):
        return self._systems[query[0]].response_labels(query[1])

    def row(self, history, query):
        i, x = query
        sub = self.sub_history(history, i)
        if len(sub) >= self._systems[i].horizon:
            raise ExhaustedSystemError(
                f"system {i} exhausted after history {history!r}"
            )
        return self._systems[i].row(sub, x)


def compose(systems: Sequence[System]) -> ComposedSystem:
    """Concurrent composition of ``systems`` (see :class:`ComposedSystem`)."""
    return ComposedSystem(systems)


class SkipSystem(System):
    """Wraps a system with a SKIP query answered by ACK with probability one.

    SKIP rounds are invisible to the wrapped system and leak nothing. The
    wrapper's horizon counts SKIP rounds too, so ``horizon >= base.horizon``.
    """

    def __init__(self, base: System, horizon: int):
        if SKIP in base.queries or ACK in base.responses:
            raise ValueError("base system already uses the SKIP/ACK labels")
        if horizon < base.horizon:
            raise ValueError("padded horizon shorter than the base horizon")
        self.base = base
        self.queries = base.queries + (SKIP,)
        self.responses = base.responses + (ACK,)
        self.horizon = int(horizon)

    @staticmethod
    def strip(history: History) -> History:
        return tuple((x, y) for x, y in history if x != SKIP)

    def allowed_queries(self, history):
        if len(history) >= self.horizon:
            return ()
        inner = self.strip(history)
        return self.base.allowed_queries(inner) + (SKIP,)

    def response_labels(self, query):
        if query == SKIP:
            return (ACK,)
        return self.base.response_labels(query)

    def row(self, history, query):
        if query == SKIP:
            return _frozen([1.0])
        inner = self.strip(history)
        if len(inner) >= self.base.horizon:
            raise ExhaustedSystemError(f"base system exhausted after {history!r}")
        return self.base.row(inner, query)


def path_products(system: System, horizon: int | None = None) -> dict:
    """Joint mass ``M((y_i), (x_i))`` of every history up to ``horizon``.

    Children of zero-mass histories get mass 0 without consulting their rows,
    so tables need not define rows at unreachable histories.
    """
    horizon = system.horizon if horizon is None else horizon
    out = {(): 1.0}

    def walk(h, mass):
        if len(h) == horizon:
            return
        for q in system.allowed_queries(h):
            labels = system.response_labels(q)
            row = system.row(h, q) if mass > 0.0 else np.zeros(len(labels))
            for y, p in zip(labels, row):
                child = h + ((q, y),)
                out[child] = mass * float(p)
                walk(child, out[child])

    walk((), 1.0)
    return out


@dataclass(frozen=True)
class Violation:
    history: History
    query: Any
    kind: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(
            f"{v.kind} at history={v.history!r} query={v.query!r}: {v.detail}"
            for v in self.violations
        )


def validate_system(system: System, tol: float = ROW_TOL, allow_deficit: bool = False) -> ValidationReport:
    """List every malformed kernel row reachable in ``system``.

    Rows at histories of zero mass under every adversary may be missing.
    ``allow_deficit`` accepts rows summing to less than one (sub-measures).
    """
    if allow_deficit is False and isinstance(system, SubMeasureSystem):
        allow_deficit = True
    found = []

    def walk(h, reachable):
        if len(h) >= system.horizon:
            return
        for q in system.allowed_queries(h):
            labels = system.response_labels(q)
            try:
                row = system.row(h, q)
            except MissingRowError:
                if reachable:
                    found.append(Violation(h, q, "missing row", "no kernel row"))
                continue
            except ExhaustedSystemError as exc:
                found.append(Violation(h, q, "exhausted", str(exc)))
                continue
            if len(row) != len(labels):
                found.append(
                    Violation(h, q, "bad length", f"{len(row)} entries for {len(labels)} labels")
                )
                continue
            if not np.all(np.isfinite(row)):
                found.append(Violation(h, q, "non-finite entry", repr(row.tolist())))
                continue
            if row.min() < -tol:
                found.append(Violation(h, q, "negative entry", f"min {row.min():.3g}"))
            total = float(row.sum())
            if total > 1.0 + tol or (not allow_deficit and total < 1.0 - tol):
                found.append(Violation(h, q, "bad sum", f"row sums to {total!r}"))
            for y, p in zip(labels, row):
                walk(h + ((q, y),), reachable and p > 0)

    walk((), True)
    return ValidationReport(tuple(found))


@dataclass(frozen=True)
class SystemPair:
    """The two systems ``(M^0, M^1)`` induced by neighbouring inputs."""

    m0: System
    m1: System

    def __post_init__(self):
        a, b = self.m0, self.m1
        if a.queries != b.queries or a.responses != b.responses or a.horizon != b.horizon:
            raise ValueError("paired systems must share query/response spaces and horizon")

    def __getitem__(self, b: int) -> System:
        return (self.m0, self.m1)[b]

    def swapped(self) -> "SystemPair":
        return SystemPair(self.m1, self.m0)

    @property
    def horizon(self) -> int:
        return self.m0.horizon


def compose_pairs(pairs: Sequence[SystemPair]) -> SystemPair:
    """``(COMP(M_1^0..M_k^0), COMP(M_1^1..M_k^1))``."""
    return SystemPair(compose([p.m0 for p in pairs]), compose([p.m1 for p in pairs]))


@dataclass(frozen=True)
class Adversary:
    """Deterministic query strategy: history -> next query.

    ``strategy`` only needs entries for histories the adversary can itself
    reach. ``horizon`` is the number of rounds it plays.
    """

    strategy: Mapping[History, Any] = field(repr=False)
    horizon: int

    def __call__(self, history: History):
        try:
            return self.strategy[tuple(history)]
        except KeyError:
            raise KeyError(f"adversary has no move at history {history!r}") from None

    @property
    def arity(self) -> int:
        """Number of systems addressed, for adversaries over composed systems."""
        idx = {q[0] for q in self.strategy.values() if isinstance(q, tuple) and len(q) == 2}
        return max(idx) + 1 if idx else 1

    def key(self) -> tuple:
        return tuple(sorted(self.strategy.items(), key=repr))

    def __hash__(self):
        return hash(self.key())

    def __eq__(self, other):
        return isinstance(other, Adversary) and self.horizon == other.horizon and dict(
            self.strategy
        ) == dict(other.strategy)


def transcript_entries(transcript: History) -> list:
    """``(system_index, query, response)`` triples of a composed transcript."""
    return [(q[0], q[1], y) for q, y in transcript]


# -- privacy budgets ---------------------------------------------------------


@dataclass(frozen=True)
class ApproxDP:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")


@dataclass(frozen=True)
class RDP:
    alpha: float
    epsilon: float

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError("alpha must be > 1")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")


@dataclass(frozen=True)
class ZCDP:
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be > 0")

    def to_rdp(self, alpha: float) -> RDP:
        return RDP(alpha, alpha * self.rho)


@dataclass(frozen=True)
class TCDP:
    rho: float
    omega: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be > 0")
        if not self.omega > 1:
            raise ValueError("omega must be > 1")

    def to_rdp(self, alpha: float) -> RDP:
        if not 1 < alpha < self.omega:
            raise ValueError(f"alpha={alpha} outside (1, {self.omega})")
        return RDP(alpha, alpha * self.rho)


PrivacyBudget = ApproxDP | RDP | ZCDP | TCDP


def rr_probability(epsilon: float) -> float:
    """``e^eps / (1 + e^eps)``, computed stably."""
    return 1.0 / (1.0 + math.exp(-epsilon))


class ConditionedSystem(System):
    """``M|_prefix``: the system after it has already answered ``prefix``."""

    def __init__(self, base: System, prefix: History):
        if len(prefix) >= base.horizon:
            raise ValueError("prefix leaves no rounds")
        self.base = base
        self.prefix = tuple(prefix)
        self.queries = base.queries
        self.responses = base.responses
        self.horizon = base.horizon - len(self.prefix)

    def allowed_queries(self, history):
        if len(history) >= self.horizon:
            return ()
        return self.base.allowed_queries(self.prefix + tuple(history))

    def response_labels(self, query):
        return self.base.response_labels(query)

    def row(self, history, query):
        return self.base.row(self.prefix + tuple(history), query)

"""Exact transcript laws, adversary enumeration and schedule normalization."""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

from .core import (
    ACK,
    EQ_TOL,
    SKIP,
    Adversary,
    ComposedSystem,
    ExhaustedSystemError,
    SkipSystem,
    System,
    compose,
)

DEFAULT_CAP = int(os.environ.get("CONCURRENT_DP_CAP", 10**7))


class EnumerationCapExceeded(RuntimeError):
    """Instance too large for exhaustive verification."""

    def __init__(self, count: int, cap: int):
        super().__init__(
            f"instance too large for exhaustive verification: {count} adversaries > cap {cap}"
        )
        self.count = count
        self.cap = cap


@dataclass(frozen=True)
class TranscriptDistribution:
    """Exact law of ``IT(A : M)`` as a map transcript -> probability."""

    probs: Mapping[tuple, float]

    @property
    def total_mass(self) -> float:
        return math.fsum(self.probs.values())

    @property
    def support(self) -> list:
        return [(t, p) for t, p in self.probs.items() if p > 0]

    def __getitem__(self, transcript) -> float:
        return self.probs.get(transcript, 0.0)

    def __len__(self):
        return len(self.probs)

    def __iter__(self):
        return iter(self.probs)

    def max_gap(self, other: "TranscriptDistribution") -> float:
        keys = set(self.probs) | set(other.probs)
        return max((abs(self[t] - other[t]) for t in keys), default=0.0)

    def mix(self, weight: float, other: "TranscriptDistribution | None" = None) -> "TranscriptDistribution":
        """``weight * self + other`` (``other`` defaults to the zero measure)."""
        out = dict(other.probs) if other is not None else {}
        for t, p in self.probs.items():
            out[t] = out.get(t, 0.0) + weight * p
        return TranscriptDistribution(out)


def _as_system(systems) -> System:
    if isinstance(systems, System):
        return systems
    return compose(list(systems))


def transcript_distribution(adv: Adversary, systems) -> TranscriptDistribution:
    """Law of the transcript when ``adv`` plays ``adv.horizon`` rounds.

    ``systems`` is one system, or a list that is composed concurrently (then
    the adversary's queries are ``(i, x)`` pairs). Zero-probability branches
    are pruned.
    """
    system = _as_system(systems)
    if adv.horizon > system.horizon:
        raise ValueError(f"adversary plays {adv.horizon} rounds, system allows {system.horizon}")
    out: dict = {}

    def walk(h, p):
        if len(h) == adv.horizon:
            out[h] = out.get(h, 0.0) + p
            return
        q = adv(h)
        if q not in system.allowed_queries(h):
            if isinstance(system, ComposedSystem) and isinstance(q, tuple) and len(q) == 2:
                raise ExhaustedSystemError(
                    f"adversary addresses unavailable query {q!r} after history {h!r}"
                )
            raise ValueError(f"query {q!r} not allowed after history {h!r}")
        row = system.row(h, q)
        for y, py in zip(system.response_labels(q), row):
            if py > 0.0:
                walk(h + ((q, y),), p * float(py))

    walk((), 1.0)
    return TranscriptDistribution(out)


def count_adversaries(system: System, horizon: int | None = None) -> int:
    """Number of deterministic strategy trees of ``horizon`` rounds.

    ``count(h) = sum_q prod_y count(h + (q, y))`` with ``count = 1`` at full
    depth; only histories the tree itself reaches are counted.
    """
    horizon = system.horizon if horizon is None else horizon
    memo: dict = {}

    def count(h):
        if len(h) == horizon:
            return 1
        if h in memo:
            return memo[h]
        total = 0
        for q in system.allowed_queries(h):
            prod = 1
            for y in system.response_labels(q):
                prod *= count(h + ((q, y),))
            total += prod
        memo[h] = total
        return total

    return count(())


def enumerate_adversaries(
    system: System, horizon: int | None = None, cap: int | None = None
) -> Iterator[Adversary]:
    """Lazily yield every deterministic adversary against ``system``.

    Order is deterministic (queries and responses in declaration order).
    Raises :class:`EnumerationCapExceeded` before yielding anything when the
    count exceeds ``cap``.
    """
    horizon = system.horizon if horizon is None else horizon
    if horizon < 1 or horizon > system.horizon:
        raise ValueError(f"horizon must lie in [1, {system.horizon}]")
    cap = DEFAULT_CAP if cap is None else cap
    n = count_adversaries(system, horizon)
    if n > cap:
        raise EnumerationCapExceeded(n, cap)

    def trees(h) -> Iterator[tuple]:
        if len(h) == horizon:
            yield ()
            return
        for q in system.allowed_queries(h):
            children = [h + ((q, y),) for y in system.response_labels(q)]
            subtrees = [list(trees(c)) for c in children]
            for combo in itertools.product(*subtrees):
                yield ((h, q),) + tuple(itertools.chain.from_iterable(combo))

    for items in trees(()):
        yield Adversary(dict(items), horizon)


def adversary_from_function(system: System, policy, horizon: int | None = None) -> Adversary:
    """Tabulate ``policy(history)`` over every history it can reach."""
    horizon = system.horizon if horizon is None else horizon
    strategy = {}

    def walk(h):
        if len(h) == horizon:
            return
        q = policy(h)
        strategy[h] = q
        for y in system.response_labels(q):
            walk(h + ((q, y),))

    walk(())
    return Adversary(strategy, horizon)


def schedule_adversary(system: System, schedule: Sequence) -> Adversary:
    """Nonadaptive adversary issuing ``schedule[t]`` in round ``t``."""
    return adversary_from_function(system, lambda h: schedule[len(h)], len(schedule))


# -- SKIP/ACK alternation ----------------------------------------------------


def with_skip(systems: Sequence[System], padded_horizon: int) -> ComposedSystem:
    """Compose ``systems`` after giving each a SKIP query and ``padded_horizon`` rounds."""
    return compose([SkipSystem(s, padded_horizon) for s in systems])


def strip_skips(transcript: tuple) -> tuple:
    """Image of a padded transcript under the SKIP-removal bijection."""
    return tuple((q, y) for q, y in transcript if q[1] != SKIP)


def normalize_alternating(adv: Adversary, systems: Sequence[System], k: int = 2) -> tuple:
    """Simulate ``adv`` by an adversary that alternates systems 0, 1, 0, 1, ...

    Whenever ``adv`` wants a system other than the one whose turn it is, the
    new adversary sends SKIP there (answered by ACK) and moves on. The
    padded adversary plays ``2 * adv.horizon`` rounds; trailing rounds are
    SKIPs.

    Returns ``(padded_adversary, padded_composition)``. Transcripts of the
    two interactions correspond one-to-one via :func:`strip_skips`, with
    equal probabilities, independently of which systems are plugged in.
    """
    if k != 2 or len(systems) != 2:
        raise ValueError("alternation is defined for two systems")
    for q in adv.strategy.values():
        if q[1] == SKIP:
            raise ValueError("adversary already uses the SKIP label")
    rounds = adv.horizon
    padded = with_skip(systems, rounds)
    strategy = {}

    def walk(h):
        if len(h) == 2 * rounds:
            return
        turn = len(h) % 2
        inner = strip_skips(h)
        if len(inner) < rounds:
            want = adv(inner)
            q = want if want[0] == turn else (turn, SKIP)
        else:
            q = (turn, SKIP)
        strategy[h] = q
        for y in padded.response_labels(q):
            walk(h + ((q, y),))

    walk(())
    return Adversary(strategy, 2 * rounds), padded


def padded_to_original(dist: TranscriptDistribution) -> TranscriptDistribution:
    out: dict = {}
    for t, p in dist.probs.items():
        key = strip_skips(t)
        out[key] = out.get(key, 0.0) + p
    return TranscriptDistribution(out)


def is_alternating(adv: Adversary) -> bool:
    return all(q[0] == len(h) % 2 for h, q in adv.strategy.items())


__all__ = [
    "ACK",
    "DEFAULT_CAP",
    "EQ_TOL",
    "EnumerationCapExceeded",
    "SKIP",
    "TranscriptDistribution",
    "adversary_from_function",
    "count_adversaries",
    "enumerate_adversaries",
    "is_alternating",
    "normalize_alternating",
    "padded_to_original",
    "schedule_adversary",
    "strip_skips",
    "transcript_distribution",
    "with_skip",
]

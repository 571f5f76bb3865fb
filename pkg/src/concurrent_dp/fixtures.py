"""Random valid systems and pairs for tests, demos and ``fixtures gen``."""

from __future__ import annotations

import math

import numpy as np

from .core import InteractiveSystem, SystemPair, all_histories


def _labels(n: int, prefix: str) -> tuple:
    return tuple(f"{prefix}{i}" for i in range(n))


def random_system(nx: int, ny: int, depth: int, rng: np.random.Generator,
                  concentration: float = 1.0, sparsity: float = 0.0, name: str = "") -> InteractiveSystem:
    """Dirichlet rows at every (history, query); ``sparsity`` zeroes entries at random."""
    queries, responses = _labels(nx, "x"), _labels(ny, "y")
    rows = {}
    for h in all_histories(queries, responses, depth):
        for x in queries:
            row = rng.dirichlet(np.full(ny, concentration))
            if sparsity > 0:
                mask = rng.random(ny) < sparsity
                if mask.all():
                    mask[rng.integers(ny)] = False
                row = np.where(mask, 0.0, row)
                row = row / row.sum()
            rows[(h, x)] = row
    return InteractiveSystem(queries, responses, depth, rows, name)


def random_pair(nx: int, ny: int, depth: int, rng: np.random.Generator,
                concentration: float = 1.0, sparsity: float = 0.0) -> SystemPair:
    """Two independent random systems on shared spaces."""
    return SystemPair(
        random_system(nx, ny, depth, rng, concentration, sparsity, "F0"),
        random_system(nx, ny, depth, rng, concentration, sparsity, "F1"),
    )


def random_close_pair(nx: int, ny: int, depth: int, rng: np.random.Generator,
                      step_epsilon: float = 0.5, leak: float = 0.0) -> SystemPair:
    """Pair whose per-step likelihood ratios lie in ``[e^-eps, e^eps]``.

    Rows of ``M^1`` reweight rows of ``M^0`` by factors in ``[e^-eps/2, e^eps/2]``
    and renormalize, so each step is ``(step_epsilon, 0)``-indistinguishable.
    With ``leak > 0`` a fraction of mass in ``M^0`` moves to a response that
    ``M^1`` never gives, which forces ``delta > 0``.
    """
    queries, responses = _labels(nx, "x"), _labels(ny, "y")
    r0, r1 = {}, {}
    for h in all_histories(queries, responses, depth):
        for x in queries:
            base = rng.dirichlet(np.ones(ny))
            tilt = np.exp(rng.uniform(-step_epsilon / 2, step_epsilon / 2, ny))
            other = base * tilt
            other /= other.sum()
            if leak > 0 and ny > 1:
                j = rng.integers(ny)
                moved = leak * rng.random()
                base[j], other[j] = 0.0, 0.0
                base = (1 - moved) * base / base.sum()
                base[j] = moved
                other /= other.sum()
            r0[(h, x)], r1[(h, x)] = base, other
    return SystemPair(
        InteractiveSystem(queries, responses, depth, r0, "C0"),
        InteractiveSystem(queries, responses, depth, r1, "C1"),
    )


def random_pure_pair(nx: int, ny: int, depth: int, rng: np.random.Generator,
                     epsilon: float) -> SystemPair:
    """Pair that is ``(epsilon, 0)``-indistinguishable per transcript.

    Each step is ``(epsilon / depth, 0)``, so full transcripts stay within
    ``e^epsilon``.
    """
    return random_close_pair(nx, ny, depth, rng, step_epsilon=epsilon / depth)


def random_joint(shape: tuple, rng: np.random.Generator, concentration: float = 1.0) -> np.ndarray:
    """Full-support joint law on a grid."""
    n = math.prod(shape)
    return rng.dirichlet(np.full(n, concentration)).reshape(shape)

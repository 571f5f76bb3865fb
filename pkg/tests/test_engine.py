import itertools

import pytest

from concurrent_dp.core import Adversary, ExhaustedSystemError, compose
from concurrent_dp.engine import (
    EnumerationCapExceeded,
    count_adversaries,
    enumerate_adversaries,
    is_alternating,
    normalize_alternating,
    padded_to_original,
    schedule_adversary,
    transcript_distribution,
)
from concurrent_dp.fixtures import random_system


@pytest.mark.parametrize("nx,ny,depth,expected", [(1, 2, 1, 1), (2, 2, 1, 2), (2, 2, 2, 8), (3, 3, 2, 81)])
def test_adversary_counts(rng, nx, ny, depth, expected):
    # closed form for a single system: nx * (count at depth-1) ** ny
    s = random_system(nx, ny, depth, rng)
    assert count_adversaries(s) == expected
    advs = list(enumerate_adversaries(s))
    assert len(advs) == expected
    assert len(set(advs)) == expected


def test_composed_counts_match_enumeration(rng):
    a, b = random_system(2, 2, 2, rng), random_system(2, 2, 1, rng)
    c = compose([a, b])
    assert count_adversaries(c) == 640
    assert sum(1 for _ in enumerate_adversaries(c)) == 640


def test_cap_is_checked_before_yielding(rng):
    s = random_system(3, 3, 2, rng)
    with pytest.raises(EnumerationCapExceeded) as info:
        next(enumerate_adversaries(s, cap=80))
    assert info.value.count == 81


def test_transcript_law_is_probability(rng):
    a, b = random_system(2, 3, 2, rng), random_system(1, 2, 1, rng)
    c = compose([a, b])
    for adv in itertools.islice(enumerate_adversaries(c), 200):
        d = transcript_distribution(adv, c)
        assert d.total_mass == pytest.approx(1.0, abs=1e-12)
        assert all(len(t) == 3 for t in d)


def test_transcript_law_matches_hand_product(rng):
    s = random_system(2, 2, 2, rng)
    adv = schedule_adversary(s, ["x1", "x0"])
    d = transcript_distribution(adv, s)
    t = (("x1", "y1"), ("x0", "y0"))
    expected = s.row((), "x1")[1] * s.row((("x1", "y1"),), "x0")[0]
    assert d[t] == pytest.approx(expected, rel=1e-15)


def test_exhausted_subsystem_raises(rng):
    a, b = random_system(1, 2, 1, rng), random_system(1, 2, 1, rng)
    adv = Adversary({(): (0, "x0"), (((0, "x0"), "y0"),): (0, "x0"), (((0, "x0"), "y1"),): (0, "x0")}, 2)
    with pytest.raises(ExhaustedSystemError):
        transcript_distribution(adv, [a, b])


def test_alternating_normalization_preserves_law(rng):
    a, b = random_system(2, 2, 2, rng), random_system(1, 2, 2, rng)
    c = compose([a, b])
    for adv in itertools.islice(enumerate_adversaries(c), 300):
        padded, comp = normalize_alternating(adv, [a, b])
        assert is_alternating(padded)
        got = padded_to_original(transcript_distribution(padded, comp))
        want = transcript_distribution(adv, c)
        assert got.max_gap(want) <= 1e-15

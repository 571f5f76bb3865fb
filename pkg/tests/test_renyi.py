import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from concurrent_dp.core import RDP, TCDP, ZCDP, ApproxDP, SystemPair
from concurrent_dp.divergence import renyi_divergence
from concurrent_dp.fixtures import random_joint, random_pair
from concurrent_dp.mechanisms import make_rr
from concurrent_dp.renyi import (
    budget_monitor,
    cdp_compose,
    check_tracker,
    max_renyi_one_direction,
    rdp_level,
    rdp_to_dp,
    tracker_hypothesis,
    verify_concurrent_rdp,
)

# D_2(RR_eps || RR_eps flipped) = log(p^2/q + q^2/p), evaluated independently
RR_D2 = {0.5: 0.22733629380264578, 0.7: 0.4123334742942974}


@pytest.mark.parametrize("eps", [0.5, 0.7])
def test_single_round_monitor_is_one_shot_divergence(eps):
    bm = budget_monitor(make_rr(eps), 2.0)
    assert bm.divergence == pytest.approx(RR_D2[eps], rel=1e-12)
    assert bm.ell() == pytest.approx(math.exp(RR_D2[eps]), rel=1e-12)


def test_identical_systems_monitor_is_one(rng):
    s = random_pair(2, 2, 2, rng).m0
    bm = budget_monitor(SystemPair(s, s), 3.0)
    assert all(v == pytest.approx(1.0, abs=1e-12) for v in bm.moment.values())


@pytest.mark.parametrize("alpha", [1.5, 2.0, 4.0])
def test_monitor_matches_brute_force(rng, alpha):
    for _ in range(5):
        pair = random_pair(2, 3, 2, rng)
        bm = budget_monitor(pair, alpha, check=True)
        assert bm.divergence == pytest.approx(max_renyi_one_direction(pair, alpha), rel=1e-9)
        # also from an interior history
        h = (("x1", "y2"),)
        assert bm.remaining(h) == pytest.approx(max_renyi_one_direction(pair, alpha, history=h), rel=1e-9)


def test_monitor_is_monotone(rng):
    pair = random_pair(2, 2, 2, rng)
    bm = budget_monitor(pair, 2.0)
    for h, v in bm.moment.items():
        assert v >= 1.0 - 1e-12
        q = bm.choice[h]
        p0, p1 = pair.m0.row(h, q), pair.m1.row(h, q)
        for j, y in enumerate(pair.m0.responses):
            child = bm.moment.get(h + ((q, y),), 1.0)
            assert v >= p0[j] ** 2 * p1[j] ** -1 * child - 1e-12


def test_monitor_infinite_without_support():
    from concurrent_dp.core import InteractiveSystem

    m0 = InteractiveSystem(("x",), (0, 1), 1, {((), "x"): [0.5, 0.5]})
    m1 = InteractiveSystem(("x",), (0, 1), 1, {((), "x"): [1.0, 0.0]})
    assert budget_monitor(SystemPair(m0, m1), 2.0).divergence == math.inf


def test_worst_adversary_attains_monitor(rng):
    from concurrent_dp.engine import transcript_distribution

    pair = random_pair(2, 2, 2, rng)
    bm = budget_monitor(pair, 2.0)
    adv = bm.worst_adversary()
    P, Q = transcript_distribution(adv, pair.m0), transcript_distribution(adv, pair.m1)
    assert renyi_divergence(P, Q, 2.0) == pytest.approx(bm.divergence, rel=1e-12)


def test_tracker_product_measure():
    p = np.array([0.2, 0.3, 0.5])
    joint = np.outer(p, p)
    for B in (0.0, 0.5):
        assert check_tracker(joint, joint, 2.0, B)


@given(st.integers(0, 10_000), st.sampled_from([1.5, 2.0, 3.0]))
def test_tracker_implication(seed, beta):
    rng = np.random.default_rng(seed)
    P, Q = random_joint((2, 2), rng), random_joint((2, 2), rng)
    alpha = beta / (beta - 1)
    B = renyi_divergence(P.ravel(), Q.ravel(), alpha)
    assert tracker_hypothesis(P, Q, beta, B)
    assert check_tracker(P, Q, beta, B)


def test_tracker_rejects_partial_support():
    P = np.array([[0.5, 0.5], [0.0, 0.0]])
    with pytest.raises(ValueError):
        check_tracker(P, np.full((2, 2), 0.25), 2.0, 1.0)


def test_concurrent_rdp_product_of_rr_is_additive():
    pairs = [make_rr(0.5), make_rr(0.7)]
    v = verify_concurrent_rdp(pairs, 2.0, [RR_D2[0.5], RR_D2[0.7]])
    assert v.passed
    assert v.achieved == pytest.approx(RR_D2[0.5] + RR_D2[0.7], abs=1e-9)


def test_concurrent_rdp_identical_pairs():
    s = make_rr(0.3).m0
    v = verify_concurrent_rdp([SystemPair(s, s)] * 2, 2.0, [0.0, 0.0])
    assert v.passed and v.achieved == pytest.approx(0.0, abs=1e-12)


def test_three_round_schedule(rng):
    # M1 answers rounds 1 and 3, M2 answers round 2 under the interleaving schedule
    p1, p2 = random_pair(1, 2, 2, rng), random_pair(1, 2, 1, rng)
    e = [rdp_level(p1, 2.0), rdp_level(p2, 2.0)]
    v = verify_concurrent_rdp([p1, p2], 2.0, e)
    assert v.passed


def test_zcdp_composition():
    out = cdp_compose([ZCDP(0.1), ZCDP(0.2), ZCDP(0.3)])
    assert out.rho == pytest.approx(0.6, abs=1e-15)


def test_tcdp_composition():
    out = cdp_compose([TCDP(0.1, 5.0), TCDP(0.2, 3.0)])
    assert out.rho == pytest.approx(0.3) and out.omega == 3.0


def test_rdp_composition_and_mixing():
    assert cdp_compose([RDP(2.0, 0.5), RDP(2.0, 0.25)]) == RDP(2.0, 0.75)
    with pytest.raises(ValueError):
        cdp_compose([RDP(2.0, 0.5), RDP(3.0, 0.25)])
    with pytest.raises(TypeError):
        cdp_compose([ZCDP(0.1), RDP(2.0, 0.2)])
    with pytest.raises(TypeError):
        cdp_compose([ApproxDP(1.0), ApproxDP(1.0)])


def test_rdp_to_dp():
    out = rdp_to_dp(RDP(2.0, 1.0), 1e-6)
    assert out.epsilon == pytest.approx(1 + math.log(1e6), rel=1e-15)
    assert out.delta == 1e-6
    with pytest.raises(ValueError):
        rdp_to_dp(ZCDP(0.1), 1e-6)
    assert rdp_to_dp(ZCDP(0.1), 1e-6, alpha=3.0).epsilon == pytest.approx(0.3 + math.log(1e6) / 2)

# Tracking Renyi privacy loss round by round.
#
# The budget monitor runs a backward recursion over the interaction tree. At
# each history it stores the largest Renyi moment any continuation can still
# reach, together with the query that reaches it.

import math

import numpy as np

from concurrent_dp.mechanisms import make_rr
from concurrent_dp.engine import transcript_distribution
from concurrent_dp.divergence import renyi_divergence
from concurrent_dp.fixtures import random_pair
from concurrent_dp.renyi import budget_monitor, rdp_level, verify_concurrent_rdp

rng = np.random.default_rng(3)
alpha = 2.0

pair = random_pair(2, 3, 2, rng)
bm = budget_monitor(pair, alpha, check=True)  # check=True also runs brute force
print(f"worst D_{alpha:g}(M0 || M1) over adaptive adversaries: {bm.divergence:.6f}")

adv = bm.worst_adversary()
P, Q = transcript_distribution(adv, pair.m0), transcript_distribution(adv, pair.m1)
print(f"the monitor's chosen adversary achieves {renyi_divergence(P, Q, alpha):.6f}")

first = adv(())
for y in pair.m0.responses:
    h = ((first, y),)
    print(f"  after answer {y!r} to {first!r}: remaining budget {bm.remaining(h):.6f}")

# Renyi levels add up under interleaving.
pairs = [make_rr(0.5), make_rr(1.0)]
levels = [rdp_level(p, alpha) for p in pairs]
verdict = verify_concurrent_rdp(pairs, alpha, levels)
print(f"\nRR levels {levels[0]:.6f} + {levels[1]:.6f} = {sum(levels):.6f}")
print(f"worst over interleavings {verdict.achieved:.6f} -> {verdict.status}")
print(f"as a ratio bound: e^D = {math.exp(verdict.achieved):.6f}")

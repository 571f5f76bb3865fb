# Budget arithmetic for k interleaved mechanisms.

from concurrent_dp import ApproxDP, ZCDP
from concurrent_dp.calculators import (
    advanced_composition,
    basic_composition,
    optimal_epsilon,
    optimal_homogeneous,
)
from concurrent_dp.renyi import cdp_compose, rdp_to_dp

k, eps, delta = 10, 0.1, 1e-6

print("basic:   ", basic_composition([ApproxDP(eps, delta)] * k))
e_adv, d_adv = advanced_composition(k, eps, delta, 1e-6)
print(f"advanced: eps={e_adv:.4f} delta={d_adv:.3g}")
e_opt = optimal_epsilon(k, eps, delta, d_adv)
print(f"optimal:  eps={e_opt:.4f} at the same delta")
print(f"optimal delta at eps'=0.5: {optimal_homogeneous(k, eps, delta, 0.5):.3g}")

# zCDP budgets add, and the sum reads off as Renyi DP at any order.
total = cdp_compose([ZCDP(0.1), ZCDP(0.2), ZCDP(0.3)])
print(f"\nzCDP total rho = {total.rho:g}")
for alpha in (2.0, 8.0, 32.0):
    print(f"  alpha={alpha:>4g}: RDP eps={total.to_rdp(alpha).epsilon:.3f} ->",
          rdp_to_dp(total, 1e-6, alpha))

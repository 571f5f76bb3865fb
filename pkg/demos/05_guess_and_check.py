# Guess-and-check: an analyst proposes answers and learns only PASS or WRONG.
#
# Each WRONG also reveals a noisy value, and the mechanism halts after c of
# them. Two checks follow. First an exact finite model of the test composed
# with a Laplace release stays within 4 eps. Then a Monte Carlo audit of the
# real-valued mechanism on neighbouring CSV files, along with a broken variant
# that drops the noise as a negative control.

from pathlib import Path

import numpy as np

from concurrent_dp import compose_pairs, verify_approx_dp
from concurrent_dp.mechanisms import (
    GuessCheckConfig,
    SVTModel,
    audit_mechanism,
    guess_check_runner,
    load_csv_dataset,
    load_query_script,
    make_discrete_laplace,
    make_svt_finite,
    run_guess_and_check,
    script_adversary,
    svt_truncation_slack,
)

DATA = Path(__file__).parent / "data"
eps = 0.5

model = SVTModel(tolerance=2, cutoff=1, epsilon=eps, queries={"a": (1, 2), "b": (3, 2)}, horizon=2)
svt, lap = make_svt_finite(model), make_discrete_laplace(eps, queries={"g": (0, 1)})
verdict = verify_approx_dp(compose_pairs([svt, lap]), 4 * eps, svt_truncation_slack(model), method="dp")
print(f"finite model at 4 eps: worst delta {verdict.achieved:.3g} -> {verdict.status}")

data = load_csv_dataset(DATA / "survey.csv", ["age", "income"])
neighbor = load_csv_dataset(DATA / "survey_neighbor.csv", ["age", "income"])
script = load_query_script(DATA / "queries.json")
config = GuessCheckConfig(tolerance=3.0, cutoff=2, epsilon=eps)

rng = np.random.default_rng(0)
print("\none session:")
for out in run_guess_and_check(config, data, script_adversary(script), rng):
    print("  ", out)

for noisy, runs in ((True, 20_000), (False, 2_000)):
    report = audit_mechanism(guess_check_runner(config, noisy=noisy), (data, neighbor),
                             script_adversary(script), 4 * eps, runs, rng=1)
    label = "real" if noisy else "noise-free"
    print(f"{label:>10}: {report.verdict}, empirical eps >= {report.epsilon_lower:.3f} (claim {4 * eps})")

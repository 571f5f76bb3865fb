import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from concurrent_dp.core import validate_system
from concurrent_dp.divergence import max_hockey_stick, verify_approx_dp
from concurrent_dp.mechanisms import (
    HALT,
    PASS,
    WRONG,
    GuessAndCheck,
    GuessCheckConfig,
    HaltedError,
    SVTModel,
    audit_mechanism,
    clopper_pearson,
    folded_geometric,
    guess_check_runner,
    load_csv_dataset,
    load_query_script,
    make_approx_rr,
    make_discrete_laplace,
    make_query,
    make_rr,
    make_svt_finite,
    run_guess_and_check,
    script_adversary,
)


def _valid(pair):
    return validate_system(pair.m0).ok and validate_system(pair.m1).ok


def test_rr_zero_is_uniform():
    pair = make_rr(0.0)
    assert pair.m0.row((), "x").tolist() == [0.5, 0.5] == pair.m1.row((), "x").tolist()
    assert verify_approx_dp(pair, 0.0, 0.0).passed


def test_constructors_are_valid():
    assert _valid(make_rr(1.3))
    assert _valid(make_approx_rr(0.4, 0.2))
    assert _valid(make_discrete_laplace(1.0, rounds=2, queries={"a": (0, 1), "b": (2, 2)}))
    assert _valid(make_svt_finite(SVTModel(2, 2, 0.5, {"a": (1, 2), "b": (3, 2)}, horizon=3)))


def test_folded_geometric_boundaries_keep_ratio():
    pmf = folded_geometric(0.5, 20)
    assert pmf.sum() == pytest.approx(1.0)
    shifted = np.roll(pmf, 1)
    ratio = pmf[1:] / shifted[1:]
    assert np.all(ratio <= math.exp(0.5) + 1e-12) and np.all(ratio >= math.exp(-0.5) - 1e-12)


def test_discrete_laplace_is_exactly_eps_dp():
    pair = make_discrete_laplace(0.5, queries={"g": (3, 4)})
    assert max_hockey_stick(pair, 0.5, method="dp").delta <= 1e-15
    assert max_hockey_stick(pair, 0.45, method="dp").delta > 1e-3


def test_discrete_laplace_grid_errors():
    with pytest.raises(ValueError):
        make_discrete_laplace(1.0, queries={"g": (0.5, 1.0)})
    with pytest.raises(ValueError):
        make_discrete_laplace(1.0, queries={"g": (0, 2)})


def test_svt_far_below_threshold_passes():
    pair = make_svt_finite(SVTModel(tolerance=60, cutoff=1, epsilon=1.0, queries={"q": (0, 1)}, horizon=1))
    for m in pair:
        assert m.row((), "q")[0] >= 1 - 1e-12
    assert max_hockey_stick(pair, 0.0, method="dp").delta <= 1e-12


def test_svt_three_eps_two_queries():
    cfg = SVTModel(tolerance=2, cutoff=1, epsilon=0.5, queries={"a": (1, 2), "b": (3, 2), "c": (2, 2)}, horizon=2)
    pair = make_svt_finite(cfg)
    v = verify_approx_dp(pair, 1.5, 0.0)
    assert v.passed


def test_svt_halts_after_cutoff():
    pair = make_svt_finite(SVTModel(1, 1, 0.5, {"q": (5, 5)}, horizon=2))
    h = (("q", WRONG),)
    assert pair.m0.row(h, "q").tolist() == [0.0, 0.0, 1.0]


def test_guess_equal_to_truth_passes():
    cfg = GuessCheckConfig(tolerance=1000.0, cutoff=1, epsilon=0.5)
    rng = np.random.default_rng(0)
    outs = list(run_guess_and_check(cfg, None, [(lambda d: 3.0, 3.0)] * 50, rng))
    assert all(o == (PASS,) for o in outs)


def test_wrong_guess_value_follows_laplace():
    cfg = GuessCheckConfig(tolerance=1.0, cutoff=1, epsilon=0.5)
    rng = np.random.default_rng(1)
    errs = []
    for _ in range(100_000):
        mech = GuessAndCheck(cfg, None, rng)
        out = mech.query(lambda d: 10.0, 1e6)
        assert out[0] == WRONG and mech.state.halted
        errs.append(out[1] - 10.0)
    ks = stats.kstest(errs, stats.laplace(scale=cfg.cutoff / cfg.epsilon).cdf)
    assert ks.statistic < 0.02


def test_query_after_halt_is_terminal():
    cfg = GuessCheckConfig(tolerance=1.0, cutoff=1, epsilon=0.5)
    mech = GuessAndCheck(cfg, None, np.random.default_rng(2))
    mech.query(lambda d: 0.0, 1e9)
    with pytest.raises(HaltedError):
        mech.query(lambda d: 0.0, 0.0)


@given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.lists(st.floats(-50, 50), min_size=1, max_size=30))
def test_never_more_than_cutoff_wrongs(c, seed, guesses):
    cfg = GuessCheckConfig(tolerance=2.0, cutoff=c, epsilon=0.5)
    outs = list(run_guess_and_check(cfg, None, [(lambda d: 0.0, g) for g in guesses], np.random.default_rng(seed)))
    assert sum(o[0] == WRONG for o in outs) <= c


def test_config_ranges():
    with pytest.raises(ValueError):
        GuessCheckConfig(0.0, 1, 0.5)
    with pytest.raises(ValueError):
        GuessCheckConfig(1.0, 1, 1.5)


def test_clopper_pearson_edges():
    lo, hi = clopper_pearson(0, 100, 0.05)
    assert lo == 0.0 and hi == pytest.approx(1 - 0.025 ** (1 / 100))
    lo, hi = clopper_pearson(100, 100, 0.05)
    assert hi == 1.0


def test_audit_identical_datasets_consistent():
    cfg = GuessCheckConfig(tolerance=2.0, cutoff=1, epsilon=0.5)
    data = {"a": np.arange(10.0)}
    script = [dict(kind="count", column="a", op=">=", value=5, guess=4, _f=make_query(
        {"kind": "count", "column": "a", "op": ">=", "value": 5}))]
    rep = audit_mechanism(guess_check_runner(cfg), (data, data), script_adversary(script), 0.0, 5000, rng=0)
    assert rep.consistent
    assert rep.epsilon_lower == 0.0


def test_audit_needs_runs():
    with pytest.raises(ValueError):
        audit_mechanism(lambda *a: (), ({}, {}), lambda o: None, 1.0, 10)


def test_csv_and_script(tmp_path):
    csv_path = tmp_path / "d.csv"
    csv_path.write_text("age,income\n30,0.5\n70,0.25\n65,x\n")
    with pytest.raises(ValueError, match=":4:"):
        load_csv_dataset(csv_path)
    csv_path.write_text("age,income\n30,0.5\n70,0.25\n65,2.0\n")
    data = load_csv_dataset(csv_path, ["age", "income"])
    assert make_query({"kind": "count", "column": "age", "op": ">=", "value": 60})(data) == 2.0
    assert make_query({"kind": "sum", "column": "income", "lo": 0, "hi": 1})(data) == pytest.approx(1.75)
    with pytest.raises(ValueError):
        make_query({"kind": "sum", "column": "income", "lo": 0, "hi": 5})
    q = tmp_path / "q.json"
    q.write_text(json.dumps([{"kind": "count", "column": "age", "value": 60, "guess": 0},
                             {"kind": "count", "column": "age", "value": 60, "guess": 0, "guess_from_last_v": True}]))
    adv = script_adversary(load_query_script(q))
    f, tau = adv([(WRONG, 1.5)])
    assert tau == 1.5
    assert adv([(PASS,), (PASS,)]) is None
    assert HALT == "HALT"

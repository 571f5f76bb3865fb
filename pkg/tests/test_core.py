import math

import numpy as np
import pytest

from concurrent_dp.core import (
    ACK,
    SKIP,
    ApproxDP,
    ComposedSystem,
    ConditionedSystem,
    ExhaustedSystemError,
    InteractiveSystem,
    RDP,
    SkipSystem,
    SubMeasureSystem,
    SystemPair,
    TCDP,
    ZCDP,
    compose,
    path_products,
    rr_probability,
    validate_system,
)
from concurrent_dp.fixtures import random_system
from concurrent_dp.mechanisms import make_rr


def test_from_function_tabulates_every_history():
    s = InteractiveSystem.from_function(("a", "b"), (0, 1), 2, lambda h, x: [0.25, 0.75])
    # 1 root history + 4 depth-1 histories, times 2 queries
    assert len(s.rows) == 10
    assert validate_system(s).ok


def test_validate_reports_bad_rows():
    rows = {((), "x"): [0.7, 0.7]}
    s = InteractiveSystem(("x",), (0, 1), 1, rows)
    report = validate_system(s)
    assert not report.ok
    assert report.violations[0].kind == "bad sum"

    neg = InteractiveSystem(("x",), (0, 1), 1, {((), "x"): [1.5, -0.5]})
    assert {v.kind for v in validate_system(neg).violations} >= {"negative entry"}


def test_missing_row_only_flagged_when_reachable():
    rows = {((), "x"): [1.0, 0.0], ((("x", 0),), "x"): [0.5, 0.5]}
    s = InteractiveSystem(("x",), (0, 1), 2, rows)
    assert validate_system(s).ok  # history (x, 1) has mass zero
    rows2 = {((), "x"): [0.5, 0.5], ((("x", 0),), "x"): [0.5, 0.5]}
    s2 = InteractiveSystem(("x",), (0, 1), 2, rows2)
    assert [v.kind for v in validate_system(s2).violations] == ["missing row"]


def test_submeasure_total_mass():
    s = SubMeasureSystem(("x", "z"), (0,), 1, {((), "x"): [0.3], ((), "z"): [0.6]})
    assert validate_system(s).ok
    assert s.total_mass == pytest.approx(0.6)


def test_path_products_sum_to_one_per_query_sequence(rng):
    s = random_system(2, 3, 2, rng)
    prods = path_products(s)
    assert prods[()] == 1.0
    for x1 in s.queries:
        for x2 in s.queries:
            total = sum(prods[(((x1, y1), (x2, y2)))] for y1 in s.responses for y2 in s.responses)
            assert total == pytest.approx(1.0, abs=1e-12)


def test_composition_routes_to_sub_histories(rng):
    a, b = random_system(2, 2, 1, rng), random_system(1, 3, 2, rng)
    c = compose([a, b])
    assert isinstance(c, ComposedSystem)
    assert c.horizon == 3
    h = (((1, "x0"), "y2"),)
    np.testing.assert_array_equal(c.row(h, (0, "x1")), a.row((), "x1"))
    np.testing.assert_array_equal(c.row(h, (1, "x0")), b.row((("x0", "y2"),), "x0"))
    h2 = (((0, "x0"), "y1"),)
    assert all(q[0] == 1 for q in c.allowed_queries(h2))
    with pytest.raises(ExhaustedSystemError):
        c.row(h2, (0, "x0"))


def test_skip_system_is_transparent(rng):
    base = random_system(1, 2, 1, rng)
    s = SkipSystem(base, 3)
    assert s.row((), SKIP).tolist() == [1.0]
    assert s.response_labels(SKIP) == (ACK,)
    h = ((SKIP, ACK), (SKIP, ACK))
    np.testing.assert_array_equal(s.row(h, "x0"), base.row((), "x0"))


def test_conditioned_system(rng):
    base = random_system(2, 2, 2, rng)
    prefix = (("x1", "y0"),)
    cond = ConditionedSystem(base, prefix)
    assert cond.horizon == 1
    np.testing.assert_array_equal(cond.row((), "x0"), base.row(prefix, "x0"))


def test_pair_requires_matching_spaces(rng):
    with pytest.raises(ValueError):
        SystemPair(random_system(2, 2, 1, rng), random_system(2, 3, 1, rng))


def test_budget_ranges():
    with pytest.raises(ValueError):
        ApproxDP(-1.0)
    with pytest.raises(ValueError):
        RDP(1.0, 0.5)
    assert ZCDP(0.5).to_rdp(3.0) == RDP(3.0, 1.5)
    with pytest.raises(ValueError):
        TCDP(0.1, 3.0).to_rdp(4.0)


def test_rr_probability_is_stable():
    assert rr_probability(0.0) == 0.5
    assert rr_probability(800.0) == 1.0
    assert rr_probability(math.log(3)) == pytest.approx(0.75)
    pair = make_rr(1.0)
    assert validate_system(pair.m0).ok and validate_system(pair.m1).ok

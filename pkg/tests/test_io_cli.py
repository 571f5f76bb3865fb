import json

import numpy as np
import pytest

from concurrent_dp import io
from concurrent_dp.cli import EXIT_CAP, EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from concurrent_dp.core import Adversary
from concurrent_dp.decompose import decompose, identity_gap
from concurrent_dp.divergence import max_hockey_stick
from concurrent_dp.fixtures import random_close_pair, random_pair
from concurrent_dp.mechanisms import make_rr


def _rows_equal(a, b):
    assert a.rows.keys() == b.rows.keys()
    for k in a.rows:
        assert np.allclose(a.rows[k], b.rows[k], rtol=0, atol=1e-15)


def test_pair_round_trip(tmp_path, rng):
    pair = random_pair(2, 3, 2, rng)
    io.save_pair(pair, tmp_path / "p.yaml")
    back = io.load_pair(tmp_path / "p.yaml")
    _rows_equal(pair.m0, back.m0)
    _rows_equal(pair.m1, back.m1)


def test_decomposition_round_trip(tmp_path, rng):
    pair = random_close_pair(2, 2, 2, rng, 0.5, leak=0.2)
    delta = max_hockey_stick(pair, 1.0).delta + 1e-9
    dec = decompose(pair, 1.0, delta)
    io.save_decomposition(dec, pair, tmp_path / "d.yaml")
    back, bpair = io.load_decomposition(tmp_path / "d.yaml")
    assert (back.epsilon, back.delta) == (dec.epsilon, dec.delta)
    assert identity_gap(back, bpair) <= 1e-12


def test_adversary_round_trip_with_composed_queries(tmp_path):
    adv = Adversary({(): (0, "x"), (((0, "x"), 1),): (1, "x")}, 2)
    io.save_adversary(adv, tmp_path / "a.yaml")
    back = io.load_adversary(tmp_path / "a.yaml")
    assert back.strategy == adv.strategy and back.horizon == 2


def test_missing_rows_filled_uniform(tmp_path):
    (tmp_path / "p.yaml").write_text(
        "format_version: 1\nkind: pair\nqueries: [x]\nresponses: [a, b]\nhorizon: 2\n"
        "systems:\n  m0:\n    rows:\n      - {history: [], query: x, probs: [1.0, 0.0]}\n"
        "      - {history: [[x, a]], query: x, probs: [0.25, 0.75]}\n"
        "  m1:\n    rows:\n      - {history: [], query: x, probs: [0.0, 1.0]}\n"
        "      - {history: [[x, b]], query: x, probs: [0.25, 0.75]}\n")
    pair = io.load_pair(tmp_path / "p.yaml")
    assert pair.m0.row((("x", "b"),), "x").tolist() == [0.5, 0.5]


@pytest.mark.parametrize("text, line, needle", [
    ("format_version: 1\nkind: pair\nqueries: [x\n", 4, "invalid YAML"),
    ("format_version: 2\nkind: pair\n", 1, "format_version"),
    ("format_version: 1\nkind: pair\nqueries: [x]\nresponses: [a]\nhorizon: 1\n"
     "systems:\n  m0:\n    rows:\n      - {history: [], query: z, probs: [1.0]}\n  m1: {rows: []}\n", 9, "unknown query"),
    ("format_version: 1\nkind: pair\nqueries: [x]\nresponses: [a, b]\nhorizon: 1\n"
     "systems:\n  m0:\n    rows:\n      - {history: [], query: x, probs: [1.0]}\n  m1: {rows: []}\n", 9, "entries"),
])
def test_errors_carry_line_numbers(tmp_path, text, line, needle):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    with pytest.raises(io.FormatError) as info:
        io.load_pair(path)
    assert info.value.line == line
    assert needle in str(info.value)


def test_budget_files(tmp_path):
    path = tmp_path / "b.json"
    path.write_text(json.dumps({"format_version": 1, "budgets": [{"type": "zcdp", "rho": 0.1}]}))
    assert io.load_budgets(path)[0].rho == 0.1
    path.write_text('[{"type": "zcdp"}]')
    with pytest.raises(io.FormatError, match="rho"):
        io.load_budgets(path)
    path.write_text('[\n{"type": }]')
    with pytest.raises(io.FormatError) as info:
        io.load_budgets(path)
    assert info.value.line == 2


# -- command line ------------------------------------------------------------------------------


@pytest.fixture
def rr_file(tmp_path):
    path = tmp_path / "rr.yaml"
    io.save_pair(make_rr(0.5), path)
    return str(path)


def test_verify_exit_codes(rr_file, capsys):
    assert main(["verify", "approx", rr_file, "--eps", "0.5", "--delta", "0"]) == EXIT_OK
    assert main(["verify", "approx", rr_file, "--eps", "0.4", "--delta", "0"]) == EXIT_FAIL
    assert main(["verify", "approx", rr_file, "--eps", "0.5"]) == EXIT_USAGE
    assert main(["verify", "rdp", rr_file, "--alpha", "2", "--bound", "0.1"]) == EXIT_FAIL
    assert main(["verify", "rdp", rr_file, "--alpha", "2", "--bound", "0.3"]) == EXIT_OK


def test_cap_exit_code(tmp_path, rng):
    path = tmp_path / "p.yaml"
    io.save_pair(random_pair(3, 3, 3, rng), path)
    assert main(["verify", "approx", str(path), "--eps", "1", "--delta", "0.1", "--cap", "3"]) == EXIT_CAP


def test_bad_file_is_usage_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("kind: [")
    assert main(["verify", "approx", str(path), "--eps", "1", "--delta", "0"]) == EXIT_USAGE
    assert main(["verify", "approx", str(tmp_path / "missing.yaml"), "--eps", "1", "--delta", "0"]) == EXIT_USAGE


def test_json_report_and_witness(rr_file, tmp_path, capsys):
    witness = tmp_path / "w.yaml"
    report = tmp_path / "r.json"
    code = main(["verify", "approx", rr_file, "--eps", "0.3", "--delta", "0", "--json",
                 "--witness-out", str(witness), "--report", str(report)])
    assert code == EXIT_FAIL
    out = json.loads(capsys.readouterr().out)
    assert out["status"] == "FAIL" and out["gap"] < 0
    assert out["manifest"]["command"] == "verify approx"
    assert json.loads(report.read_text())["achieved"] == out["achieved"]
    assert io.load_adversary(witness).horizon == 1


def test_decompose_then_simulate(tmp_path, rng, capsys):
    pair_path, dec_path, adv_path = tmp_path / "p.yaml", tmp_path / "d.yaml", tmp_path / "a.yaml"
    io.save_pair(random_close_pair(2, 2, 2, rng, 0.5, leak=0.2), pair_path)
    assert main(["fixtures", "gen", "--depth", "1", "--nx", "2", "--ny", "2", "-o", str(pair_path)]) == EXIT_OK
    assert main(["decompose", str(pair_path), "--eps", "0.5", "--delta", "0.999", "-o", str(dec_path)]) == EXIT_OK
    assert main(["decompose", str(pair_path), "--eps", "0.0", "--delta", "0.0", "-o", str(dec_path) + "x"]) == EXIT_FAIL
    io.save_adversary(Adversary({(): (0, "x0"), (((0, "x0"), "y0"),): (1, "x1"), (((0, "x0"), "y1"),): (1, "x0")}, 2),
                      adv_path)
    capsys.readouterr()
    assert main(["simulate", str(dec_path), str(dec_path), str(adv_path), "--b", "1", "--json"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["max_gap"] <= 1e-12
    assert sum(r["probability"] for r in out["distribution"]) == pytest.approx(1.0)


def test_compose_calc(capsys):
    assert main(["compose-calc", "optimal", "--k", "2", "--eps", "1", "--eps-prime", "0", "--json"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["result"]["delta"] == pytest.approx(0.4621171572600098, abs=1e-12)
    assert main(["compose-calc", "optimal", "--k", "2", "--eps", "1"]) == EXIT_USAGE
    assert main(["compose-calc", "advanced", "--k", "10", "--eps", "0.1", "--delta-slack", "1e-6"]) == EXIT_OK
    assert main(["compose-calc", "basic", "--k", "3", "--eps", "0.1", "--delta", "0.01"]) == EXIT_OK


def test_budget_command(tmp_path, capsys):
    path = tmp_path / "b.json"
    path.write_text(json.dumps([{"type": "zcdp", "rho": 0.1}, {"type": "zcdp", "rho": 0.5}]))
    assert main(["budget", "compose", str(path), "--json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["composed"]["rho"] == pytest.approx(0.6)
    assert main(["budget", "compose", str(path), "--to-dp", "--delta", "1e-6", "--alpha", "8"]) == EXIT_OK
    path.write_text(json.dumps([{"type": "zcdp", "rho": 0.1}, {"type": "rdp", "alpha": 2, "epsilon": 0.1}]))
    assert main(["budget", "compose", str(path)]) == EXIT_USAGE


def test_audit_command(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("a\n" + "\n".join(str(i) for i in range(20)) + "\n")
    queries = tmp_path / "q.json"
    queries.write_text(json.dumps([{"kind": "count", "column": "a", "op": ">=", "value": 10, "guess": 10}]))
    argv = ["audit", "guess-check", str(data), str(data), str(queries), "--eps", "0.5", "--c", "1",
            "--tol", "2", "--runs", "500", "--json"]
    assert main(argv) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["manifest"]["seed"] is not None
    assert main(argv[:-3] + ["--runs", "10"]) == EXIT_USAGE


def test_simulate_accepts_verify_witness(tmp_path, capsys):
    pair_path, dec_path, wit = tmp_path / "p.yaml", tmp_path / "d.yaml", tmp_path / "w.yaml"
    io.save_pair(random_close_pair(2, 2, 2, np.random.default_rng(11), 0.6, leak=0.1), pair_path)
    main(["verify", "approx", str(pair_path), "--eps", "1", "--delta", "0.5", "--witness-out", str(wit)])
    main(["decompose", str(pair_path), "--eps", "1", "--delta", "0.5", "-o", str(dec_path)])
    capsys.readouterr()
    assert main(["simulate", str(dec_path), str(wit), "--b", "0", "--json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["max_gap"] <= 1e-12


def test_reports_are_reproducible(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("a\n" + "\n".join(str(i) for i in range(20)) + "\n")
    queries = tmp_path / "q.json"
    queries.write_text(json.dumps([{"kind": "count", "column": "a", "op": ">=", "value": 10, "guess": 12}]))
    texts = []
    for name in ("r1.json", "r2.json"):
        main(["audit", "guess-check", str(data), str(data), str(queries), "--eps", "0.5", "--c", "1",
              "--tol", "1", "--runs", "300", "--seed", "9", "--report", str(tmp_path / name)])
        texts.append((tmp_path / name).read_text())
    assert texts[0] == texts[1]

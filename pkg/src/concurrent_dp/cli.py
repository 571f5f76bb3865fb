"""Command-line front end.

Exit codes: 0 success/PASS, 1 FAIL (violation found), 2 usage or parse
error, 3 instance too large for exhaustive verification.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from importlib import metadata

import numpy as np

from . import calculators, io, mechanisms
from .core import Adversary, ApproxDP, compose_pairs
from .decompose import ConstructionError, check_identity, decompose, identity_gap, simulate_via_rr
from .divergence import verify_approx_dp, verify_rdp
from .engine import DEFAULT_CAP, EnumerationCapExceeded, transcript_distribution
from .fixtures import random_close_pair, random_pair
from .renyi import cdp_compose, rdp_to_dp

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAP = 0, 1, 2, 3
DEFAULT_SEED = 20240611


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunManifest:
    command: str
    inputs: list
    parameters: dict
    seed: int | None = None
    version: str = field(default_factory=_version)

    def finish(self) -> dict:
        # no wall-clock fields: the same inputs and seed give byte-identical reports
        return asdict(self)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else "-inf" if v < 0 else "nan"
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def _emit(args, manifest: RunManifest, report: dict, summary: str) -> None:
    report = dict(report, manifest=manifest.finish())
    text = json.dumps(_jsonable(report), indent=2)
    if getattr(args, "report", None):
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    if args.json:
        print(text)
    else:
        print(summary)


def _params(args, *names) -> dict:
    return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}


# -- verify ------------------------------------------------------------------------------------


def cmd_verify(args) -> int:
    pair = io.load_pair(args.pair)
    if args.notion == "approx":
        if args.eps is None or args.delta is None:
            raise _Usage("verify approx needs --eps and --delta")
        verdict = verify_approx_dp(pair, args.eps, args.delta, cap=args.cap, method=args.method, jobs=args.jobs)
        worst = verdict.worst
        detail = {"delta_achieved": worst.delta, "direction": worst.direction,
                  "witness_event": [io.transcript_to_list(t) for t in sorted(worst.witness_set, key=repr)]}
        params = _params(args, "eps", "delta", "cap", "method")
    else:
        if args.alpha is None or args.bound is None:
            raise _Usage("verify rdp needs --alpha and --bound")
        verdict = verify_rdp(pair, args.alpha, args.bound, cap=args.cap, method=args.method, jobs=args.jobs)
        worst = verdict.worst
        detail = {"divergence_achieved": worst.divergence, "direction": worst.direction}
        params = _params(args, "alpha", "bound", "cap", "method")
    adv = worst.witness_adversary
    report = {
        "status": verdict.status,
        "claim": verdict.claim,
        "achieved": verdict.achieved,
        "gap": verdict.gap,
        "adversaries_checked": verdict.adversaries_checked,
        "witness_adversary": io.adversary_to_dict(adv) if adv is not None else None,
        **detail,
    }
    if args.witness_out and adv is not None:
        io.save_adversary(adv, args.witness_out)
    manifest = RunManifest(f"verify {args.notion}", [args.pair], params)
    _emit(args, manifest, report,
          f"{verdict.status}: worst {verdict.achieved:.12g} vs claim {verdict.claim} "
          f"({verdict.adversaries_checked} adversaries, method={verdict.method})")
    return EXIT_OK if verdict.passed else EXIT_FAIL


# -- decompose / simulate ------------------------------------------------------------------------


def cmd_decompose(args) -> int:
    pair = io.load_pair(args.pair)
    try:
        dec = decompose(pair, args.eps, args.delta)
    except ConstructionError as exc:
        manifest = RunManifest("decompose", [args.pair], _params(args, "eps", "delta"))
        _emit(args, manifest, {"status": "FAIL", "stage": exc.stage, "error": str(exc)}, f"FAIL: {exc}")
        return EXIT_FAIL
    gap = identity_gap(dec, pair)
    try:
        enum_gap = check_identity(dec, pair, cap=args.cap)
    except EnumerationCapExceeded:
        enum_gap = None
    summary = {"max_identity_gap": gap, "max_identity_gap_enumerated": enum_gap, "epsilon_used": dec.epsilon}
    io.save_decomposition(dec, pair, args.output, summary)
    manifest = RunManifest("decompose", [args.pair], _params(args, "eps", "delta", "output"))
    _emit(args, manifest, {"status": "PASS", **summary, "output": args.output},
          f"PASS: wrote {args.output}; max per-transcript identity gap {gap:.3g}")
    return EXIT_OK


def _lift_single(adv: Adversary) -> Adversary:
    """Address a plain single-system adversary to system 0 of a one-element composition."""
    def lift(h):
        return tuple(((0, q), y) for q, y in h)

    return Adversary({lift(h): (0, q) for h, q in adv.strategy.items()}, adv.horizon)


def cmd_simulate(args) -> int:
    loaded = [io.load_decomposition(p) for p in args.decompositions]
    adv = io.load_adversary(args.adversary)
    decomps = [d for d, _ in loaded]
    pairs = [p for _, p in loaded]
    if len(pairs) == 1 and all(q in pairs[0].m0.queries for q in adv.strategy.values()):
        adv = _lift_single(adv)
    simulated = simulate_via_rr(decomps, adv, args.b)
    direct = transcript_distribution(adv, [p[args.b] for p in pairs])
    gap = simulated.max_gap(direct)
    ok = gap <= args.tol
    report = {
        "status": "PASS" if ok else "FAIL",
        "b": args.b,
        "max_gap": gap,
        "distribution": [{"transcript": io.transcript_to_list(t), "probability": p}
                         for t, p in sorted(simulated.probs.items(), key=lambda kv: repr(kv[0]))],
    }
    manifest = RunManifest("simulate", list(args.decompositions) + [args.adversary], _params(args, "b", "tol"))
    _emit(args, manifest, report, f"{report['status']}: max per-transcript gap {gap:.3g} (<= {args.tol:g} required)")
    return EXIT_OK if ok else EXIT_FAIL


# -- calculators / budgets -------------------------------------------------------------------------


def cmd_compose_calc(args) -> int:
    k, eps, delta = args.k, args.eps, args.delta
    if args.which == "optimal":
        if (args.eps_prime is None) == (args.delta_prime is None):
            raise _Usage("compose-calc optimal needs exactly one of --eps-prime and --delta-prime")
        if args.eps_prime is not None:
            result = {"epsilon": args.eps_prime, "delta": calculators.optimal_homogeneous(k, eps, delta, args.eps_prime)}
        else:
            result = {"epsilon": calculators.optimal_epsilon(k, eps, delta, args.delta_prime), "delta": args.delta_prime}
    elif args.which == "advanced":
        if args.delta_slack is None:
            raise _Usage("compose-calc advanced needs --delta-slack")
        e, d = calculators.advanced_composition(k, eps, delta, args.delta_slack)
        result = {"epsilon": e, "delta": d}
    else:
        b = calculators.basic_composition([ApproxDP(eps, delta)] * k)
        result = {"epsilon": b.epsilon, "delta": b.delta}
    manifest = RunManifest(f"compose-calc {args.which}", [], _params(args, "k", "eps", "delta", "eps_prime",
                                                                      "delta_prime", "delta_slack"))
    table = f"{'k':>4} {'eps':>10} {'delta':>10} | {'eps_prime':>14} {'delta_prime':>14}\n" \
            f"{k:>4} {eps:>10.6g} {delta:>10.6g} | {result['epsilon']:>14.8g} {result['delta']:>14.8g}"
    _emit(args, manifest, {"calculator": args.which, "result": result}, table)
    return EXIT_OK


def cmd_budget(args) -> int:
    budgets = io.load_budgets(args.budgets)
    try:
        composed = cdp_compose(budgets)
        out = {"composed": io.budget_to_dict(composed)}
        if args.to_dp:
            if args.delta is None:
                raise _Usage("--to-dp needs --delta")
            dp = rdp_to_dp(composed, args.delta, args.alpha)
            out["approx_dp"] = io.budget_to_dict(dp)
    except (TypeError, ValueError) as exc:
        raise _Usage(str(exc)) from None
    manifest = RunManifest("budget compose", [args.budgets], _params(args, "to_dp", "delta", "alpha"))
    line = f"composed: {out['composed']}"
    if "approx_dp" in out:
        line += f"\nas (eps, delta)-DP: {out['approx_dp']}"
    _emit(args, manifest, out, line)
    return EXIT_OK


# -- audit / fixtures ---------------------------------------------------------------------------------


def cmd_audit(args) -> int:
    columns = args.columns.split(",") if args.columns else None
    d0 = mechanisms.load_csv_dataset(args.dataset, columns)
    d1 = mechanisms.load_csv_dataset(args.neighbor, columns)
    script = mechanisms.load_query_script(args.queries)
    config = mechanisms.GuessCheckConfig(args.tol, args.c, args.eps)
    runner = mechanisms.guess_check_runner(config, noisy=not args.broken)
    claim = args.claim if args.claim is not None else 4 * args.eps
    report = mechanisms.audit_mechanism(runner, (d0, d1), mechanisms.script_adversary(script), claim,
                                        args.runs, rng=args.seed)
    manifest = RunManifest("audit guess-check", [args.dataset, args.neighbor, args.queries],
                           _params(args, "eps", "c", "tol", "runs", "claim", "broken"), seed=args.seed)
    _emit(args, manifest, report.to_dict(),
          f"{report.verdict}: empirical epsilon lower bound {report.epsilon_lower:.4f} vs claim {claim:.4f} "
          f"({args.runs} runs per dataset, {report.cells} cells)")
    return EXIT_OK if report.consistent else EXIT_FAIL


def cmd_fixtures(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.kind == "close":
        pair = random_close_pair(args.nx, args.ny, args.depth, rng, args.step_eps, args.leak)
    else:
        pair = random_pair(args.nx, args.ny, args.depth, rng)
    io.save_pair(pair, args.output)
    manifest = RunManifest("fixtures gen", [], _params(args, "depth", "nx", "ny", "kind", "output"), seed=args.seed)
    _emit(args, manifest, {"output": args.output}, f"wrote {args.output}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------------------


class _Usage(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print the JSON report instead of a summary")
    common.add_argument("--report", help="also write the JSON report to this file")

    p = argparse.ArgumentParser(prog="concurrent-dp", description="Exact privacy checks for finite interactive systems.")
    p.add_argument("--version", action="version", version=_version())
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="worst case over all deterministic adversaries")
    v.add_argument("notion", choices=["approx", "rdp"])
    v.add_argument("pair")
    v.add_argument("--eps", type=float)
    v.add_argument("--delta", type=float)
    v.add_argument("--alpha", type=float)
    v.add_argument("--bound", type=float)
    v.add_argument("--cap", type=int, default=DEFAULT_CAP)
    v.add_argument("--method", choices=["enumerate", "dp"], default="enumerate")
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--witness-out", help="write the worst adversary as a YAML document")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("decompose", parents=[common], help="build the approximate-RR decomposition")
    d.add_argument("pair")
    d.add_argument("--eps", type=float, required=True)
    d.add_argument("--delta", type=float, required=True)
    d.add_argument("-o", "--output", required=True)
    d.add_argument("--cap", type=int, default=DEFAULT_CAP)
    d.set_defaults(func=cmd_decompose)

    s = sub.add_parser("simulate", parents=[common], help="run the RR-based simulator and compare with direct interaction")
    s.add_argument("decompositions", nargs="+")
    s.add_argument("adversary")
    s.add_argument("--b", type=int, choices=[0, 1], required=True)
    s.add_argument("--tol", type=float, default=1e-9)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compose-calc", parents=[common], help="composition parameter calculators")
    c.add_argument("which", choices=["optimal", "advanced", "basic"])
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--eps", type=float, required=True)
    c.add_argument("--delta", type=float, default=0.0)
    c.add_argument("--eps-prime", type=float)
    c.add_argument("--delta-prime", type=float)
    c.add_argument("--delta-slack", type=float)
    c.set_defaults(func=cmd_compose_calc)

    b = sub.add_parser("budget", help="RDP / zCDP / tCDP budget arithmetic")
    bsub = b.add_subparsers(dest="action", required=True)
    bc = bsub.add_parser("compose", parents=[common])
    bc.add_argument("budgets")
    bc.add_argument("--to-dp", action="store_true")
    bc.add_argument("--delta", type=float)
    bc.add_argument("--alpha", type=float, help="order at which zCDP/tCDP is converted")
    bc.set_defaults(func=cmd_budget)

    a = sub.add_parser("audit", help="Monte Carlo privacy audits")
    asub = a.add_subparsers(dest="mechanism", required=True)
    ag = asub.add_parser("guess-check", parents=[common])
    ag.add_argument("dataset")
    ag.add_argument("neighbor")
    ag.add_argument("queries")
    ag.add_argument("--eps", type=float, required=True)
    ag.add_argument("--c", type=int, required=True)
    ag.add_argument("--tol", type=float, required=True)
    ag.add_argument("--runs", type=int, default=100_000)
    ag.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ag.add_argument("--claim", type=float, help="epsilon to test (default 4 * eps)")
    ag.add_argument("--columns", help="comma-separated numeric columns to read")
    ag.add_argument("--broken", action="store_true", help="drop threshold and query noise (negative control)")
    ag.set_defaults(func=cmd_audit)

    f = sub.add_parser("fixtures", help="random test fixtures")
    fsub = f.add_subparsers(dest="action", required=True)
    fg = fsub.add_parser("gen", parents=[common])
    fg.add_argument("--depth", type=int, required=True)
    fg.add_argument("--nx", type=int, required=True)
    fg.add_argument("--ny", type=int, required=True)
    fg.add_argument("--seed", type=int, default=DEFAULT_SEED)
    fg.add_argument("--kind", choices=["random", "close"], default="random")
    fg.add_argument("--step-eps", type=float, default=0.5)
    fg.add_argument("--leak", type=float, default=0.0)
    fg.add_argument("-o", "--output", required=True)
    fg.set_defaults(func=cmd_fixtures)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EnumerationCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except io.FormatError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (_Usage, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

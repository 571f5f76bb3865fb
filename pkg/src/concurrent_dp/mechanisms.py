"""Mechanism zoo: finite system pairs for exact checks and a sampler for Guess-and-Check.

Finite models live on the integer grid with unit sensitivity. Laplace noise
becomes the two-sided geometric law ``Pr[Z = z] ~ exp(-eps |z|)``, cut at
``+-W`` with the tails folded into the two boundary bins. A one-step shift
of a folded geometric still changes every bin by a factor of exactly
``e^eps`` or less, so folding costs no privacy for values inside the window.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import beta as beta_dist

from .core import InteractiveSystem, SystemPair, all_histories, rr_probability

PASS, WRONG, HALT = "PASS", "WRONG", "HALT"


# -- randomized response ---------------------------------------------------------


def make_rr(epsilon: float) -> SystemPair:
    """One-round ``RR_eps``: outputs ``b`` w.p. ``e^eps / (1 + e^eps)``."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    p = rr_probability(epsilon)
    rows = [{((), "x"): [p, 1.0 - p]}, {((), "x"): [1.0 - p, p]}]
    m0, m1 = (InteractiveSystem(("x",), (0, 1), 1, r, f"RR{b}") for b, r in enumerate(rows))
    return SystemPair(m0, m1)


APPROX_RR_LABELS = ("0:top", "1:top", "0:bot", "1:bot")


def make_approx_rr(epsilon: float, delta: float) -> SystemPair:
    """One-round approximate RR.

    Secret ``b`` yields ``(b, top)`` w.p. ``delta``, ``(b, bot)`` w.p.
    ``(1-delta) p`` and ``(1-b, bot)`` w.p. ``(1-delta) q``.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    p = rr_probability(epsilon)
    q = 1.0 - p
    r0 = [delta, 0.0, (1 - delta) * p, (1 - delta) * q]
    r1 = [0.0, delta, (1 - delta) * q, (1 - delta) * p]
    m0 = InteractiveSystem(("x",), APPROX_RR_LABELS, 1, {((), "x"): r0}, "ARR0")
    m1 = InteractiveSystem(("x",), APPROX_RR_LABELS, 1, {((), "x"): r1}, "ARR1")
    return SystemPair(m0, m1)


# -- discrete Laplace ------------------------------------------------------------------


def default_window(epsilon_step: float) -> int:
    return int(math.ceil(40.0 / epsilon_step))


def folded_geometric(epsilon: float, width: int) -> np.ndarray:
    """Law of the two-sided geometric on ``-width..width`` with tails folded in.

    Index ``j`` holds ``z = j - width``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    z = np.arange(-width, width + 1)
    r = math.exp(-epsilon)
    pmf = (1.0 - r) / (1.0 + r) * np.exp(-epsilon * np.abs(z))
    tail = r ** width / (1.0 + r)  # Pr[Z >= width] = Pr[Z <= -width]
    pmf[0] = tail
    pmf[-1] = tail
    return pmf / pmf.sum()


def geometric_tail(epsilon: float, width: int) -> float:
    """``Pr[|Z| > width]`` for the untruncated two-sided geometric."""
    r = math.exp(-epsilon)
    return 2.0 * r ** (width + 1) / (1.0 + r)


def _integral(v, what):
    if float(v) != int(v):
        raise ValueError(f"{what} value {v!r} is off the integer grid; rescale so sensitivity is 1")
    return int(v)


def make_discrete_laplace(epsilon_step: float, truncation: int | None = None, rounds: int = 1,
                          queries: Mapping | None = None) -> SystemPair:
    """Answer each query ``g`` with ``g(X) + Z``, ``Z`` folded geometric at ``epsilon_step``.

    ``queries`` maps labels to ``(g(X_0), g(X_1))`` integer pairs differing by
    at most 1 (default: a single query ``{"g": (0, 1)}``). Over ``rounds``
    rounds the pair is ``(rounds * epsilon_step, 0)``-indistinguishable.
    """
    queries = dict(queries or {"g": (0, 1)})
    width = default_window(epsilon_step) if truncation is None else int(truncation)
    vals = {}
    for label, pair in queries.items():
        a, b = (_integral(v, "query") for v in pair)
        if abs(a - b) > 1:
            raise ValueError(f"query {label!r} has sensitivity {abs(a - b)} > 1")
        vals[label] = (a, b)
    lo = min(min(v) for v in vals.values()) - width
    hi = max(max(v) for v in vals.values()) + width
    outputs = tuple(range(lo, hi + 1))

    def law(center):
        row = np.array([_geom_pmf(y - center, epsilon_step) for y in outputs])
        # boundary bins carry the whole tail beyond the window
        row[0] = geometric_cdf(lo - center, epsilon_step)
        row[-1] = geometric_cdf(center - hi, epsilon_step)
        return row / row.sum()

    out = []
    for b in (0, 1):
        rows = {}
        labels = tuple(vals)
        for h in all_histories(labels, outputs, rounds):
            for x in labels:
                rows[(h, x)] = law(vals[x][b])
        out.append(InteractiveSystem(labels, outputs, rounds, rows, f"Lap{b}"))
    return SystemPair(*out)


def _geom_pmf(z: int, epsilon: float) -> float:
    r = math.exp(-epsilon)
    return (1.0 - r) / (1.0 + r) * math.exp(-epsilon * abs(z))


def geometric_cdf(z: int, epsilon: float) -> float:
    """``Pr[Z <= z]`` for the untruncated two-sided geometric."""
    r = math.exp(-epsilon)
    if z < 0:
        return r ** (-z) / (1.0 + r)
    return 1.0 - r ** (z + 1) / (1.0 + r)


# -- finite sparse vector ---------------------------------------------------------------


@dataclass(frozen=True)
class SVTModel:
    """Finite Guess-and-Check SVT with ``v_i`` withheld.

    ``queries`` maps labels to ``(d_0, d_1)``: the integer errors
    ``|f(X) - tau|`` on the two neighbours (differing by at most one).
    """

    tolerance: int
    cutoff: int
    epsilon: float
    queries: Mapping = field(default_factory=lambda: {"q": (0, 1)})
    horizon: int = 2
    truncation: int | None = None


def make_svt_finite(config: SVTModel) -> SystemPair:
    """Exact kernels of the noisy-threshold test, threshold noise integrated out.

    Threshold noise is folded geometric at ``epsilon``, per-query noise at
    ``epsilon / cutoff``. A query answers WRONG iff ``d + gamma >= E + rho``.
    After ``cutoff`` WRONGs every answer is HALT. The kernel at a history is
    the posterior predictive given the earlier PASS/WRONG answers.
    """
    c, eps = config.cutoff, config.epsilon
    if c < 1:
        raise ValueError("cutoff must be >= 1")
    if not eps > 0:
        raise ValueError("epsilon must be > 0")
    w_rho = default_window(eps) if config.truncation is None else int(config.truncation)
    w_gam = default_window(eps / c) if config.truncation is None else int(config.truncation)
    rho_vals = np.arange(-w_rho, w_rho + 1)
    prior = folded_geometric(eps, w_rho)
    gam_vals = np.arange(-w_gam, w_gam + 1)
    gam_pmf = folded_geometric(eps / c, w_gam)
    # survival[s] = Pr[gamma >= s] for integer s, clipped to the support
    gam_sf = np.concatenate([np.cumsum(gam_pmf[::-1])[::-1], [0.0]])

    def p_wrong(d: int) -> np.ndarray:
        need = _integral(config.tolerance, "tolerance") + rho_vals - d
        idx = np.clip(need + w_gam, 0, len(gam_vals))
        return gam_sf[idx]

    labels = tuple(config.queries)
    d = {}
    for x, pair in config.queries.items():
        a, b = (_integral(v, "error") for v in pair)
        if abs(a - b) > 1:
            raise ValueError(f"query {x!r} errors differ by more than 1")
        d[x] = (a, b)
    responses = (PASS, WRONG, HALT)
    wrong = {(x, b): p_wrong(d[x][b]) for x in labels for b in (0, 1)}

    out = []
    for b in (0, 1):
        def kernel(h, x, b=b):
            if sum(1 for _, y in h if y == WRONG) >= c or any(y == HALT for _, y in h):
                return [0.0, 0.0, 1.0]
            post = prior.copy()
            for q, y in h:
                pw = wrong[(q, b)]
                post = post * (pw if y == WRONG else 1.0 - pw)
            total = post.sum()
            if total <= 0.0:
                return [1.0, 0.0, 0.0]
            pw = float(post @ wrong[(x, b)] / total)
            return [1.0 - pw, pw, 0.0]

        out.append(InteractiveSystem.from_function(labels, responses, config.horizon, kernel, f"SVT{b}"))
    return SystemPair(*out)


def svt_truncation_slack(config: SVTModel) -> float:
    """Untruncated tail mass dropped by folding, summed over all noise draws."""
    c, eps = config.cutoff, config.epsilon
    w_rho = default_window(eps) if config.truncation is None else int(config.truncation)
    w_gam = default_window(eps / c) if config.truncation is None else int(config.truncation)
    return geometric_tail(eps, w_rho) + config.horizon * geometric_tail(eps / c, w_gam)


# -- executable Guess-and-Check ---------------------------------------------------------------


@dataclass(frozen=True)
class GuessCheckConfig:
    tolerance: float
    cutoff: int
    epsilon: float

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance E must be > 0")
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise ValueError("cutoff c must be a positive integer")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")


@dataclass
class GuessCheckState:
    threshold_noise: float
    wrong_count: int = 0
    halted: bool = False


class HaltedError(RuntimeError):
    """Query issued after the mechanism halted."""


class GuessAndCheck:
    """One run of private Guess-and-Check on a fixed dataset.

    ``query(f, tau)`` returns ``("PASS",)`` or ``("WRONG", v)``. With
    ``noisy=False`` both threshold and query noise are dropped (a
    deliberately broken variant for audit controls).
    """

    def __init__(self, config: GuessCheckConfig, dataset, rng: np.random.Generator, noisy: bool = True):
        self.config = config
        self.dataset = dataset
        self.rng = rng
        self.noisy = noisy
        self.scale = config.cutoff / config.epsilon
        rho = rng.laplace(0.0, 1.0 / config.epsilon) if noisy else 0.0
        self.state = GuessCheckState(float(rho))

    def query(self, f: Callable, tau: float) -> tuple:
        st = self.state
        if st.halted:
            raise HaltedError("mechanism halted after reaching the WRONG cutoff")
        value = float(f(self.dataset))
        gamma = self.rng.laplace(0.0, self.scale) if self.noisy else 0.0
        if abs(value - tau) + gamma >= self.config.tolerance + st.threshold_noise:
            v = value + self.rng.laplace(0.0, self.scale)
            st.wrong_count += 1
            if st.wrong_count == self.config.cutoff:
                st.halted = True
            return (WRONG, v)
        return (PASS,)


def run_guess_and_check(config: GuessCheckConfig, dataset, queries, rng: np.random.Generator,
                        noisy: bool = True):
    """Generator form: ``queries`` yields ``(f, tau)`` and may read prior outputs.

    ``queries`` is either an iterable of ``(f, tau)`` or a callable taking the
    list of outputs so far and returning the next ``(f, tau)`` or ``None``.
    Stops once the mechanism halts.
    """
    mech = GuessAndCheck(config, dataset, rng, noisy)
    outputs: list = []
    if callable(queries):
        source = iter(lambda: queries(outputs), None)
    else:
        source = iter(queries)
    for f, tau in source:
        if mech.state.halted:
            return
        out = mech.query(f, tau)
        outputs.append(out)
        yield out


# -- datasets and query scripts ------------------------------------------------------------------


def load_csv_dataset(path, columns: Sequence[str] | None = None) -> dict:
    """Numeric columns of a CSV file as ``{name: float array}``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty CSV")
        cols = list(columns) if columns else list(reader.fieldnames)
        missing = [c for c in cols if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        data: dict = {c: [] for c in cols}
        for lineno, row in enumerate(reader, start=2):
            for c in cols:
                try:
                    data[c].append(float(row[c]))
                except (TypeError, ValueError):
                    raise ValueError(f"{path}:{lineno}: column {c!r} is not numeric: {row[c]!r}") from None
    return {c: np.asarray(v) for c, v in data.items()}


_OPS = {
    ">=": np.greater_equal,
    ">": np.greater,
    "<=": np.less_equal,
    "<": np.less,
    "==": np.equal,
    "!=": np.not_equal,
}


def make_query(spec: Mapping) -> Callable:
    """Build a 1-Lipschitz statistic (under replace-one neighbours).

    ``{"kind": "count", "column": c, "op": ">=", "value": v}`` counts
    matching records; ``{"kind": "sum", "column": c, "lo": a, "hi": b}``
    sums values clamped to ``[a, b]`` and needs ``b - a <= 1``.
    """
    kind = spec.get("kind")
    col = spec.get("column")
    if kind == "count":
        op = _OPS[spec.get("op", ">=")]
        value = float(spec["value"])
        return lambda data: float(np.count_nonzero(op(data[col], value)))
    if kind == "sum":
        lo, hi = float(spec["lo"]), float(spec["hi"])
        if not 0.0 <= hi - lo <= 1.0:
            raise ValueError("sum query needs 0 <= hi - lo <= 1 to stay 1-Lipschitz")
        return lambda data: float(np.clip(data[col], lo, hi).sum())
    raise ValueError(f"unknown query kind {kind!r}")


def load_query_script(path) -> list:
    """Parse a JSON list of query specs, each with a ``guess``.

    An entry with ``"guess_from_last_v": true`` replaces its guess by the
    most recent WRONG value, which makes the script adaptive.
    """
    with open(path) as fh:
        items = json.load(fh)
    if not isinstance(items, list) or not items:
        raise ValueError(f"{path}: expected a nonempty JSON list of queries")
    return [dict(item, _f=make_query(item)) for item in items]


def script_adversary(script: Sequence[Mapping]) -> Callable:
    """Deterministic adversary: next ``(f, tau)`` given outputs so far, or ``None``."""

    def next_query(outputs):
        i = len(outputs)
        if i >= len(script):
            return None
        item = script[i]
        tau = float(item.get("guess", 0.0))
        if item.get("guess_from_last_v"):
            vs = [o[1] for o in outputs if o[0] == WRONG]
            if vs:
                tau = vs[-1]
        return item["_f"], tau

    return next_query


# -- Monte Carlo audit ------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    epsilon_lower: float
    epsilon_claim: float
    runs: int
    confidence: float
    witness_cell: tuple | None
    direction: int
    counts: tuple = field(repr=False)
    cells: int = 0

    @property
    def consistent(self) -> bool:
        return self.epsilon_lower <= self.epsilon_claim

    @property
    def verdict(self) -> str:
        return "CONSISTENT" if self.consistent else "INCONSISTENT"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "epsilon_lower": self.epsilon_lower,
            "epsilon_claim": self.epsilon_claim,
            "runs": self.runs,
            "confidence": self.confidence,
            "cells": self.cells,
            "direction": self.direction,
            "witness_cell": None if self.witness_cell is None else [list(map(str, c)) for c in self.witness_cell],
            "witness_counts": list(self.counts),
        }


def clopper_pearson(k: int, n: int, alpha: float) -> tuple:
    """Two-sided ``1 - alpha`` interval for a binomial proportion."""
    lo = 0.0 if k == 0 else float(beta_dist.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


def output_cell(outputs: Sequence[tuple], bucket: float) -> tuple:
    """Discretize one run's outputs: outcome per round, WRONG values bucketed."""
    cell = []
    for o in outputs:
        if o[0] == WRONG:
            cell.append((WRONG, int(math.floor(o[1] / bucket))))
        else:
            cell.append((o[0],))
    return tuple(cell)


def audit_mechanism(runner: Callable, dataset_pair: Sequence, adversary_script: Callable,
                    epsilon_claim: float, runs: int, rng: np.random.Generator | int | None = None,
                    confidence: float = 0.95, cell: Callable | None = None) -> AuditReport:
    """One-sided Monte Carlo lower bound on epsilon over discretized output cells.

    ``runner(dataset, adversary_script, rng)`` returns the list of outputs of
    one run. For each cell and direction the bound is
    ``log(lower_P / upper_Q)`` from Clopper-Pearson intervals, Bonferroni
    corrected across cells and both directions. CONSISTENT iff the largest
    bound is at most ``epsilon_claim``. This can refute a claim, never prove it.
    """
    if runs < 100:
        raise ValueError("at least 100 runs per dataset are needed for a meaningful audit")
    rng = np.random.default_rng(rng)
    cell = cell or (lambda outs: outs)
    counts = []
    for data in dataset_pair:
        tally: dict = {}
        for _ in range(runs):
            key = cell(runner(data, adversary_script, rng))
            tally[key] = tally.get(key, 0) + 1
        counts.append(tally)
    keys = sorted(set(counts[0]) | set(counts[1]), key=repr)
    alpha = (1.0 - confidence) / max(1, 2 * len(keys))
    best, witness, direction, wc = -math.inf, None, 0, (0, 0)
    for key in keys:
        k0, k1 = counts[0].get(key, 0), counts[1].get(key, 0)
        ci0, ci1 = clopper_pearson(k0, runs, alpha), clopper_pearson(k1, runs, alpha)
        for b, (lo, hi) in enumerate(((ci0[0], ci1[1]), (ci1[0], ci0[1]))):
            if lo <= 0.0:
                continue
            bound = math.log(lo / hi)
            if bound > best:
                best, witness, direction, wc = bound, key, b, (k0, k1)
    return AuditReport(max(best, 0.0), epsilon_claim, runs, confidence, witness, direction, wc, len(keys))


def guess_check_runner(config: GuessCheckConfig, bucket: float | None = None, noisy: bool = True) -> Callable:
    """Runner for :func:`audit_mechanism` returning discretized outputs of one run."""
    bucket = 1.0 / config.epsilon if bucket is None else bucket

    def run(data, adversary, rng):
        outs = list(run_guess_and_check(config, data, adversary, rng, noisy))
        if len(outs) and outs[-1][0] == WRONG and sum(o[0] == WRONG for o in outs) == config.cutoff:
            outs.append((HALT,))
        return output_cell(outs, bucket)

    return run

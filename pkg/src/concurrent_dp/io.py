"""YAML tree documents for systems, adversaries and decompositions; JSON for budgets.

Every document carries ``format_version`` and ``kind``. Labels are YAML
scalars; composed queries ``(i, x)`` are written as two-element lists and
read back as tuples. Parse errors name the file and, where known, the line.

Pair document::

    format_version: 1
    kind: pair
    queries: [x0, x1]
    responses: [y0, y1]
    horizon: 2
    systems:
      m0:
        rows:
          - {history: [], query: x0, probs: [0.4, 0.6]}
          - {history: [[x0, y0]], query: x1, probs: [0.5, 0.5]}
      m1: ...

Rows may be omitted at histories no adversary can reach; they are filled
with the uniform law on load.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import yaml

from .core import (
    ApproxDP,
    Adversary,
    InteractiveSystem,
    RDP,
    SystemPair,
    TCDP,
    ZCDP,
    all_histories,
    validate_system,
)
from .decompose import Decomposition

FORMAT_VERSION = 1


class FormatError(ValueError):
    """Malformed input document."""

    def __init__(self, path, message: str, line: int | None = None):
        where = f"{path}:{line}" if line else f"{path}"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=True)
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def _listify(v):
    if isinstance(v, tuple):
        return [_listify(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def _load_doc(path, kind: str) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(path, f"cannot read: {exc.strerror}") from None
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise FormatError(path, f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    if not isinstance(doc, dict):
        raise FormatError(path, "top level must be a mapping", 1)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(path, f"unsupported format_version {version!r} (expected {FORMAT_VERSION})", doc["__line__"])
    if doc.get("kind") != kind:
        raise FormatError(path, f"expected kind {kind!r}, found {doc.get('kind')!r}", doc["__line__"])
    return doc


def _require(doc, key, path):
    if key not in doc:
        raise FormatError(path, f"missing field {key!r}", doc.get("__line__"))
    return doc[key]


def _system_from_doc(sdoc, queries, responses, horizon, path, name) -> InteractiveSystem:
    if not isinstance(sdoc, dict):
        raise FormatError(path, f"system {name!r} must be a mapping")
    rows = {}
    for item in _require(sdoc, "rows", path) or []:
        line = item.get("__line__") if isinstance(item, dict) else None
        if not isinstance(item, dict):
            raise FormatError(path, f"row entries of {name!r} must be mappings", line)
        try:
            h = tuple(tuple(_tuplify(step)) for step in item["history"])
            q = _tuplify(item["query"])
            probs = [float(p) for p in item["probs"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(path, f"bad row in {name!r}: {exc}", line) from None
        if any(len(step) != 2 for step in h):
            raise FormatError(path, "history steps must be [query, response] pairs", line)
        if q not in queries:
            raise FormatError(path, f"unknown query {q!r}", line)
        if len(probs) != len(responses):
            raise FormatError(path, f"row has {len(probs)} entries for {len(responses)} responses", line)
        if (h, q) in rows:
            raise FormatError(path, f"duplicate row for history {h!r} query {q!r}", line)
        rows[(h, q)] = probs
    system = InteractiveSystem(queries, responses, horizon, rows, str(sdoc.get("name", name)))
    report = validate_system(system)
    if not report.ok:
        raise FormatError(path, f"system {name!r} is not valid:\n{report}", sdoc.get("__line__"))
    uniform = [1.0 / len(responses)] * len(responses)
    for h in all_histories(queries, responses, horizon):
        for x in queries:
            rows.setdefault((h, x), uniform)
    return InteractiveSystem(queries, responses, horizon, rows, system.name)


def _spaces(doc, path):
    queries = tuple(_tuplify(q) for q in _require(doc, "queries", path))
    responses = tuple(_tuplify(y) for y in _require(doc, "responses", path))
    horizon = _require(doc, "horizon", path)
    if not isinstance(horizon, int) or horizon < 1:
        raise FormatError(path, "horizon must be a positive integer", doc["__line__"])
    return queries, responses, horizon


def _system_doc(system) -> dict:
    out = []
    for (h, q), row in system.rows.items():
        out.append({"history": [_listify(tuple(s)) for s in h], "query": _listify(q),
                    "probs": [float(p) for p in row]})
    return {"name": system.name, "rows": out}


def _header(kind, system) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "queries": [_listify(q) for q in system.queries],
        "responses": [_listify(y) for y in system.responses],
        "horizon": system.horizon,
    }


def _dump(doc, path):
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=120))


def save_pair(pair: SystemPair, path) -> None:
    doc = _header("pair", pair.m0)
    doc["systems"] = {"m0": _system_doc(pair.m0), "m1": _system_doc(pair.m1)}
    _dump(doc, path)


def load_pair(path) -> SystemPair:
    doc = _load_doc(path, "pair")
    queries, responses, horizon = _spaces(doc, path)
    systems = _require(doc, "systems", path)
    m = [_system_from_doc(_require(systems, k, path), queries, responses, horizon, path, k) for k in ("m0", "m1")]
    return SystemPair(*m)


DECOMP_KEYS = ("m0", "m1", "e0", "e1", "n0", "n1")


def save_decomposition(dec: Decomposition, pair: SystemPair, path, summary: dict | None = None) -> None:
    """Four decomposition systems plus the source pair they reproduce."""
    doc = _header("decomposition", pair.m0)
    doc["epsilon"] = dec.epsilon
    doc["delta"] = dec.delta
    if summary:
        doc["summary"] = summary
    doc["systems"] = {
        k: _system_doc(s) for k, s in zip(DECOMP_KEYS, (pair.m0, pair.m1, dec.e0, dec.e1, dec.n0, dec.n1))
    }
    _dump(doc, path)


def load_decomposition(path) -> tuple:
    """Return ``(Decomposition, SystemPair)``."""
    doc = _load_doc(path, "decomposition")
    queries, responses, horizon = _spaces(doc, path)
    systems = _require(doc, "systems", path)
    s = {k: _system_from_doc(_require(systems, k, path), queries, responses, horizon, path, k) for k in DECOMP_KEYS}
    try:
        eps, delta = float(_require(doc, "epsilon", path)), float(_require(doc, "delta", path))
    except (TypeError, ValueError):
        raise FormatError(path, "epsilon and delta must be numbers", doc["__line__"]) from None
    return Decomposition(s["e0"], s["e1"], s["n0"], s["n1"], eps, delta), SystemPair(s["m0"], s["m1"])


def save_adversary(adv: Adversary, path) -> None:
    moves = [{"history": [_listify(tuple(s)) for s in h], "query": _listify(q)} for h, q in adv.strategy.items()]
    _dump({"format_version": FORMAT_VERSION, "kind": "adversary", "horizon": adv.horizon, "moves": moves}, path)


def adversary_to_dict(adv: Adversary) -> dict:
    return {
        "horizon": adv.horizon,
        "moves": [{"history": [_listify(tuple(s)) for s in h], "query": _listify(q)} for h, q in adv.strategy.items()],
    }


def load_adversary(path) -> Adversary:
    doc = _load_doc(path, "adversary")
    horizon = _require(doc, "horizon", path)
    strategy = {}
    for item in _require(doc, "moves", path) or []:
        line = item.get("__line__") if isinstance(item, dict) else None
        try:
            h = tuple(tuple(_tuplify(step)) for step in item["history"])
            strategy[h] = _tuplify(item["query"])
        except (KeyError, TypeError) as exc:
            raise FormatError(path, f"bad move: {exc}", line) from None
    return Adversary(strategy, int(horizon))


def transcript_to_list(t) -> list:
    return [_listify(tuple(step)) for step in t]


# -- budgets (JSON) ---------------------------------------------------------------------------


def budget_from_dict(d: dict):
    kind = str(d.get("type", "")).lower()
    try:
        if kind == "zcdp":
            return ZCDP(float(d["rho"]))
        if kind == "tcdp":
            return TCDP(float(d["rho"]), float(d["omega"]))
        if kind == "rdp":
            return RDP(float(d["alpha"]), float(d["epsilon"]))
        if kind in ("approx", "dp"):
            return ApproxDP(float(d["epsilon"]), float(d.get("delta", 0.0)))
    except KeyError as exc:
        raise ValueError(f"budget of type {kind!r} is missing field {exc}") from None
    raise ValueError(f"unknown budget type {d.get('type')!r}")


def budget_to_dict(b) -> dict:
    if isinstance(b, ZCDP):
        return {"type": "zcdp", "rho": b.rho}
    if isinstance(b, TCDP):
        return {"type": "tcdp", "rho": b.rho, "omega": b.omega}
    if isinstance(b, RDP):
        return {"type": "rdp", "alpha": b.alpha, "epsilon": b.epsilon}
    if isinstance(b, ApproxDP):
        return {"type": "approx", "epsilon": b.epsilon, "delta": b.delta}
    raise TypeError(type(b).__name__)


def load_budgets(path) -> list:
    """A JSON list of budgets, or ``{"format_version": 1, "budgets": [...]}``."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise FormatError(path, f"cannot read: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"invalid JSON: {exc.msg}", exc.lineno) from None
    if isinstance(doc, dict):
        if doc.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
            raise FormatError(path, f"unsupported format_version {doc.get('format_version')!r}")
        doc = doc.get("budgets")
    if not isinstance(doc, list) or not doc:
        raise FormatError(path, "expected a nonempty list of budgets")
    try:
        return [budget_from_dict(d) for d in doc]
    except (ValueError, TypeError, AttributeError) as exc:
        raise FormatError(path, str(exc)) from None

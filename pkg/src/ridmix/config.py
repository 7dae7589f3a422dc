"""Scenario configuration: YAML grammar, validation and mixture construction.

Validation errors name the key path and, when the text came from a file,
the source line.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional

import yaml

from .charfun import PiMultiple
from .exact import parse_exact
from .measure_alg import (AtomicMeasure, CantorIFS, GridDensity, MixtureDistribution, ProductCF)
from .tvbounds import TrigPoly

TASKS = ("check", "triplet", "series", "bounds", "counterexample")


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str, line: Optional[int] = None):
        where = f"{path or '<root>'}"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {msg}")
        self.path, self.line = path, line


# ---------------------------------------------------------------------------
# YAML with source lines


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads 1e-5 style floats (no decimal point) as numbers."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"))


def _scalar(node):
    return yaml.load(yaml.serialize(node), Loader=_Loader)


def _plain(node, path: str, lines: dict):
    """Convert a composed YAML node to plain data, recording 1-based lines per path."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = _scalar(k) if not isinstance(k, yaml.ScalarNode) else k.value
            sub = f"{path}.{key}" if path else str(key)
            if key in out:
                raise ConfigError(sub, "duplicate key", k.start_mark.line + 1)
            out[key] = _plain(v, sub, lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v, f"{path}[{i}]", lines) for i, v in enumerate(node.value)]
    return _scalar(node)


def load_yaml(text: str):
    try:
        node = yaml.compose(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("", f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    lines: dict = {}
    if node is None:
        return {}, lines
    return _plain(node, "", lines), lines


# ---------------------------------------------------------------------------
# schema


DEFAULTS = {
    "grid": {"t_max": 50.0, "samples": 2001, "refine_level": 9},
    "series": {"n": 20, "refine_level": 8, "prune_rel": 1e-12},
    "bounds": {"k_max": 6, "polynomials": [], "random": None},
    "ratio": {"tau": "pi", "path": "factorial", "n_min": 3, "n_max": 10},
}

_MIXTURE_KEYS = {"weights", "atoms", "density", "singular", "square_class",
                 "all_powers_singular"}
_DENSITY = {"uniform": {"a", "b"}, "triangular": {"a", "b"},
            "samples": {"x_min", "x_max", "values"}}
_SINGULAR = {"cantor": {"ratio", "shifts", "weights"}, "factorial": set(),
             "power": {"base"}}


class _V:
    """Validation context carrying the line table."""

    def __init__(self, lines: dict):
        self.lines = lines

    def err(self, path, msg):
        return ConfigError(path, msg, self.lines.get(path))

    def mapping(self, obj, path, allowed, required=()):
        if not isinstance(obj, dict):
            raise self.err(path, "expected a mapping")
        for k in obj:
            if k not in allowed:
                raise self.err(f"{path}.{k}" if path else str(k), "unknown key")
        for k in required:
            if k not in obj:
                raise self.err(path, f"missing key '{k}'")
        return obj

    def number(self, x, path, lo=None, hi=None, integer=False):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise self.err(path, "expected a number")
        if not math.isfinite(x):
            raise self.err(path, "must be finite")
        if integer and (not isinstance(x, int)):
            raise self.err(path, "expected an integer")
        if lo is not None and x < lo:
            raise self.err(path, f"must be >= {lo}")
        if hi is not None and x > hi:
            raise self.err(path, f"must be <= {hi}")
        return x

    def exact(self, x, path):
        try:
            if isinstance(x, float) and not math.isfinite(x):
                raise ValueError("non-finite")
            return parse_exact(x)
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            raise self.err(path, f"bad exact value: {exc}") from None


@dataclass
class ScenarioConfig:
    mixture: dict
    tasks: tuple
    grid: dict = field(default_factory=lambda: dict(DEFAULTS["grid"]))
    series: dict = field(default_factory=lambda: dict(DEFAULTS["series"]))
    bounds: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["bounds"]))
    ratio: dict = field(default_factory=lambda: dict(DEFAULTS["ratio"]))
    name: str = "scenario"

    def as_dict(self) -> dict:
        return {"name": self.name, "mixture": self.mixture, "tasks": list(self.tasks),
                "grid": self.grid, "series": self.series, "bounds": self.bounds,
                "ratio": self.ratio}

    def hash(self, version: str) -> str:
        blob = json.dumps({"config": self.as_dict(), "version": version}, sort_keys=True,
                          default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def build_mixture(self) -> MixtureDistribution:
        return build_mixture(self.mixture)

    def polynomials(self) -> list:
        return [build_trigpoly(p) for p in self.bounds.get("polynomials", [])]

    def tau(self):
        return parse_tau(self.ratio["tau"])


def parse_tau(x):
    if isinstance(x, str):
        s = x.replace(" ", "").lower()
        if s == "pi":
            return PiMultiple(1)
        if s.endswith("*pi"):
            return PiMultiple(Fraction(s[:-3]))
        if s.endswith("pi"):
            return PiMultiple(Fraction(s[:-2]))
        raise ValueError(f"bad tau {x!r}")
    return float(x)


def _validate_mixture(v: _V, m) -> dict:
    v.mapping(m, "mixture", _MIXTURE_KEYS, ("weights", "atoms"))
    w = v.mapping(m["weights"], "mixture.weights", {"d", "a", "s"}, ("d",))
    ws = {k: v.number(w.get(k, 0.0), f"mixture.weights.{k}", lo=0.0, hi=1.0) for k in "das"}
    if abs(sum(ws.values()) - 1.0) > 1e-12:
        raise v.err("mixture.weights", f"weights sum to {sum(ws.values())!r}, not 1")
    if ws["d"] <= 0:
        raise v.err("mixture.weights.d", "must be > 0")
    atoms = m["atoms"]
    if not isinstance(atoms, list) or not atoms:
        raise v.err("mixture.atoms", "expected a non-empty list of [location, weight]")
    for i, a in enumerate(atoms):
        p = f"mixture.atoms[{i}]"
        if not isinstance(a, list) or len(a) != 2:
            raise v.err(p, "expected [location, weight]")
        v.exact(a[0], f"{p}[0]")
        v.number(a[1], f"{p}[1]")
    if ws["a"] > 0:
        if "density" not in m:
            raise v.err("mixture", "c_a > 0 needs a density block")
        d = v.mapping(m["density"], "mixture.density", {"kind"} | set().union(*_DENSITY.values()),
                      ("kind",))
        kind = d["kind"]
        if kind not in _DENSITY:
            raise v.err("mixture.density.kind", f"unknown density kind {kind!r}")
        req = ("x_min", "x_max", "values") if kind == "samples" else ()
        v.mapping(d, "mixture.density", {"kind"} | _DENSITY[kind], req)
        for k in _DENSITY[kind] - {"values"}:
            if k in d:
                v.number(d[k], f"mixture.density.{k}")
        if kind == "samples":
            vals = d["values"]
            if not isinstance(vals, list) or len(vals) < 2:
                raise v.err("mixture.density.values", "need at least 2 samples")
            for i, x in enumerate(vals):
                v.number(x, f"mixture.density.values[{i}]")
    elif "density" in m:
        raise v.err("mixture.density", "density given but c_a = 0")
    if ws["s"] > 0:
        if "singular" not in m:
            raise v.err("mixture", "c_s > 0 needs a singular block")
        s = v.mapping(m["singular"], "mixture.singular",
                      {"kind"} | set().union(*_SINGULAR.values()), ("kind",))
        kind = s["kind"]
        if kind not in _SINGULAR:
            raise v.err("mixture.singular.kind", f"unknown singular kind {kind!r}")
        v.mapping(s, "mixture.singular", {"kind"} | _SINGULAR[kind])
        if kind == "power" and "base" in s:
            v.number(s["base"], "mixture.singular.base", lo=3, integer=True)
        if kind == "cantor":
            for k in ("ratio",):
                if k in s:
                    v.exact(s[k], f"mixture.singular.{k}")
            for k in ("shifts", "weights"):
                if k in s:
                    if not isinstance(s[k], list):
                        raise v.err(f"mixture.singular.{k}", "expected a list")
                    for i, x in enumerate(s[k]):
                        v.exact(x, f"mixture.singular.{k}[{i}]")
    elif "singular" in m:
        raise v.err("mixture.singular", "singular block given but c_s = 0")
    if "square_class" in m:
        sq = v.mapping(m["square_class"], "mixture.square_class", {"n_a", "alpha"},
                       ("n_a", "alpha"))
        v.number(sq["n_a"], "mixture.square_class.n_a", lo=2, integer=True)
        v.number(sq["alpha"], "mixture.square_class.alpha", lo=0.0, hi=1.0)
        if sq["alpha"] <= 0:
            raise v.err("mixture.square_class.alpha", "must be > 0")
    if "all_powers_singular" in m and not isinstance(m["all_powers_singular"], bool):
        raise v.err("mixture.all_powers_singular", "expected true/false")
    out = copy.deepcopy(m)
    out["weights"] = ws
    return out


def _validate_block(v: _V, data: dict, name: str, schema: dict) -> dict:
    out = copy.deepcopy(DEFAULTS[name])
    if name not in data:
        return out
    blk = v.mapping(data[name], name, set(schema))
    for k, (lo, hi, integer) in schema.items():
        if k in blk and lo is not None:
            v.number(blk[k], f"{name}.{k}", lo, hi, integer)
    out.update(blk)
    return out


def _validate_bounds(v: _V, data: dict) -> dict:
    out = copy.deepcopy(DEFAULTS["bounds"])
    if "bounds" not in data:
        return out
    blk = v.mapping(data["bounds"], "bounds", {"k_max", "polynomials", "random"})
    if "k_max" in blk:
        v.number(blk["k_max"], "bounds.k_max", 1, 12, True)
    for i, p in enumerate(blk.get("polynomials", []) or []):
        pp = f"bounds.polynomials[{i}]"
        v.mapping(p, pp, {"terms"}, ("terms",))
        if not isinstance(p["terms"], list) or not p["terms"]:
            raise v.err(f"{pp}.terms", "expected a non-empty list")
        dims = set()
        for j, t in enumerate(p["terms"]):
            tp = f"{pp}.terms[{j}]"
            v.mapping(t, tp, {"exp", "coef"}, ("exp", "coef"))
            e = t["exp"] if isinstance(t["exp"], list) else [t["exp"]]
            for x in e:
                v.number(x, f"{tp}.exp", integer=True)
            v.number(t["coef"], f"{tp}.coef")
            dims.add(len(e))
        if len(dims) != 1 or max(dims) > 4:
            raise v.err(f"{pp}.terms", "exponents must share one dimension <= 4")
    if blk.get("random") is not None:
        r = v.mapping(blk["random"], "bounds.random", {"count", "d_max", "seed"}, ("count",))
        v.number(r["count"], "bounds.random.count", 1, 10000, True)
        if "d_max" in r:
            v.number(r["d_max"], "bounds.random.d_max", 1, 3, True)
        if "seed" in r:
            v.number(r["seed"], "bounds.random.seed", 0, None, True)
    out.update(blk)
    out["polynomials"] = out.get("polynomials") or []
    return out


def validate(data, lines: Optional[dict] = None, name: str = "scenario") -> ScenarioConfig:
    v = _V(lines or {})
    v.mapping(data, "", {"mixture", "tasks", "grid", "series", "bounds", "ratio", "name"},
              ("mixture", "tasks"))
    tasks = data["tasks"]
    if isinstance(tasks, str):
        tasks = [tasks]
    if not isinstance(tasks, list) or not tasks:
        raise v.err("tasks", "task list is empty")
    for i, t in enumerate(tasks):
        if t not in TASKS:
            raise v.err(f"tasks[{i}]", f"unknown task {t!r}; choose from {', '.join(TASKS)}")
    mixture = _validate_mixture(v, data["mixture"])
    grid = _validate_block(v, data, "grid", {"t_max": (1e-6, 1e7, False),
                                             "samples": (3, 1 << 22, True),
                                             "refine_level": (0, 16, True)})
    series = _validate_block(v, data, "series", {"n": (1, 200, True),
                                                 "refine_level": (0, 16, True),
                                                 "prune_rel": (0.0, 1e-3, False)})
    ratio = _validate_block(v, data, "ratio", {"tau": (None, None, False),
                                               "path": (None, None, False),
                                               "n_min": (1, 60, True), "n_max": (1, 60, True)})
    try:
        parse_tau(ratio["tau"])
    except (ValueError, TypeError, ZeroDivisionError):
        raise v.err("ratio.tau", "expected a number or a rational multiple of pi") from None
    if ratio["path"] not in ("factorial", "grid"):
        raise v.err("ratio.path", "expected 'factorial' or 'grid'")
    if ratio["n_min"] > ratio["n_max"]:
        raise v.err("ratio", "n_min exceeds n_max")
    bounds = _validate_bounds(v, data)
    return ScenarioConfig(mixture, tuple(tasks), grid, series, bounds, ratio,
                          str(data.get("name", name)))


def load_config(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    data, lines = load_yaml(text)
    return validate(data, lines, name=path)


def parse_config_text(text: str) -> ScenarioConfig:
    data, lines = load_yaml(text)
    return validate(data, lines)


# ---------------------------------------------------------------------------
# construction


def build_mixture(m: dict) -> MixtureDistribution:
    ws = m["weights"]
    pairs = [(parse_exact(loc), float(w)) for loc, w in m["atoms"]]
    F_d = AtomicMeasure.from_pairs(pairs)
    if F_d.mass <= 0:
        raise ConfigError("mixture.atoms", "atom weights must have positive total")
    F_d = F_d.scaled(1.0 / F_d.mass)
    F_a = F_s = None
    if ws["a"] > 0:
        d = m["density"]
        if d["kind"] == "uniform":
            F_a = GridDensity.uniform(float(d.get("a", 0.0)), float(d.get("b", 1.0)))
        elif d["kind"] == "triangular":
            F_a = GridDensity.triangular(float(d.get("a", -1.0)), float(d.get("b", 1.0)))
        else:
            import numpy as np
            vals = np.asarray(d["values"], dtype=float)
            h = (float(d["x_max"]) - float(d["x_min"])) / (vals.size - 1)
            F_a = GridDensity(float(d["x_min"]), float(d["x_max"]), h, vals).normalized()
    if ws["s"] > 0:
        s = m["singular"]
        if s["kind"] == "cantor":
            kw = {}
            if "ratio" in s:
                kw["ratio"] = parse_exact(s["ratio"])
            if "shifts" in s:
                kw["shifts"] = tuple(parse_exact(x) for x in s["shifts"])
            if "weights" in s:
                kw["weights"] = tuple(parse_exact(x) for x in s["weights"])
            F_s = CantorIFS(**kw)
        elif s["kind"] == "factorial":
            F_s = ProductCF("factorial")
        else:
            F_s = ProductCF("power", int(s.get("base", 3)))
    sq = m.get("square_class")
    sq_class = (int(sq["n_a"]), float(sq["alpha"])) if sq else None
    all_sing = bool(m.get("all_powers_singular", False))
    try:
        return MixtureDistribution(ws["d"], ws["a"], ws["s"], F_d, F_a, F_s,
                                   singular_square_class=sq_class, all_powers_singular=all_sing)
    except ValueError as exc:
        raise ConfigError("mixture", str(exc)) from None


def build_trigpoly(p: dict) -> TrigPoly:
    coeffs = {}
    for t in p["terms"]:
        e = t["exp"] if isinstance(t["exp"], list) else [t["exp"]]
        key = tuple(int(x) for x in e)
        coeffs[key] = coeffs.get(key, 0.0) + float(t["coef"])
    return TrigPoly.from_dict(coeffs)


# ---------------------------------------------------------------------------
# builtin scenarios


def _base(name, weights, atoms, density=None, singular=None, tasks=("check",), **extra):
    m: dict[str, Any] = {"weights": dict(zip("das", weights)), "atoms": atoms}
    if density:
        m["density"] = density
    if singular:
        m["singular"] = singular
    m.update(extra)
    return {"name": name, "mixture": m, "tasks": list(tasks)}


BUILTIN_RAW = {
    "example1": _base("example1", (0.5, 0.3, 0.2), [[0, 1.0]],
                      {"kind": "triangular", "a": -1.0, "b": 1.0}, {"kind": "cantor"},
                      ("check", "triplet"), all_powers_singular=True),
    "example2": _base("example2", (0.5, 0.3, 0.2), [[0, 1.0]],
                      {"kind": "uniform", "a": 0.0, "b": 1.0}, {"kind": "cantor"},
                      ("check", "series", "triplet"), all_powers_singular=True),
    "example3": _base("example3", (0.5, 0.0, 0.5), [[0, 1.0]], None, {"kind": "factorial"},
                      ("check", "counterexample")),
    "example4": _base("example4", (0.5, 0.3, 0.2), [[1, 1.0]],
                      {"kind": "uniform", "a": 0.0, "b": 1.0}, {"kind": "cantor"},
                      ("check", "triplet"), all_powers_singular=True),
}


def builtin_examples() -> dict:
    """Named scenario configs for the four worked mixtures."""
    return {k: validate(copy.deepcopy(v), name=k) for k, v in BUILTIN_RAW.items()}

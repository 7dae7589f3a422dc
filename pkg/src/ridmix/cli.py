"""Command-line scenario runner.

Each task writes into the output directory: ``report.json`` (deterministic),
``timings.json`` and the comma-separated trace tables.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
import time
from fractions import Fraction
from typing import Optional

import numpy as np

from . import __version__
from .charfun import PiMultiple
from .config import (BUILTIN_RAW, TASKS, ConfigError, ScenarioConfig, builtin_examples, load_config,
                     validate)
from .criteria import (Verdict, classify_divergence, counterexample_table,
                       pure_singular_verdict, random_dominated_mixture, ratio_test, rid_criteria)
from .errors import RidmixError
from .spectral import compute_W, extract_triplet, synthesize_cf
from .tvbounds import (bound_constants, bound_power_norm, exact_power_norm, random_trigpoly,
                       refined_bound_power_norm)

EXIT_OK, EXIT_NEGATIVE, EXIT_INPUT, EXIT_INCONSISTENT = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# serialization


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return json.dumps(str(x))
        return "%.17g" % x
    if isinstance(x, Fraction):
        return json.dumps(str(x))
    if isinstance(x, complex):
        return "[%s, %s]" % (_fmt(x.real), _fmt(x.imag))
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    if hasattr(x, "value"):  # enums
        return json.dumps(x.value)
    return json.dumps(str(x))


def dumps_report(obj) -> str:
    """JSON with every float written to 17 significant digits."""
    return _fmt(obj) + "\n"


def write_trace(path: str, t: np.ndarray, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "re", "im", "abs", "arg"])
        for ti, v in zip(t, values):
            w.writerow(["%.17g" % ti, "%.17g" % v.real, "%.17g" % v.imag, "%.17g" % abs(v),
                        "%.17g" % math.atan2(v.imag, v.real)])


def _grid(cfg: ScenarioConfig) -> np.ndarray:
    return np.linspace(-cfg.grid["t_max"], cfg.grid["t_max"], int(cfg.grid["samples"]))


# ---------------------------------------------------------------------------
# tasks; each returns (section dict, exit code)


def task_check(cfg: ScenarioConfig, F, out: Optional[str]):
    r = rid_criteria(F)
    sec = {
        "verdict": r.verdict, "dominated": r.dominated, "margin": r.margin,
        "mu_d_lower": r.mu_d_lower, "mu_d_upper": r.mu_d_upper,
        "inf_f_lower": float(r.inf_f_lower), "cond_ii": r.cond_ii, "cond_iii": r.cond_iii,
        "inconsistent": r.inconsistent, "notes": list(r.notes),
        "details": {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                    for k, v in r.details.items()},
    }
    if F.c_s > 0 and F.c_s < F.c_d and (F.all_powers_singular or F.singular_square_class):
        n_a, alpha = F.singular_square_class or (None, None)
        sec["w_singularity"] = pure_singular_verdict(n_a, alpha, F.c_s, F.c_d,
                                                     F.all_powers_singular)
    if out:
        t = _grid(cfg)
        write_trace(os.path.join(out, "trace_f.csv"), t, F.cf(t))
    if r.inconsistent:
        return sec, EXIT_INCONSISTENT
    return sec, EXIT_OK if r.verdict == Verdict.RID else EXIT_NEGATIVE


def task_series(cfg: ScenarioConfig, F, out: Optional[str]):
    s = cfg.series
    t = np.arange(-1000, 1001) * 0.05
    W = compute_W(F, int(s["n"]), int(s["refine_level"]), float(s["prune_rel"]), check_grid=t)
    if W is None:
        return {"status": "no singular part", "mass": 0.0}, EXIT_OK
    sec = {"status": "ok", "n": W.n, "refine_level": W.refine_level, "rho": W.rho,
           "ratio": W.ratio, "expected_mass": W.expected_mass, "term_tvs": list(W.term_tvs)}
    sec.update(W.diagnostics)
    if out:
        tg = _grid(cfg)
        write_trace(os.path.join(out, "trace_W.csv"), tg, W.cf(tg))
    return sec, EXIT_OK


def task_triplet(cfg: ScenarioConfig, F, out: Optional[str]):
    tr = extract_triplet(F, int(cfg.series["n"]), int(cfg.grid["refine_level"]),
                         float(cfg.series["prune_rel"]))
    t = _grid(cfg)
    synth = synthesize_cf(tr, t)
    resid = float(np.max(np.abs(synth - F.cf(t))))
    u, lam = tr.discrete.arrays()
    sec = {
        "gamma0": tr.gamma0, "gamma": tr.gamma, "sigma2": tr.sigma2, "index_ma": tr.index_ma,
        "lambda_l1": tr.discrete.lambda_l1, "lambda_count": int(u.size),
        "lambdas": [[float(a), float(b)] for a, b in list(zip(u, lam))[:64]],
        "discrete_truncation_l1": tr.discrete.truncation_l1_error,
        "v_a_l1": tr.v_a.l1_riemann() if tr.v_a is not None else 0.0,
        "v_a_resynthesis_residual": tr.v_a.resynthesis_residual if tr.v_a is not None else 0.0,
        "W_mass": tr.W.mass if tr.W is not None else 0.0,
        "W_prune_budget": tr.W.tv_error_budget if tr.W is not None else 0.0,
        "W_analytic_tail": tr.W.diagnostics["analytic_tail"] if tr.W is not None else 0.0,
        "roundtrip_residual": resid,
    }
    if out:
        write_trace(os.path.join(out, "trace_triplet.csv"), t, synth)
    return sec, EXIT_OK


def bound_rows(polys, k_max: int) -> list:
    rows = []
    for phi in polys:
        bc = bound_constants(phi)
        for k in range(1, k_max + 1):
            ex = exact_power_norm(phi, k)
            b13 = refined_bound_power_norm(phi, k, bc)
            b15 = bound_power_norm(bc.S_phi, bc.A_phi, bc.dimension, k)
            rows.append({"d": bc.dimension, "k": k, "exact": ex, "bound13": b13,
                         "bound15": b15, "ratio": ex / min(b13, b15)})
    return rows


def task_bounds(cfg: ScenarioConfig, F, out: Optional[str], seed: Optional[int] = None):
    b = cfg.bounds
    polys = cfg.polynomials()
    if b.get("random"):
        r = b["random"]
        rng = np.random.default_rng(int(seed if seed is not None else r.get("seed", 0)))
        polys += [random_trigpoly(rng, d_max=int(r.get("d_max", 3)))
                  for _ in range(int(r["count"]))]
    rows = bound_rows(polys, int(b["k_max"]))
    bad = [r for r in rows if r["exact"] > r["bound13"] * (1 + 1e-12)
           or r["exact"] > r["bound15"] * (1 + 1e-12)]
    if out:
        with open(os.path.join(out, "bounds.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["d", "k", "exact", "bound13", "bound15", "ratio"])
            for r in rows:
                w.writerow([r["d"], r["k"]] + ["%.17g" % r[c]
                                               for c in ("exact", "bound13", "bound15", "ratio")])
    sec = {"polynomials": len(polys), "rows": len(rows), "violations": len(bad),
           "max_ratio": max((r["ratio"] for r in rows), default=0.0)}
    # a violated bound means a certified constant is wrong
    return sec, EXIT_INCONSISTENT if bad else EXIT_OK


def task_counterexample(cfg: ScenarioConfig, F, out: Optional[str]):
    rc = cfg.ratio
    tau = cfg.tau()
    rows = []
    if rc["path"] == "factorial":
        for row in counterexample_table(F, range(int(rc["n_min"]), int(rc["n_max"]) + 1)):
            rows.append({"n": row.n, "t_over_pi": str(math.factorial(2 * row.n)),
                         "ratio": row.ratio, "f_center": row.f_center,
                         "f_minus": row.f_minus, "f_plus": row.f_plus})
    else:
        t = _grid(cfg)
        res = ratio_test(F, tau, list(t))
        rows = [{"n": i, "t": float(ti), "ratio": v} for i, (ti, v) in enumerate(zip(t, res))]
    vals = [r["ratio"] for r in rows]
    diverges = classify_divergence(vals)
    if out:
        with open(os.path.join(out, "ratio_test.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            key = "t_over_pi" if rc["path"] == "factorial" else "t"
            w.writerow(["n", key, "ratio"])
            for r in rows:
                tv = r[key] if isinstance(r[key], str) else "%.17g" % r[key]
                w.writerow([r["n"], tv, "%.17g" % r["ratio"]])
    finite = [v for v in vals if math.isfinite(v)]
    sec = {"tau": str(tau.q) + "*pi" if isinstance(tau, PiMultiple) else tau,
           "path": rc["path"], "diverges": diverges,
           "max_ratio": max(finite) if finite else float("nan"),
           "verdict": "NOT_RID" if diverges else "BOUNDED_ON_PROBES",
           "table": rows if rc["path"] == "factorial" else []}
    return sec, EXIT_NEGATIVE if diverges else EXIT_OK


TASK_FUNCS = {"check": task_check, "series": task_series, "triplet": task_triplet,
              "bounds": task_bounds, "counterexample": task_counterexample}


def run_scenario(cfg: ScenarioConfig, out: Optional[str] = None, seed: Optional[int] = None):
    """Run every selected task; returns (report, timings, exit code)."""
    if out:
        os.makedirs(out, exist_ok=True)
    F = cfg.build_mixture() if any(t != "bounds" for t in cfg.tasks) else None
    report = {"tool": "ridmix", "version": __version__, "scenario": cfg.name,
              "config_hash": cfg.hash(__version__), "tasks": {}}
    timings, code = {}, EXIT_OK
    for name in cfg.tasks:
        t0 = time.perf_counter()
        try:
            if name == "bounds":
                sec, c = task_bounds(cfg, F, out, seed)
            else:
                sec, c = TASK_FUNCS[name](cfg, F, out)
        except RidmixError as exc:
            sec, c = {"status": "FAILED", "error": f"{type(exc).__name__}: {exc}"}, EXIT_NEGATIVE
        timings[name] = time.perf_counter() - t0
        report["tasks"][name] = sec
        code = max(code, c)
    report["exit_code"] = code
    if out:
        with open(os.path.join(out, "report.json"), "w") as fh:
            fh.write(dumps_report(report))
        with open(os.path.join(out, "timings.json"), "w") as fh:
            fh.write(dumps_report(timings))
    return report, timings, code


def run_audit(count: int, seed: int = 0, out: Optional[str] = None):
    """Cross-check conditions (ii) and (iii) on random dominated mixtures."""
    rng = np.random.default_rng(seed)
    rows, both, agree, breaches = [], 0, 0, 0
    for i in range(count):
        F = random_dominated_mixture(rng)
        r = rid_criteria(F)
        certified = {r.cond_ii.value, r.cond_iii.value} <= {"HOLDS", "FAILS"}
        if certified:
            both += 1
            agree += r.cond_ii == r.cond_iii
        breaches += r.inconsistent
        rows.append({"i": i, "c_d": F.c_d, "c_a": F.c_a, "c_s": F.c_s, "margin": r.margin,
                     "cond_ii": r.cond_ii, "cond_iii": r.cond_iii, "verdict": r.verdict})
    report = {"tool": "ridmix", "version": __version__, "audit": {
        "count": count, "seed": seed, "both_certified": both, "agree": agree,
        "inconsistent": breaches, "rows": rows}}
    code = EXIT_INCONSISTENT if breaches or agree != both else EXIT_OK
    report["exit_code"] = code
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "report.json"), "w") as fh:
            fh.write(dumps_report(report))
    return report, code


# ---------------------------------------------------------------------------
# argument handling


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    raw = copy.deepcopy(cfg.as_dict())
    if getattr(args, "t_max", None) is not None:
        raw["grid"]["t_max"] = args.t_max
    if getattr(args, "n", None) is not None:
        raw["series"]["n"] = args.n
    if getattr(args, "refine", None) is not None:
        raw["series"]["refine_level"] = args.refine
        raw["grid"]["refine_level"] = args.refine
    return validate(raw, name=cfg.name)


def _table(report: dict) -> str:
    lines = [f"scenario {report.get('scenario', 'audit')}  exit {report['exit_code']}"]
    for task, sec in report.get("tasks", {}).items():
        lines.append(f"[{task}]")
        for k, v in sec.items():
            if isinstance(v, (list, dict)) and k not in ("notes",):
                continue
            if hasattr(v, "value"):
                v = v.value
            if isinstance(v, float):
                v = f"{v:.10g}"
            lines.append(f"  {k:28s} {v}")
    if "audit" in report:
        a = report["audit"]
        lines.append(f"  audited {a['count']}, both certified {a['both_certified']}, "
                     f"agree {a['agree']}, inconsistent {a['inconsistent']}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ridmix", description="Criteria, spectral triplets and "
                                "bound suites for discrete/ac/singular mixtures.")
    p.add_argument("--version", action="version", version=f"ridmix {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_config=True):
        if need_config:
            sp.add_argument("--config", required=False, help="scenario YAML file")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--t-max", type=float, dest="t_max", help="override grid.t_max")
        sp.add_argument("--n", type=int, help="override series.n")
        sp.add_argument("--refine", type=int, help="override the refinement level")
        sp.add_argument("--format", choices=("json", "table"), default="table",
                        help="stdout summary format")
        sp.add_argument("--seed", type=int, help="seed for random polynomials and audits")

    for name in ("check", "triplet", "series", "bounds", "counterexample", "report"):
        sp = sub.add_parser(name)
        common(sp)
        if name == "check":
            sp.add_argument("--audit", type=int, metavar="N",
                            help="audit N random dominated mixtures instead")
    sp = sub.add_parser("example")
    sp.add_argument("name", choices=sorted(BUILTIN_RAW))
    sp.add_argument("--all-tasks", action="store_true", help="run every task")
    common(sp, need_config=False)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        if args.command == "check" and args.audit is not None:
            if args.audit < 1:
                raise ConfigError("--audit", "must be >= 1")
            report, code = run_audit(args.audit, args.seed or 0, args.out)
            print(dumps_report(report) if args.format == "json" else _table(report), end="\n")
            return code
        if args.command == "example":
            cfg = builtin_examples()[args.name]
            if args.all_tasks:
                raw = cfg.as_dict()
                raw["tasks"] = list(TASKS)
                cfg = validate(raw, name=cfg.name)
        else:
            if not args.config:
                raise ConfigError("--config", "a scenario file is required")
            cfg = load_config(args.config)
            raw = cfg.as_dict()
            raw["tasks"] = list(TASKS) if args.command == "report" else [args.command]
            cfg = validate(raw, name=cfg.name)
        cfg = _apply_overrides(cfg, args)
        report, _, code = run_scenario(cfg, args.out, args.seed)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(dumps_report(report) if args.format == "json" else _table(report), end="\n")
    return code


if __name__ == "__main__":
    sys.exit(main())

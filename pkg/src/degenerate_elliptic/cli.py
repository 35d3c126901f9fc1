"""Command-line front end: ``degenerate-elliptic [global flags] <task>``.

Each run reads an optional JSON config, validates it against ``CONFIG_SCHEMA``
before any computation, writes CSV outputs, ``manifest.json`` and
``summary.txt`` atomically into the output directory, and exits with

* 0 when every solve converged and every requested check passed,
* 1 on a computation failure or a failed check,
* 2 on a configuration error (the message names the offending field path).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import importlib.metadata
import io
import json
import logging
import os
import platform
import sys
import tempfile
from typing import Optional

import jsonschema
import numpy as np

from . import __version__
from ._accel import NUMBA_ENABLED
from .boundary import DomainGrid, _tag_for, boundary_condition_plan, classify
from .errors import DegenerateEllipticError
from .fdsolver import assemble, refine_study, solve
from .obstacle import ObstacleSpec, crossings_csv, free_boundary_crossings, solve_obstacle
from .operators import HestonParams, make_affine, make_dh_model, make_heston, make_kummer
from .special_functions import kummer_table
from .verification import (check_apriori_bound, check_comparison, check_neumann_uniqueness, check_strong_mp,
                           check_weak_mp, reports_csv)
from .weighted_spaces import (heston_bilinear_setup, power_weight, probe_sobolev_inequality,
                              unit_weight, verify_ibp)

log = logging.getLogger(__name__)

TASKS = ("classify", "solve", "obstacle", "verify", "kummer", "sobolev", "ibp")
PROPERTIES = ("weak_mp", "comparison", "apriori", "strong_mp", "neumann")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "task": {"enum": list(TASKS)},
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "refine": {"type": "integer", "minimum": 0, "maximum": 6},
        "operator": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": ["heston", "kummer", "dh", "affine"]},
                "params": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kappa": _pos, "theta": _pos, "sigma": _num, "rho": _num, "r": _num, "q": _num,
                        "alpha": _num, "beta": _num, "dim": {"type": "integer", "minimum": 1, "maximum": 2},
                        "a1": {"type": "array"}, "a0": {"type": "array"}, "b0": {"type": "array"},
                        "b1": {"type": "array"}, "c0": _num, "c1": {"type": "array"},
                    },
                },
            },
        },
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "required": ["bounds", "counts"],
            "properties": {
                "bounds": {"type": "array", "minItems": 1, "maxItems": 2,
                           "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": _num}},
                "counts": {"type": "array", "minItems": 1, "maxItems": 2, "items": {"type": "integer", "minimum": 3}},
            },
        },
        "convention": {"enum": ["fichera", "c2s"]},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"eps_deg": _pos, "eps_f": _pos, "solve": _pos, "psor": _pos},
        },
        "solve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"f": _num, "g": _num, "drift": {"enum": ["upwind", "central"]},
                           "normal_order": {"enum": [1, 2]}, "method": {"enum": ["direct", "iterative"]},
                           "export_matrix": {"type": "boolean"}},
        },
        "obstacle": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"psi": _num, "f": _num, "g": _num,
                           "omega": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
                           "max_iters": {"type": "integer", "minimum": 1}},
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"trials": {"type": "integer", "minimum": 1},
                           "properties": {"type": "array", "items": {"enum": list(PROPERTIES)}},
                           "c0": _pos},
        },
        "kummer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"alpha": _num, "beta": _pos, "x_start": {"type": "number", "minimum": 0},
                           "x_stop": {"type": "number", "minimum": 0, "maximum": 50},
                           "num": {"type": "integer", "minimum": 1}},
        },
        "sobolev": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"p": {"type": "number", "minimum": 1}, "xi": _num, "s": _num,
                           "trials": {"type": "integer", "minimum": 1}, "panels": {"type": "integer", "minimum": 1}},
        },
        "ibp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"weight": {"enum": ["unit", "heston", "power"]}, "gamma": {"type": "number", "minimum": 0},
                           "s": _num, "trials": {"type": "integer", "minimum": 1},
                           "panels": {"type": "integer", "minimum": 1}},
        },
    },
}

DEFAULT_DOMAINS = {
    "heston": {"bounds": [[-1.0, 1.0], [0.0, 1.0]], "counts": [31, 31]},
    "kummer": {"bounds": [[0.0, 1.0]], "counts": [65]},
    "dh": {"bounds": [[-1.0, 1.0], [0.0, 1.0]], "counts": [31, 31]},
    "affine": {"bounds": [[-1.0, 1.0], [0.0, 1.0]], "counts": [31, 31]},
}

DEFAULT_PARAMS = {
    "heston": {"kappa": 1.5, "theta": 0.04, "sigma": 0.3, "rho": -0.5, "r": 0.05, "q": 0.0},
    "kummer": {"alpha": 1.0, "beta": 1.0},
    "dh": {"beta": 2.0, "dim": 2},
    "affine": {"a1": [[0.5, 0.0], [0.0, 0.5]], "b0": [0.0, 1.0]},
}


class ConfigError(Exception):
    pass


def _path(err: jsonschema.ValidationError) -> str:
    return "/" + "/".join(str(p) for p in err.absolute_path)


def validate_config(cfg) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        e = errors[0]
        raise ConfigError(f"config error at {_path(e)}: {e.message}")


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config error at /: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"config error at /: cannot read {path} ({exc})") from exc
    validate_config(cfg)
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _dist_version(name: str) -> str:
    try:
        return importlib.metadata.version(name)
    except importlib.metadata.PackageNotFoundError:
        return "unknown"


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# ---------------------------------------------------------------------------
# setup from config


def build_operator(cfg: dict):
    spec = cfg.get("operator", {"name": "heston"})
    name = spec["name"]
    params = dict(DEFAULT_PARAMS[name])
    params.update(spec.get("params", {}))
    if name == "heston":
        allowed = {"kappa", "theta", "sigma", "rho", "r", "q"}
        _reject(params, allowed, "/operator/params")
        return make_heston(HestonParams(**params))
    if name == "kummer":
        _reject(params, {"alpha", "beta"}, "/operator/params")
        return make_kummer(params["alpha"], params["beta"])
    if name == "dh":
        _reject(params, {"beta", "dim"}, "/operator/params")
        return make_dh_model(params["beta"], params.get("dim", 2))
    _reject(params, {"a1", "a0", "b0", "b1", "c0", "c1"}, "/operator/params")
    return make_affine(**{k: (np.asarray(v, dtype=float) if isinstance(v, list) else v) for k, v in params.items()})


def _reject(params, allowed, where):
    extra = sorted(set(params) - allowed)
    if extra:
        raise ConfigError(f"config error at {where}/{extra[0]}: parameter not used by this operator")


def build_domain(cfg: dict, op) -> DomainGrid:
    name = cfg.get("operator", {"name": "heston"})["name"]
    d = cfg.get("domain", DEFAULT_DOMAINS[name])
    if len(d["bounds"]) != op.dim or len(d["counts"]) != op.dim:
        raise ConfigError(f"config error at /domain: operator needs {op.dim} axes")
    for k, (lo, hi) in enumerate(d["bounds"]):
        if not hi > lo:
            raise ConfigError(f"config error at /domain/bounds/{k}: hi must exceed lo")
    return DomainGrid.uniform([tuple(b) for b in d["bounds"]], list(d["counts"]))


def _classify(cfg, op, dom):
    tol = cfg.get("tolerances", {})
    return classify(op, dom, tol.get("eps_deg"), tol.get("eps_f"))


# ---------------------------------------------------------------------------
# tasks; each returns (files, summary lines, ok)


def task_classify(cfg, args):
    op = build_operator(cfg)
    dom = build_domain(cfg, op)
    cls = _classify(cfg, op, dom)
    lines = [f"{e.label}: {e.sigma_class} (fichera -> {_tag_for(e.sigma_class, 'fichera')}, "
             f"c2s -> {_tag_for(e.sigma_class, 'c2s')})" for e in cls.entries]
    return {"classification.csv": cls.to_csv()}, lines, True


def task_solve(cfg, args):
    op = build_operator(cfg)
    dom = build_domain(cfg, op)
    cls = _classify(cfg, op, dom)
    plan = boundary_condition_plan(cls, cfg.get("convention", "c2s"))
    s = cfg.get("solve", {})
    tol = cfg.get("tolerances", {}).get("solve", 1e-10)
    kw = {"drift": s.get("drift", "upwind"), "normal_order": s.get("normal_order", 1)}
    f, g = s.get("f", 0.0), s.get("g", 0.0)
    prob = assemble(op, dom, plan, f, g, **kw)
    sol = solve(prob, tol=tol, method=s.get("method", "direct"))
    files = {"solution.csv": sol.to_csv(prob)}
    if s.get("export_matrix"):
        files["matrix.coo.txt"] = prob.coo_text()
    lines = [f"nodes: {dom.n_nodes}", f"monotone: {prob.monotone}", f"residual_inf: {sol.residual_inf:.3e}",
             f"problem_hash: {sol.problem_hash}"] + [f"diagnostic: {d}" for d in prob.diagnostics]
    refine = args.refine if args.refine is not None else cfg.get("refine", 0)
    if refine:
        st = refine_study(op, dom, plan, f, g, levels=refine + 1, **kw)
        files["refinement.csv"] = _csv(["h", "sup_error_vs_finest", "order"], st.rows())
        lines.append("observed orders: " + ", ".join(f"{o:.3f}" for o in st.orders))
    return files, lines, True


def task_obstacle(cfg, args):
    op = build_operator(cfg)
    dom = build_domain(cfg, op)
    cls = _classify(cfg, op, dom)
    plan = boundary_condition_plan(cls, cfg.get("convention", "c2s"))
    o = cfg.get("obstacle", {})
    prob = assemble(op, dom, plan, o.get("f", 0.0), o.get("g", 0.0))
    tol = cfg.get("tolerances", {}).get("psor", 1e-10)
    sol = solve_obstacle(prob, ObstacleSpec(o.get("psi", 0.0)), omega=o.get("omega", 1.5), tol=tol,
                         max_iters=o.get("max_iters", 200_000))
    pts = dom.points
    rows = [list(p) + [u, int(a)] for p, u, a in zip(pts, sol.values, sol.active_set)]
    files = {"obstacle_solution.csv": _csv([f"x{k + 1}" for k in range(dom.dim)] + ["value", "active"], rows),
             "active_set.csv": sol.active_csv(prob)}
    if dom.dim == 2:
        files["free_boundary.csv"] = crossings_csv(free_boundary_crossings(prob, sol))
    ok = sol.complementarity_residual <= 10 * tol
    lines = [f"iterations: {sol.iterations}", f"complementarity_residual: {sol.complementarity_residual:.3e}",
             f"active nodes: {int(sol.active_set.sum())}"]
    return files, lines, ok


def task_verify(cfg, args):
    op = build_operator(cfg)
    dom = build_domain(cfg, op)
    cls = _classify(cfg, op, dom)
    plan = boundary_condition_plan(cls, cfg.get("convention", "c2s"))
    v = cfg.get("verify", {})
    trials = v.get("trials", 20)
    props = v.get("properties", ["weak_mp", "comparison"])
    reports = []
    for prop in props:
        if prop == "weak_mp":
            reports.append(check_weak_mp(op, dom, plan, trials, args.seed))
        elif prop == "comparison":
            reports.append(check_comparison(op, dom, plan, trials, args.seed))
        elif prop == "apriori":
            c0 = v.get("c0", float(np.min(op.eval_c(dom.points))))
            reports.append(check_apriori_bound(op, dom, plan, c0, trials, args.seed))
        elif prop == "strong_mp":
            reports.append(check_strong_mp(op, dom, plan, -1.0, 0.0))
        elif prop == "neumann":
            reports.append(check_neumann_uniqueness(op, dom, cls.degenerate_labels()))
    lines = [f"{r.property_id}: {'PASS' if r.passed else ('SKIP' if r.skipped else 'FAIL')} "
             f"({r.failures}/{r.trials} failures)" for r in reports]
    ok = all(r.passed or r.property_id == "neumann" and r.details.get("nullspace") for r in reports)
    return {"reports.csv": reports_csv(reports)}, lines, ok


def task_kummer(cfg, args):
    k = cfg.get("kummer", {})
    alpha, beta = k.get("alpha", 1.0), k.get("beta", 1.0)
    xs = np.linspace(k.get("x_start", 0.0), k.get("x_stop", 5.0), k.get("num", 51))
    tab = kummer_table(alpha, beta, xs)
    lines = [f"alpha={alpha!r} beta={beta!r} points={xs.size}"]
    if alpha == beta:
        rel = float(np.max(np.abs(tab[:, 1] - np.exp(xs)) / np.exp(xs)))
        lines.append(f"max relative deviation from exp(x): {rel:.3e}")
    return {"kummer.csv": _csv(["x", "M", "dM", "d2M"], tab.tolist())}, lines, True


def task_sobolev(cfg, args):
    s = cfg.get("sobolev", {})
    rep = probe_sobolev_inequality(s.get("s", 0.0), s.get("xi", 0.5), s.get("p", 2.0), None,
                                   trials=s.get("trials", 200), seed=args.seed, panels=s.get("panels", 6))
    ok = rep.summary["finite"] and rep.summary["drift"] < 0.1
    lines = [f"{k}: {v}" for k, v in rep.summary.items()]
    return {"sobolev.csv": rep.to_csv()}, lines, ok


def task_ibp(cfg, args):
    i = cfg.get("ibp", {})
    wname = i.get("weight", "heston")
    trials = i.get("trials", 20)
    panels = i.get("panels", 8)
    if wname == "heston":
        params = dict(DEFAULT_PARAMS["heston"])
        params.update(cfg.get("operator", {}).get("params", {}))
        op, ws, _, _ = heston_bilinear_setup(HestonParams(**params), i.get("gamma", 0.5))
        rep = verify_ibp(op, ws, ((-1.0, 1.0), (0.0, 2.0)), trials, args.seed, panels, degenerate_axis=1)
    else:
        op = build_operator(cfg)
        dom_b = build_domain(cfg, op)
        bounds = tuple((c[0], c[-1]) for c in dom_b.coords)
        ws = unit_weight(op.dim) if wname == "unit" else power_weight(i.get("s", 0.0), dim=op.dim)
        rep = verify_ibp(op, ws, bounds, trials, args.seed, panels,
                         degenerate_axis=(op.dim - 1) if wname == "power" else None)
    ok = rep.summary["max_discrepancy"] <= 1e-6
    lines = [f"{k}: {v}" for k, v in rep.summary.items()]
    return {"ibp.csv": rep.to_csv()}, lines, ok


TASK_FUNCS = {"classify": task_classify, "solve": task_solve, "obstacle": task_obstacle, "verify": task_verify,
              "kummer": task_kummer, "sobolev": task_sobolev, "ibp": task_ibp}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="degenerate-elliptic",
                                 description="Boundary-degenerate elliptic problems: classification, solves, checks.")
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--out", help="output directory (default: config 'output' or ./out)")
    ap.add_argument("--seed", type=int, help="random seed (default: config 'seed' or 0)")
    ap.add_argument("--refine", type=int, help="extra refinement levels for the solve task")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("task", choices=TASKS)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if "task" in cfg and cfg["task"] != args.task:
            raise ConfigError(f"config error at /task: config names {cfg['task']!r} but {args.task!r} was requested")
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        out = args.out or cfg.get("output") or "out"
        files, lines, ok = TASK_FUNCS[args.task](cfg, args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (DegenerateEllipticError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    manifest = {
        "task": args.task,
        "seed": args.seed,
        "config_digest": _digest(cfg),
        "config": cfg,
        "versions": {"package": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": _dist_version("scipy"), "jsonschema": _dist_version("jsonschema"),
                     "numba": _dist_version("numba") if NUMBA_ENABLED else "disabled"},
        "files": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(files.items())},
        "passed": bool(ok),
    }
    for name, text in files.items():
        atomic_write(os.path.join(out, name), text)
    summary = [f"task: {args.task}", f"seed: {args.seed}", f"status: {'PASS' if ok else 'FAIL'}"] + lines
    atomic_write(os.path.join(out, "summary.txt"), "\n".join(summary) + "\n")
    atomic_write(os.path.join(out, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    print("\n".join(summary))
    return 0 if ok else 1


def main() -> None:
    sys.exit(run())

"""Scenario-driven command line: eigen, criteria, simulate, functionals, rates,
run, verify.

Exit codes: 0 success, 1 config schema violation (message carries a JSON
pointer to the fault), 2 model validation or spectral failure, 3 numerical
failure (more than 10% of paths flagged).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import SupermartError
from .model import gw_from_json, model_from_json, model_to_json, validate_model
from .spectral import assumption2_report, principal_eigentriple, spectral_gap
from .criteria import conjugate, evaluate_criteria, gw_predictions
from .sim import SimConfig, SpineConfig, simulate_csbp, simulate_gw, simulate_spine
from .functionals import a_functional, a_tilde_functional, c_functionals
from .rates import as_rate_check, fit_exponential, lp_curve, poly_rate_check, window_law_check
from .io import (
    config_hash,
    ensure_dir,
    jsonable,
    read_paths_csv,
    write_curves_csv,
    write_json,
    write_jumps_csv,
    write_paths_csv,
)
from .verify import run_suite

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["model", "kind", "master_seed"],
    "additionalProperties": False,
    "properties": {
        "model": {"type": ["object", "string"]},
        "kind": {"enum": ["csbp", "spine", "gw"]},
        "master_seed": {"type": "integer"},
        "out": {"type": "string"},
        "x0": {"type": "array", "items": {"type": "number"}},
        "gw": {
            "type": "object",
            "required": ["generations"],
            "additionalProperties": False,
            "properties": {"generations": {"type": "integer", "minimum": 1}},
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "paths": {"type": "integer", "minimum": 1},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "record_stride": {"type": "integer", "minimum": 1},
                "log_jumps": {"type": "boolean"},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "delta_floor": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "analyses": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "criteria": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "p": {"type": "array", "items": {"type": "number"}},
                        "gamma": {"type": "array", "items": {"type": "number"}},
                        "F": {"type": "array", "items": {"type": "integer"}},
                        "t0": {"type": "number"},
                        "t1": {"type": "number"},
                    },
                },
                "functionals": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kinds": {"type": "array", "items": {"type": "string"}},
                        "p": {"type": "number"},
                        "a_star": {"type": "number"},
                        "gamma": {"type": "number"},
                        "max_paths": {"type": "integer", "minimum": 1},
                    },
                },
                "rates": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "p": {"type": "array", "items": {"type": "number"}},
                        "gamma": {"type": "array", "items": {"type": "number"}},
                        "F": {"type": "array", "items": {"type": "integer"}},
                        "thresholds": {"type": "array", "items": {"type": "number"}},
                    },
                },
            },
        },
    },
}

EXIT_SCHEMA = 1
EXIT_MODEL = 2
EXIT_NUMERIC = 3


def _fail(code: int, message: str):
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(code)


def _load_json_arg(value: str):
    if value.strip().startswith("{"):
        return json.loads(value)
    with open(value) as fh:
        return json.load(fh)


def _resolve_model(spec):
    obj = _load_json_arg(spec) if isinstance(spec, str) else spec
    if obj.get("kind", "").startswith("gw"):
        return None, gw_from_json(obj)
    return model_from_json(obj), None


def _meta(seed, cfg_obj):
    return {
        "tool": f"supermart {__version__}",
        "config_hash": config_hash(cfg_obj),
        "seed": seed,
    }


def _require_valid(model):
    rep = validate_model(model)
    if not rep.ok:
        _fail(EXIT_MODEL, "; ".join(rep.failures))
    try:
        return principal_eigentriple(model)
    except SupermartError as exc:
        _fail(EXIT_MODEL, str(exc))


# ---------------------------------------------------------------------------
# subcommands


def cmd_eigen(args):
    model, _ = _resolve_model(args.model)
    eig = _require_valid(model)
    gap = spectral_gap(model)
    rep = assumption2_report(model, eig, target=args.target)
    payload = {
        "lambda": eig.lam,
        "phi": eig.phi,
        "nu": eig.nu,
        "gap": gap,
        "t_star": rep["t_star"],
        "c_curve": [[float(t), float(c)] for t, c in zip(rep["curve"].grid, rep["curve"].c)],
    }
    out = args.out or "eigen.json"
    write_json(out, payload, _meta(None, model_to_json(model)))
    print(out)


def cmd_criteria(args):
    model, _ = _resolve_model(args.model)
    eig = _require_valid(model)
    f_set = [int(v) for v in args.F.split(",")] if args.F else None
    report = evaluate_criteria(
        model,
        eig,
        p_values=tuple(args.p),
        gamma_values=tuple(args.gamma),
        f_set=f_set,
        t0=args.t0,
        t1=args.t1,
    )
    out = args.out or "criteria.json"
    write_json(out, report.as_dict(), _meta(None, model_to_json(model)))
    print(out)


def _sim_config(scn: dict, kind: str):
    sim = dict(scn.get("sim", {}))
    sim.setdefault("dt", 0.005)
    sim.setdefault("horizon", 4.0)
    sim.setdefault("paths", 1000)
    base = {
        "dt": sim["dt"],
        "horizon": sim["horizon"],
        "paths": sim["paths"],
        "master_seed": scn["master_seed"],
        "epsilon": sim.get("epsilon"),
        "record_stride": sim.get("record_stride", 1),
        "log_jumps": sim.get("log_jumps", True),
    }
    if kind == "spine":
        return SpineConfig(
            delta=sim.get("delta", 1e-3), delta_floor=sim.get("delta_floor", 1e-3), **base
        )
    return SimConfig(**base)


def _simulate(scn: dict, model, gw, threads: int):
    kind = scn["kind"]
    if kind == "gw":
        gens = scn.get("gw", {}).get("generations", 20)
        return simulate_gw(gw, gens, scn["sim"]["paths"], scn["master_seed"]), None
    eig = _require_valid(model)
    cfg = _sim_config(scn, kind)
    x0 = np.asarray(scn["x0"], dtype=float) if "x0" in scn else None
    if kind == "spine":
        res = simulate_spine(model, eig, cfg, x0=x0, threads=threads)
        return res.ensemble, eig
    return simulate_csbp(model, eig, cfg, x0=x0, threads=threads), eig


def cmd_simulate(args):
    scn = {
        "model": args.model,
        "kind": args.kind,
        "master_seed": args.seed,
        "sim": {
            "dt": args.dt,
            "horizon": args.horizon,
            "paths": args.paths,
            "record_stride": args.record_stride,
        },
    }
    model, gw = _resolve_model(args.model)
    ens, eig = _simulate(scn, model, gw, args.threads)
    out_dir = ensure_dir(args.out or ".")
    meta = _meta(args.seed, scn)
    if eig is not None:
        meta["lambda"] = f"{eig.lam:.17g}"
        meta["phi"] = " ".join(f"{v:.17g}" for v in eig.phi)
    paths_file = os.path.join(out_dir, "paths.csv")
    if args.kind == "gw":
        _write_gw_csv(paths_file, ens, meta)
    else:
        write_paths_csv(paths_file, ens, meta)
        if ens.jumps is not None:
            write_jumps_csv(os.path.join(out_dir, "jumps.csv"), ens, meta)
    print(paths_file)


def _write_gw_csv(path, gw_ens, meta):
    with open(path, "w") as fh:
        for k in sorted(meta):
            fh.write(f"# {k}: {meta[k]}\n")
        fh.write("path_id,t,mass_1,M\n")
        for pid in range(gw_ens.n_paths):
            for n, w in enumerate(gw_ens.W[pid]):
                fh.write(f"{pid},{n},{w:.17g},{w:.17g}\n")


def cmd_functionals(args):
    ens, meta = read_paths_csv(args.paths)
    rows = []
    n = min(ens.n_paths, args.max_paths)
    for pid in range(n):
        pr = ens.path(pid)
        minf = float(pr.M[-1])
        curves = []
        if "M" in args.kinds:
            curves.append(("M", pr.times, pr.M))
        if "A" in args.kinds:
            c = a_functional(pr, minf, args.a_star)
            curves.append((c.kind, c.grid, c.values))
        if "Atilde" in args.kinds:
            c = a_tilde_functional(pr, args.p)
            curves.append((c.kind, c.grid, c.values))
        if "C" in args.kinds or "Ctilde" in args.kinds:
            c1, c2 = c_functionals(pr, minf, args.gamma)
            if "C" in args.kinds:
                curves.append((c1.kind, c1.grid, c1.values))
            if "Ctilde" in args.kinds:
                curves.append((c2.kind, c2.grid, c2.values))
        for kind, grid, vals in curves:
            for t, v in zip(grid, vals):
                rows.append((pid, kind, t, v))
    out = args.out or "functionals.csv"
    write_curves_csv(out, rows, dict(meta))
    print(out)


def _rates_payload(ens, eig, criteria_report, rate_cfg):
    lam = ens.lam
    fits = []
    checks = {}
    pred_by_p = {}
    if criteria_report is not None:
        for item in criteria_report.predictions.per_p:
            pred_by_p[item["p"]] = item
    for p in rate_cfg.get("p", []):
        q = conjugate(p)
        pred = pred_by_p.get(p)
        curve = lp_curve(ens, p)
        positive = np.asarray(curve["value"]) > 0
        fit = None
        if positive.all():
            predicted = -lam / q if pred is None or pred["as_rate_holds"] else None
            fit = fit_exponential(curve, predicted=predicted)
            fits.append({"p": p, **fit.as_dict()})
        checks[f"as_rate_p{p:g}"] = as_rate_check(
            ens, q, lam, thresholds=tuple(rate_cfg.get("thresholds", (0.5, 1, 2, 4, 8)))
        )
    for g in rate_cfg.get("gamma", []):
        checks[f"poly_gamma{g:g}"] = poly_rate_check(
            ens, g, thresholds=tuple(rate_cfg.get("thresholds", (0.5, 1, 2, 4, 8)))
        )
    if eig is not None and rate_cfg.get("F"):
        checks["window_law"] = window_law_check(ens, rate_cfg["F"], eig)
    return fits, checks


class _LoadedPredictions:
    """Adapter exposing per_p prediction rows parsed back from criteria JSON."""

    def __init__(self, doc):
        preds = doc.get("predictions", doc)
        self.per_p = [
            {**row, "p": float(row["p"])} for row in preds.get("per_p", [])
        ]
        self.per_gamma = preds.get("per_gamma", [])


def cmd_rates(args):
    ens, meta = read_paths_csv(args.paths)
    criteria = None
    if args.criteria:
        with open(args.criteria) as fh:

            class _Wrap:
                predictions = _LoadedPredictions(json.load(fh))

            criteria = _Wrap()
    rate_cfg = {"p": args.p, "gamma": args.gamma}
    eig = None
    fits, checks = _rates_payload(ens, eig, criteria, rate_cfg)
    out = args.out or "rates.json"
    write_json(out, {"fits": fits, "checks": checks, "criteria_file": args.criteria}, dict(meta))
    # plot-ready curve CSV
    plot = args.plot or "ratecurves.csv"
    with open(plot, "w") as fh:
        fh.write("p,t,value,stderr\n")
        for p in args.p:
            curve = lp_curve(ens, p)
            for t, v, s in zip(curve["t"], curve["value"], curve["stderr"]):
                fh.write(f"{p:g},{t:.17g},{v:.17g},{s:.17g}\n")
    print(out)


def _summary(criteria_report, fits, checks) -> dict:
    """Map each theorem clause to {predicted, observed, verdict}."""
    clauses = {}
    if criteria_report is None:
        return clauses
    preds = criteria_report.predictions
    clauses["llogl_nondegenerate"] = {
        "predicted": preds.nondegenerate,
        "observed": None,
        "verdict": "assumed",
    }
    fit_by_p = {f["p"]: f for f in fits}
    for item in preds.per_p:
        p = item["p"]
        fit = fit_by_p.get(p)
        if fit is not None and item["as_rate_holds"]:
            clauses[f"lp_rate_p{p:g}"] = {
                "predicted": -item["lp_rate_exponent"],
                "observed": fit["exponent"],
                "verdict": fit["bound_verdict"] or fit["verdict"],
            }
        chk = checks.get(f"as_rate_p{p:g}")
        if chk is not None:
            expected = "holds" if item["as_rate_holds"] else "fails-consistent"
            clauses[f"as_rate_p{p:g}"] = {
                "predicted": expected,
                "observed": chk["verdict"],
                "verdict": "consistent" if chk["verdict"] == expected else "inconsistent",
            }
    for item in preds.per_gamma:
        g = item["gamma"]
        chk = checks.get(f"poly_gamma{g:g}")
        if chk is not None:
            expected = "holds" if item["poly_rate_holds"] else "fails-consistent"
            clauses[f"poly_rate_gamma{g:g}"] = {
                "predicted": expected,
                "observed": chk["verdict"],
                "verdict": "consistent" if chk["verdict"] == expected else "inconsistent",
            }
    wl = checks.get("window_law")
    if wl is not None:
        ns = wl["n_values"]
        final_mad = wl["mad"][ns[-1]] if ns else math.nan
        clauses["window_average_law"] = {
            "predicted": wl["target"],
            "observed": final_mad,
            "verdict": "consistent" if final_mad == final_mad and final_mad < 0.05 else "inconclusive",
        }
    return clauses


def cmd_run(args):
    try:
        scn = _load_json_arg(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        _fail(EXIT_SCHEMA, f"cannot read config: {exc}")
    import jsonschema

    try:
        jsonschema.validate(scn, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        pointer = "/" + "/".join(str(p) for p in exc.absolute_path)
        _fail(EXIT_SCHEMA, f"config schema violation at {pointer!r}: {exc.message}")
    if args.seed is not None:
        scn["master_seed"] = args.seed
    threads = args.threads or int(os.environ.get("SUPERMART_THREADS", "1"))
    out_dir = ensure_dir(args.out or scn.get("out", "supermart_out"))
    meta = _meta(scn["master_seed"], scn)

    try:
        model, gw = _resolve_model(scn["model"])
    except (SupermartError, KeyError, json.JSONDecodeError) as exc:
        _fail(EXIT_SCHEMA, f"bad model spec: {exc}")

    analyses = scn.get("analyses", {})
    criteria_report = None
    eig = None

    if model is not None:
        write_json(os.path.join(out_dir, "model.json"), model_to_json(model), meta)
        rep = validate_model(model)
        if not rep.ok:
            _fail(EXIT_MODEL, "; ".join(rep.failures))
        try:
            eig = principal_eigentriple(model)
        except SupermartError as exc:
            _fail(EXIT_MODEL, str(exc))
        a2 = assumption2_report(model, eig, target=0.5)
        write_json(
            os.path.join(out_dir, "eigen.json"),
            {
                "lambda": eig.lam,
                "phi": eig.phi,
                "nu": eig.nu,
                "gap": spectral_gap(model),
                "t_star": a2["t_star"],
                "c_curve": [
                    [float(t), float(c)] for t, c in zip(a2["curve"].grid, a2["curve"].c)
                ],
            },
            meta,
        )
        crit_cfg = analyses.get("criteria", {})
        criteria_report = evaluate_criteria(
            model,
            eig,
            p_values=tuple(crit_cfg.get("p", [])),
            gamma_values=tuple(crit_cfg.get("gamma", [])),
            f_set=crit_cfg.get("F"),
            t0=crit_cfg.get("t0", 10.0),
            t1=crit_cfg.get("t1", 10.0),
        )
        write_json(os.path.join(out_dir, "criteria.json"), criteria_report.as_dict(), meta)
    else:
        write_json(os.path.join(out_dir, "model.json"), {"kind": "gw"}, meta)
        crit_cfg = analyses.get("criteria", {})
        preds = gw_predictions(
            gw, p_values=tuple(crit_cfg.get("p", [])), gamma_values=tuple(crit_cfg.get("gamma", []))
        )
        write_json(os.path.join(out_dir, "criteria.json"), preds.as_dict(), meta)

    ens, _ = _simulate(scn, model, gw, threads)
    if eig is not None:
        meta_paths = dict(meta)
        meta_paths["lambda"] = f"{eig.lam:.17g}"
        meta_paths["phi"] = " ".join(f"{v:.17g}" for v in eig.phi)
        write_paths_csv(os.path.join(out_dir, "paths.csv"), ens, meta_paths)
        if ens.jumps is not None:
            write_jumps_csv(os.path.join(out_dir, "jumps.csv"), ens, meta_paths)
    else:
        _write_gw_csv(os.path.join(out_dir, "paths.csv"), ens, meta)

    func_cfg = analyses.get("functionals")
    if func_cfg and scn["kind"] != "gw":
        rows = []
        for pid in range(min(ens.n_paths, func_cfg.get("max_paths", 50))):
            pr = ens.path(pid)
            minf = float(pr.M[-1])
            for kind in func_cfg.get("kinds", ["A", "Atilde"]):
                if kind == "A":
                    c = a_functional(pr, minf, func_cfg.get("a_star", 2.0))
                elif kind == "Atilde":
                    c = a_tilde_functional(pr, func_cfg.get("p", 2.0))
                elif kind == "C":
                    c = c_functionals(pr, minf, func_cfg.get("gamma", 1.0))[0]
                elif kind == "Ctilde":
                    c = c_functionals(pr, minf, func_cfg.get("gamma", 1.0))[1]
                else:
                    continue
                rows.extend((pid, c.kind, t, v) for t, v in zip(c.grid, c.values))
        write_curves_csv(os.path.join(out_dir, "functionals.csv"), rows, meta)

    rate_cfg = analyses.get("rates", {})
    gw_preds = None
    if model is None:
        gw_preds = gw_predictions(gw, p_values=tuple(rate_cfg.get("p", [])))

        class _Wrap:
            predictions = gw_preds

        criteria_for_rates = _Wrap()
    else:
        criteria_for_rates = criteria_report
    fits, checks = _rates_payload(ens, eig, criteria_for_rates, rate_cfg)
    write_json(os.path.join(out_dir, "rates.json"), {"fits": fits, "checks": checks}, meta)

    summary_src = criteria_report if criteria_report is not None else criteria_for_rates
    clauses = _summary(summary_src, fits, checks)
    flagged = getattr(ens, "flagged", None)
    frac_flagged = float(np.mean(flagged)) if flagged is not None else 0.0
    write_json(
        os.path.join(out_dir, "summary.json"),
        {"clauses": clauses, "flagged_fraction": frac_flagged},
        meta,
    )
    if frac_flagged > 0.10:
        _fail(EXIT_NUMERIC, f"{frac_flagged:.1%} of paths flagged")
    print(out_dir)


def cmd_verify(args):
    report = run_suite(args.suite)
    out = args.out or f"verify_{args.suite}.json"
    write_json(out, report, _meta(None, {"suite": args.suite}))
    print(json.dumps(jsonable(report), indent=1, sort_keys=True))
    if not report["passed"]:
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="supermart", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigen", help="principal eigentriple and c_t curve")
    p.add_argument("--model", required=True)
    p.add_argument("--target", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("criteria", help="moment criteria and predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--p", type=float, action="append", default=[])
    p.add_argument("--gamma", type=float, action="append", default=[])
    p.add_argument("--F", default=None, help="comma-separated type indices (0-based)")
    p.add_argument("--t0", type=float, default=10.0)
    p.add_argument("--t1", type=float, default=10.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_criteria)

    p = sub.add_parser("simulate", help="simulate gw|csbp|spine paths")
    p.add_argument("kind", choices=["gw", "csbp", "spine"])
    p.add_argument("--model", required=True)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dt", type=float, default=0.005)
    p.add_argument("--horizon", type=float, default=4.0)
    p.add_argument("--record-stride", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("functionals", help="per-path functional curves from a paths CSV")
    p.add_argument("--paths", required=True)
    p.add_argument("--kinds", nargs="+", default=["A", "Atilde", "C", "Ctilde"])
    p.add_argument("--a-star", type=float, default=2.0, dest="a_star")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--max-paths", type=int, default=100, dest="max_paths")
    p.add_argument("--out")
    p.set_defaults(func=cmd_functionals)

    p = sub.add_parser("rates", help="rate fits from a paths CSV")
    p.add_argument("--paths", required=True)
    p.add_argument("--criteria")
    p.add_argument("--p", type=float, action="append", default=[])
    p.add_argument("--gamma", type=float, action="append", default=[])
    p.add_argument("--plot")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("run", help="full scenario: simulate + analyze + summarize")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run a built-in invariant suite")
    p.add_argument("suite", choices=["eigen", "transform", "martingale", "identities", "spine"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except SupermartError as exc:
        _fail(EXIT_MODEL, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())

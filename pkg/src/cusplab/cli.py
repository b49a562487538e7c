"""Command-line driver: one subcommand per experiment plus parameter sweeps.

Exit status is 0 when every certificate passes, 1 when one fails and 2
for configuration errors (nothing is written in that case).
"""

import argparse
import datetime
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import KINDS, bootstrap_params, load_config, with_axis
from .errors import CertificationError, ConfigError, CuspLabError
from .io import save_tensor_field, write_json, write_radial_csv, write_table

OUT_ENV = "CUSPLAB_OUT_DIR"
DEFAULT_OUT = "out"
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("cusplab")


class Outcome:
    """Report body plus the rows of the per-experiment table."""

    def __init__(self, report, header=(), rows=(), extra=None):
        self.report = report
        self.header = list(header)
        self.rows = list(rows)
        self.extra = extra or {}

    @property
    def passed(self):
        return bool(self.report["pass"])


def _geometry(cfg):
    from .geometry import FlatTorusMetric
    from .grid import RadialGrid

    g = cfg["geometry"]
    return FlatTorusMetric(np.asarray(g["gram"], dtype=float)), RadialGrid(g["R"], g["dr"])


def _body(parameters, thresholds, measured, passed, failing):
    return {"parameters": parameters, "thresholds": thresholds, "measured": measured,
            "pass": bool(passed), "failing": list(failing)}


# --- experiments -------------------------------------------------------------------

def run_compat(cfg):
    from .bootstrap import Setup, check_compatibility

    params = bootstrap_params(cfg)
    flat, grid = _geometry(cfg)
    rep = check_compatibility(Setup(flat, grid, params, cfg["geometry"]["K"], cfg["seed"]),
                              cfg["compat"]["samples"])
    d = rep.to_dict()
    failing = [f"compat_{k}" for k, rec in rep.records.items() if not rec.passed]
    rows = [{"condition": k, "pass": rec.passed, "constant": rec.constant, "samples": rec.samples}
            for k, rec in rep.records.items()]
    body = _body(d["parameters"], params.thresholds(), {"conditions": d["conditions"]},
                 rep.passed, failing)
    return Outcome(body, ["condition", "pass", "constant", "samples"], rows)


def run_bootstrap(cfg):
    from .suites import bootstrap_experiment, planted_variation

    params = bootstrap_params(cfg)
    g, pl = cfg["geometry"], cfg["planted"]
    v = planted_variation(pl)
    planted = {"v": v.to_dict(), "amplitude": pl["amplitude"]}
    try:
        v_out, rep, recovery, inst = bootstrap_experiment(
            params, g["gram"], g["R"], g["dr"], g["K"], v, cfg["seed"], pl["amplitude"],
            pl["compat_samples"])
    except CertificationError as exc:
        est = [e.to_dict() for e in getattr(exc, "estimates", ())]
        measured = {"error": str(exc), "estimates": est, "planted": planted}
        body = _body({"lambda": params.lam, "eta": params.eta, "epsilon0": params.epsilon0,
                      **params.weights.to_dict()}, params.thresholds(), measured, False, [exc.tag])
        return Outcome(body)
    d = rep.to_dict()
    measured = d["measured"]
    measured.update({"trajectory": d["trajectory"], "v": d["v"], "certificates": d["certificates"],
                     "compatibility": d["compatibility"], "planted": planted,
                     "recovery": recovery})
    body = _body(d["parameters"], d["thresholds"], measured, d["pass"], d["failing"])
    prof = rep.profiles
    header = ["r", "h", "hat_minus_v", "h_minus_v", "psi"]
    rows = [dict(zip(header, vals)) for vals in zip(*(prof[k] for k in header))]
    return Outcome(body, header, rows, {"instance": inst})


def run_ode_lemma(cfg):
    from .suites import ODE_CONSTANT_CAP, RATE_RTOL, SWEEP_SPREAD, ode_lemma_suite, sweep_constants

    g, o = cfg["geometry"], cfg["ode_lemma"]
    res = ode_lemma_suite(cfg["seed"], o["instances"], g["R"], g["dr"], tuple(o["r_values"]),
                          o["sweep_instances"])
    at_r = sweep_constants(cfg["seed"], g["R"], g["dr"], o["sweep_instances"])
    failing = [f"{r['lemma']}_{r['index']}" for r in res["rows"] if not r["pass"]]
    failing += [f"sweep_{s['lemma']}_{s['index']}" for s in res["sweep"] if not s["pass"]]
    failing += [f"rate_{r['family']}_{r['root']:.6g}" for r in res["rates"] if not r["pass"]]
    summary = {}
    for lemma in ("sum", "l1"):
        consts = [r["constant"] for r in res["rows"] if r["lemma"] == lemma]
        summary[lemma] = {"instances": len(consts),
                          "max_constant": max(consts) if consts else 0.0,
                          "failures": sum(not r["pass"] for r in res["rows"] if r["lemma"] == lemma)}
    measured = {"lemmas": summary, "sweep": res["sweep"], "sweep_constants_at_R": at_r,
                "max_spread": max((s["spread"] for s in res["sweep"]), default=0.0),
                "fundamental_rates": res["rates"]}
    thresholds = {"constant_cap": ODE_CONSTANT_CAP, "max_spread": SWEEP_SPREAD,
                  "rate_rtol": RATE_RTOL}
    header = ["lemma", "index", "family", "R", "constant", "decaying_error", "pass"]
    body = _body({"R": g["R"], "dr": g["dr"], "r_values": o["r_values"]}, thresholds, measured,
                 res["pass"], failing)
    return Outcome(body, header, res["rows"])


def run_poincare(cfg):
    from .norms import COMPONENT_FACTOR
    from .suites import poincare_sweep

    p = cfg["poincare"]
    res = poincare_sweep(cfg["seed"], p["tori"], p["fields"], p["max_condition"],
                         p["K"], p["R"], p["dr"], p["levels"], p["fd_points"])
    rows = res["rows"]
    failing = [f"torus_{r['torus']}" for r in rows if not r["pass"]]
    measured = {"tori": len(rows), "fields_per_torus": p["fields"],
                "worst_ratio": max((r["worst_ratio"] for r in rows), default=0.0),
                "max_lambda1_rel_error": max((r["lambda1_rel_error"] for r in rows), default=0.0),
                "min_lambda1_diam2": min((r["lambda1_diam2"] for r in rows), default=math.inf)}
    thresholds = {"poincare_constant": math.e ** 2 * COMPONENT_FACTOR, "lambda1_rel_tol": 0.01}
    header = ["torus", "condition", "diameter", "lambda1", "lambda1_fd", "lambda1_rel_error",
              "lambda1_diam2", "fields", "passed", "worst_ratio", "pass"]
    return Outcome(_body(p, thresholds, measured, res["pass"], failing), header, rows)


def run_norms(cfg):
    from .suites import norms_sweep

    g, p = cfg["geometry"], cfg["params"]
    res = norms_sweep(cfg["seed"], p["lambda"], p["eta"], cfg["norms"]["sigmas"], g["K"], g["R"],
                      g["dr"], g["gram"])
    rows = res["rows"]
    failing = [f"sigma_{r['sigma']!r}" for r in rows if not r["pass"]]
    measured = {"max_constant": max((r["constant"] for r in rows), default=0.0), "rows": rows}
    body = _body({"lambda": p["lambda"], "eta": p["eta"], "b": 2 + p["lambda"] - p["eta"]},
                 {"constant": 1.0}, measured, res["pass"], failing)
    return Outcome(body, ["sigma", "value", "bound", "constant", "pass"], rows)


RUNNERS = {"compat": run_compat, "bootstrap": run_bootstrap, "ode-lemma": run_ode_lemma,
           "poincare-sweep": run_poincare, "norms-sweep": run_norms}


def run_experiment(kind, cfg):
    """Run one experiment; modelled failures become a failing report."""
    try:
        return RUNNERS[kind](cfg)
    except ConfigError:
        raise
    except CuspLabError as exc:
        tag = getattr(exc, "tag", type(exc).__name__)
        return Outcome(_body({}, {}, {"error": str(exc)}, False, [tag]))


# --- sweeps ------------------------------------------------------------------------

def headline(kind, outcome):
    """Flat row of headline numbers for one sweep value."""
    m = outcome.report["measured"]
    row = {"pass": outcome.passed, "failing": ";".join(outcome.report["failing"])}
    if kind == "bootstrap":
        par = outcome.report["parameters"]
        row.update({k: par.get(k) for k in ("b", "s0", "sigma_star")})
        row["rate"] = m.get("rate")
        row["steps"] = len(m.get("trajectory", ())) - 1 if "trajectory" in m else None
        v = m.get("v") or {}
        row.update({"v11": v.get("v11"), "v12": v.get("v12"), "v22": v.get("v22")})
        row["recovery"] = m.get("recovery")
    elif kind == "compat":
        for k, rec in m.get("conditions", {}).items():
            row[f"constant_{k}"] = rec["constant"]
    elif kind == "ode-lemma":
        row["max_constant"] = max((x["max_constant"] for x in m.get("lemmas", {}).values()), default=None)
        row["max_spread"] = m.get("max_spread")
        consts = m.get("sweep_constants_at_R", [])
        row["sweep_max_constant"] = max(consts) if consts else None
        row["sweep_constants"] = ";".join(repr(float(c)) for c in consts)
    elif kind == "poincare-sweep":
        row.update({k: m.get(k) for k in ("worst_ratio", "max_lambda1_rel_error")})
    elif kind == "norms-sweep":
        row["max_constant"] = m.get("max_constant")
    return row


SWEEP_COLUMNS = {
    "bootstrap": ["b", "s0", "sigma_star", "rate", "steps", "v11", "v12", "v22", "recovery"],
    "compat": [f"constant_{k}" for k in ("i", "ii", "iii", "iv", "v", "vi", "vii")],
    "ode-lemma": ["max_constant", "max_spread", "sweep_max_constant", "sweep_constants"],
    "poincare-sweep": ["worst_ratio", "max_lambda1_rel_error"],
    "norms-sweep": ["max_constant"],
}


def _sweep_worker(job):
    kind, cfg = job
    return headline(kind, run_experiment(kind, cfg))


def run_sweep(cfg, kind):
    """One headline row per sweep value, in the order given."""
    axis = cfg["sweep"]["axis"]
    values = cfg["sweep"]["values"]
    jobs = [(kind, with_axis(cfg, axis, v)) for v in values]
    workers = cfg["sweep"]["workers"]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]
    rows = [{"value": v, **r} for v, r in zip(values, results)]
    measured = {"rows": rows}
    passed = all(r["pass"] for r in rows)
    failing = [f"{axis}={v!r}" for v, r in zip(values, results) if not r["pass"]]
    thresholds = {}
    if kind == "ode-lemma" and axis == "R" and rows:
        from .suites import SWEEP_SPREAD, relative_spread

        per_value = [[float(x) for x in r["sweep_constants"].split(";") if x] for r in rows]
        spreads = [relative_spread(col) for col in zip(*per_value)]
        ok = all(s < SWEEP_SPREAD for s in spreads)
        measured["r_independence"] = {"spreads": spreads, "max_spread": max(spreads, default=0.0),
                                      "pass": ok}
        thresholds["max_spread"] = SWEEP_SPREAD
        passed = passed and ok
        if not ok:
            failing.append("r_independence")
    header = ["value", *SWEEP_COLUMNS[kind], "pass", "failing"]
    body = _body({"axis": axis, "values": values, "kind": kind}, thresholds, measured, passed, failing)
    return Outcome(body, header, rows)


# --- command line ------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="cusplab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file (defaults from the schema)")
    common.add_argument("--seed", type=_u64, help="master seed, overrides the config")
    common.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"compat": "check compatibility conditions (i)-(vii)",
             "bootstrap": "planted growth-estimate certification",
             "ode-lemma": "plant-and-certify suites for both rate lemmas",
             "poincare-sweep": "level-wise Poincare inequality over random tori",
             "norms-sweep": "weighted L2 bound of the forcing across weights"}
    for kind in KINDS:
        sub.add_parser(kind, parents=[common], help=helps[kind])
    sw = sub.add_parser("sweep", parents=[common], help="vary one parameter, one CSV row per value")
    sw.add_argument("--kind", choices=KINDS, help="experiment per value (default: config kind)")
    sw.add_argument("--axis", help="parameter to vary")
    sw.add_argument("--values", type=_values, help="comma-separated values; empty for none")
    sw.add_argument("--workers", type=int, help="worker processes")
    return parser


def _u64(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _values(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _overrides(args):
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.command == "sweep":
        sweep = {k: getattr(args, k) for k in ("axis", "values", "workers")
                 if getattr(args, k) is not None}
        if sweep:
            over["sweep"] = sweep
        if args.kind is not None:
            over["kind"] = args.kind
    return over


def output_dir(args, cfg):
    """``--out``, then the environment variable, then the config, then ``./out``."""
    return args.out or os.environ.get(OUT_ENV) or cfg["output"]["dir"] or DEFAULT_OUT


def _report(command, cfg, outcome, started, elapsed):
    shown = {k: v for k, v in cfg.items() if k != "output"}
    from . import __version__

    return {"meta": {"timestamp": started, "elapsed_seconds": round(elapsed, 3),
                     "version": __version__},
            "command": command, "seed": cfg["seed"], "config": shown, **outcome.report}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "sweep":
            for v in cfg["sweep"]["values"]:
                with_axis(cfg, cfg["sweep"]["axis"], v)
    except ConfigError as exc:
        print(f"cusplab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = output_dir(args, cfg)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    log.info("running %s with seed %d", args.command, cfg["seed"])
    if args.command == "sweep":
        outcome = run_sweep(cfg, cfg["kind"])
    else:
        outcome = run_experiment(args.command, cfg)
    elapsed = time.perf_counter() - t0
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "report.json"), _report(args.command, cfg, outcome, started, elapsed))
    table = "sweep.csv" if args.command == "sweep" else "profiles.csv"
    if outcome.header:
        write_table(os.path.join(out, table), outcome.header, outcome.rows)
    inst = outcome.extra.get("instance")
    if inst is not None and cfg["output"]["save_field"]:
        save_tensor_field(os.path.join(out, "field.cptf"), inst.h)
        write_radial_csv(os.path.join(out, "average.csv"), inst.h)
    status = EXIT_PASS if outcome.passed else EXIT_FAIL
    log.info("%s in %.1fs, wrote %s", "pass" if status == EXIT_PASS else "FAIL", elapsed, out)
    print(f"{args.command}: {'pass' if outcome.passed else 'FAIL'}"
          + ("" if outcome.passed else f" ({', '.join(outcome.report['failing'][:8])})"))
    return status


if __name__ == "__main__":
    sys.exit(main())

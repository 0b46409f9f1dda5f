"""
Command-line front end.

    gaussub <command> [--config FILE] [--seed S] [--n N] [--n-list ...] [--reps R]
                      [--out DIR] [--describe] [--threads T] [--no-figures]

Commands: bound, clt, be, ir, locstat, conditions.  Exit codes: 0 when every
verdict passes, 2 on a flagged growth or a failed statistical check, 1 on
errors (bad config, violated preconditions).
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_ERROR, EXIT_FLAGGED = 0, 1, 2

DEFAULTS = {
    "bound": {"model": {"name": "geometric", "a": 0.5}, "function": {"builtin": "hermite", "k": [2]},
              "p": 2, "alpha": 2, "m": 2, "n_list": list(range(4, 15)), "threshold": 1.05, "seed": 0},
    "clt": {"model": {"name": "geometric", "a": 0.5}, "function": {"builtin": "hermite", "k": [2]},
            "m": 2, "n_list": [2048], "reps": 5000, "seed": 0,
            "tolerance": {"variance_rel": 0.05, "ks": 0.03, "kappa3": 0.15, "kappa4": 0.15}},
    "be": {"model": {"name": "geometric", "a": 0.5}, "function": {"builtin": "abs_centered", "N": 40},
           "m": 2, "lip": 1.0, "n_list": [512, 2048], "reps": 10000, "seed": 0,
           "tolerance": {"se_multiple": 3.0}},
    "ir": {"path": {"kind": "fbm", "H": 0.5}, "n": 3000, "reps": 2000, "seed": 0,
           "tolerance": {"mean_se_multiple": 3.0, "ks": 0.05}},
    "locstat": {"coefficients": {"alpha": 0.2, "kappa": 0.3, "slope": 0.5, "J_max": 65536},
                "nu": 2, "m": 2, "weights": [[1.0, 0.5], [0.5, 0.0]], "n": 2048, "reps": 2000, "seed": 0,
                "gap_n_list": [64, 128, 256, 512], "tolerance": {"ks": 0.05}},
    "conditions": {"model": {"name": "geometric", "a": 0.5}, "m": 2, "n_list": [64, 128, 256],
                   "K_list": [1, 4, 16], "seed": 0},
}


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------------------
# configuration


def resolve_config(command: str, args) -> dict:
    cfg = copy.deepcopy(DEFAULTS[command])
    if args.config:
        p = Path(args.config)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {p}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        user.pop("command", None)
        unknown = set(user) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config fields for {command!r}: {sorted(unknown)}")
        for k, v in user.items():
            if isinstance(v, dict) and isinstance(cfg.get(k), dict) and k == "tolerance":
                cfg[k].update(v)
            else:
                cfg[k] = v
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.reps is not None:
        if "reps" not in cfg:
            raise ConfigError(f"{command!r} takes no --reps")
        cfg["reps"] = args.reps
    if args.n is not None:
        if "n" in cfg:
            cfg["n"] = args.n
        elif "n_list" in cfg:
            cfg["n_list"] = [args.n]
        else:
            raise ConfigError(f"{command!r} takes no --n")
    if args.n_list is not None:
        if "n_list" not in cfg:
            raise ConfigError(f"{command!r} takes no --n-list")
        cfg["n_list"] = list(args.n_list)
    cfg["command"] = command
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    if not isinstance(cfg.get("seed"), int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    for key in ("n", "reps", "m", "p"):
        if key in cfg and not (isinstance(cfg[key], int) and cfg[key] > 0):
            raise ConfigError(f"{key} must be a positive integer")
    for key in ("n_list", "gap_n_list", "K_list"):
        if key in cfg:
            vals = cfg[key]
            if not (isinstance(vals, list) and vals and all(isinstance(v, int) and v > 0 for v in vals)):
                raise ConfigError(f"{key} must be a nonempty list of positive integers")
    fn = cfg.get("function")
    if isinstance(fn, dict) and "file" in fn and not Path(fn["file"]).exists():
        raise ConfigError(f"coefficient file {fn['file']} does not exist")


def build_function(spec: dict, nu: int):
    """``(expansion, evaluator)`` for a named builtin or a coefficient file."""
    import numpy as np

    from .hermite import HermiteExpansion, abs_centered_expansion, build_expansion, hermite_monomial, ir_function

    if "file" in spec:
        e = HermiteExpansion.from_json(Path(spec["file"]).read_text())
        return e, None
    name = spec.get("builtin")
    if name == "hermite":
        k = tuple(spec.get("k", [2]))
        return hermite_monomial(k, spec.get("N")), None
    if name == "abs_centered":
        if nu != 1:
            raise ConfigError("abs_centered is defined for nu = 1")
        c = math.sqrt(2 / math.pi)
        return abs_centered_expansion(int(spec.get("N", 40))), lambda v, taus: np.abs(v[..., 0]) - c
    if name == "ir_pair":
        if nu != 2:
            raise ConfigError("ir_pair is defined for nu = 2")
        e = build_expansion(ir_function(), 2, int(spec.get("N", 8))).centered()
        mean = build_expansion(ir_function(), 2, 0).mean
        return e, lambda v, taus: ir_function()(v) - mean
    raise ConfigError(f"unknown function spec {spec!r}")


def _model(cfg):
    from .gaussian_model import model_from_dict

    try:
        return model_from_dict(cfg["model"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


# ----------------------------------------------------------------------------
# commands


def cmd_bound(cfg: dict, out: Path, figures: bool) -> int:
    from .moment_bounds import BoundInstance, ratio_scan
    from .report import curve_figure, write_csv, write_json

    model = _model(cfg)
    e, _ = build_function(cfg["function"], model.nu)
    inst = BoundInstance(model, cfg["n_list"][0], cfg["p"], cfg["alpha"], cfg["m"], [e] * cfg["p"])
    rep = ratio_scan(inst, cfg["n_list"], cfg["threshold"])
    write_json(out / "bound.json", {"report": rep.to_dict()}, cfg)
    write_csv(out / "bound.csv", rep.rows(), ["n", "lhs", "rhs", "ratio"])
    if figures:
        curve_figure(out / "bound_ratio.png", rep.n_list, {"ratio": rep.ratio}, "n", "lhs / rhs")
    print(f"bound: verdict={rep.verdict} small_half_max={rep.small_half_max:.6g} "
          f"large_half_max={rep.large_half_max:.6g} misdeclared={rep.misdeclared}")
    return EXIT_OK if rep.bounded and not rep.misdeclared else EXIT_FLAGGED


def cmd_clt(cfg: dict, out: Path, figures: bool) -> int:
    from .clt import PhiCurve, SubordinatedSum, mc_clt, sigma_limit
    from .report import histogram_figure, write_csv, write_json

    model = _model(cfg)
    e, ev = build_function(cfg["function"], model.nu)
    spec = SubordinatedSum(model, PhiCurve.constant(e), cfg["m"], ev)
    s2 = sigma_limit(spec).value
    tol = cfg["tolerance"]
    rows, reports, ok = [], [], True
    for i, n in enumerate(cfg["n_list"]):
        rep = mc_clt(spec, n, cfg["reps"], cfg["seed"], s2)
        checks = {
            "variance": abs(rep.emp_var / s2 - 1) <= tol["variance_rel"],
            "ks": rep.ks <= tol["ks"],
            "kappa3": abs(rep.kappa3) <= tol["kappa3"],
            "kappa4": abs(rep.kappa4) <= tol["kappa4"],
        }
        ok &= all(checks.values())
        reports.append({**rep.to_dict(), "checks": checks})
        rows.append({"n": n, "reps": rep.reps, "sigma2": s2, "sigma2_n": rep.sigma2_n, "empirical_variance": rep.emp_var,
                     "ks": rep.ks, "kappa3": rep.kappa3, "kappa4": rep.kappa4, "pass": all(checks.values())})
        write_csv(out / f"clt_hist_n{n}.csv", rep.histogram_rows(), ["bin_left", "bin_right", "count"])
        if figures:
            histogram_figure(out / f"clt_hist_n{n}.png", rep.hist_edges, rep.hist_counts, s2, f"n = {n}")
        print(f"clt: n={n} var={rep.emp_var:.6g} sigma2={s2:.6g} ks={rep.ks:.4g} "
              f"kappa3={rep.kappa3:.4g} kappa4={rep.kappa4:.4g} pass={all(checks.values())}")
    write_json(out / "clt.json", {"sigma2_limit": s2, "reports": reports}, cfg)
    write_csv(out / "clt.csv", rows)
    return EXIT_OK if ok else EXIT_FLAGGED


def cmd_be(cfg: dict, out: Path, figures: bool) -> int:
    from .berry_esseen import be_bounds, distances_from_sample
    from .clt import PhiCurve, SubordinatedSum, sigma_limit, simulate_sums
    from .report import be_figure, write_csv, write_json

    model = _model(cfg)
    e, ev = build_function(cfg["function"], model.nu)
    spec = SubordinatedSum(model, PhiCurve.constant(e), cfg["m"], ev)
    sigma_S = math.sqrt(sigma_limit(spec).value)
    k = cfg["tolerance"]["se_multiple"]
    rows, reports, ok = [], [], True
    for n in cfg["n_list"]:
        rep = be_bounds(model, e, n, cfg["m"], sigma_S, cfg["lip"])
        d = distances_from_sample(simulate_sums(spec, n, cfg["reps"], cfg["seed"]), sigma_S)
        rep.empirical = {m: {"distance": v, "se": s} for m, (v, s) in d.items()}
        bounds = {"smooth": rep.smooth, "lipschitz": rep.lipschitz, "kolmogorov": rep.kolmogorov}
        for mode, b in bounds.items():
            v, s = d[mode]
            good = b >= v - k * s
            ok &= good
            rows.append({"n": n, "mode": mode, "bound": b, "empirical": v, "se": s,
                         "ratio": v / b if b > 0 else math.inf, "dominates": good})
        reports.append(rep.to_dict())
        print(f"be: n={n} smooth={rep.smooth:.4g} lipschitz={rep.lipschitz:.4g} "
              f"kolmogorov={rep.kolmogorov:.4g} empirical_ks={d['kolmogorov'][0]:.4g}")
    write_json(out / "be.json", {"sigma_S": sigma_S, "reports": reports}, cfg)
    write_csv(out / "be.csv", rows, ["n", "mode", "bound", "empirical", "se", "ratio", "dominates"])
    if figures:
        be_figure(out / "be_bounds.png", rows)
    return EXIT_OK if ok else EXIT_FLAGGED


def _path_spec(cfg):
    import numpy as np

    from .applications.ir import PathSpec

    p = cfg["path"]
    if p.get("kind") == "mbm":
        h0, h1 = float(p["H0"]), float(p["H1"])
        return PathSpec("mbm", cfg["n"], H_curve=lambda t: h0 + (h1 - h0) * np.asarray(t))
    return PathSpec("fbm", cfg["n"], H=float(p["H"]))


def cmd_ir(cfg: dict, out: Path, figures: bool) -> int:
    import numpy as np

    from .applications.ir import ir_clt_from_values, ir_statistic, ir_target, ir_tangent_spec, simulate_paths
    from .clt import sigma_limit
    from .report import curve_figure, histogram_figure, write_csv, write_json

    try:
        spec = _path_spec(cfg)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad path spec: {exc}") from None
    reps, seed, n = cfg["reps"], cfg["seed"], cfg["n"]
    R = np.empty(reps)
    for s0 in range(0, reps, 500):
        s1 = min(reps, s0 + 500)
        R[s0:s1] = ir_statistic(simulate_paths(spec, s1 - s0, seed + s0)).value
    target = ir_target(spec)
    sref = sigma_limit(ir_tangent_spec(spec.H), j_cut=2000, tail_tol=1e-3).value if spec.kind == "fbm" else None
    rep = ir_clt_from_values(R, n, target, seed, sref)
    tol = cfg["tolerance"]
    se = rep.extra["mean_R_se"]
    checks = {"mean": abs(rep.extra["mean_R"] - target) <= tol["mean_se_multiple"] * se, "ks": rep.ks <= tol["ks"]}
    write_json(out / "ir.json", {"report": rep.to_dict(), "checks": checks}, cfg)
    write_csv(out / "ir_values.csv", [{"replicate": i, "seed": seed + i, "R": float(r)} for i, r in enumerate(R)])
    write_csv(out / "ir_hist.csv", rep.histogram_rows(), ["bin_left", "bin_right", "count"])
    if figures:
        histogram_figure(out / "ir_hist.png", rep.hist_edges, rep.hist_counts, rep.sigma2,
                         r"$\sqrt{n}(R - \Lambda)$, fitted normal")
        h = np.linspace(0.05, 0.95, 19)
        from .applications.ir import lambda_of_H
        curve_figure(out / "ir_lambda.png", h, {"Lambda(H)": [lambda_of_H(float(x)).value for x in h]},
                     "H", r"$\Lambda(H)$")
    print(f"ir: mean_R={rep.extra['mean_R']:.6g} target={target:.6g} se={se:.3g} ks={rep.ks:.4g} "
          f"var={rep.emp_var:.5g} sigma2_tangent={sref}")
    return EXIT_OK if all(checks.values()) else EXIT_FLAGGED


def cmd_locstat(cfg: dict, out: Path, figures: bool) -> int:
    import numpy as np

    from .applications.locstat import (check_memory_condition, default_locstat, locstat_covariances,
                                       locstat_clt_experiment, quadratic_family)
    from .report import curve_figure, histogram_figure, write_csv, write_json

    c = cfg["coefficients"]
    check_memory_condition(cfg["m"], c["alpha"])
    spec = default_locstat(c["alpha"], c.get("kappa", 0.3), c.get("slope", 0.5), int(c.get("J_max", 2**16)),
                           cfg["nu"])
    W = np.asarray(cfg["weights"], dtype=float)
    if W.shape != (cfg["nu"], cfg["nu"]):
        raise ConfigError("weights must be a nu x nu matrix")
    cv = locstat_covariances(spec)
    gaps = [{"n": n, "gap": cv.gap(n)} for n in cfg["gap_n_list"]]
    monotone = all(b["gap"] < a["gap"] for a, b in zip(gaps, gaps[1:]))
    ex = locstat_clt_experiment(spec, quadratic_family(W), cfg["m"], cfg["n"], cfg["reps"], cfg["seed"])
    checks = {"gap_monotone": monotone, "ks": ex.report.ks <= cfg["tolerance"]["ks"]}
    write_json(out / "locstat.json", {"report": ex.to_dict(), "gaps": gaps, "checks": checks}, cfg)
    write_csv(out / "locstat_gap.csv", gaps, ["n", "gap"])
    write_csv(out / "locstat.csv", [{"n": cfg["n"], "reps": cfg["reps"], "sigma2": ex.sigma2,
                                     "sigma2_n": ex.report.sigma2_n, "empirical_variance": ex.report.emp_var,
                                     "ks": ex.report.ks, "kappa3": ex.report.kappa3, "kappa4": ex.report.kappa4}])
    write_csv(out / "locstat_hist.csv", ex.report.histogram_rows(), ["bin_left", "bin_right", "count"])
    if figures:
        curve_figure(out / "locstat_gap.png", [g["n"] for g in gaps], {"gap": [g["gap"] for g in gaps]},
                     "n", "covariance gap", logx=True, logy=True)
        histogram_figure(out / "locstat_hist.png", ex.report.hist_edges, ex.report.hist_counts, ex.sigma2,
                         f"n = {cfg['n']}")
    print(f"locstat: ks={ex.report.ks:.4g} sigma2={ex.sigma2:.6g} sigma2_n={ex.report.sigma2_n:.6g} "
          f"var={ex.report.emp_var:.6g} gap_monotone={monotone}")
    return EXIT_OK if all(checks.values()) else EXIT_FLAGGED


def cmd_conditions(cfg: dict, out: Path, figures: bool) -> int:
    from .gaussian_model import check_conditions
    from .report import curve_figure, write_csv, write_json

    model = _model(cfg)
    rep = check_conditions(model, cfg["m"], cfg["n_list"], cfg["K_list"])
    d = rep.to_dict()
    write_json(out / "conditions.json", {"report": d}, cfg)
    rows = [{"n": n, "S1": s, **{f"tail_K{K}": t for K, t in zip(rep.K_list, rep.tails[n])}}
            for n, s in zip(rep.n_list, rep.S1)]
    write_csv(out / "conditions.csv", rows)
    if rep.envelope_J:
        write_csv(out / "conditions_envelope.csv",
                  [{"J": J, "partial_sum": s} for J, s in zip(rep.envelope_J, rep.envelope_partial)])
        if figures:
            curve_figure(out / "conditions_envelope.png", rep.envelope_J, {"partial sum": rep.envelope_partial},
                         "J", r"$\sum_{|j|\leq J} |\rho(j)|^m$", logx=True)
    print(f"conditions: S1={[round(s, 6) for s in rep.S1]} trend={d['S1_trend']} "
          f"envelope_converges={rep.envelope_converges}")
    return EXIT_OK


COMMANDS = {"bound": cmd_bound, "clt": cmd_clt, "be": cmd_be, "ir": cmd_ir, "locstat": cmd_locstat,
            "conditions": cmd_conditions}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gaussub", description=__doc__.split("\n\n")[0].strip(),
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config; flags override its fields")
        p.add_argument("--seed", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--n-list", type=int, nargs="+", dest="n_list")
        p.add_argument("--reps", type=int)
        p.add_argument("--out", help="output directory (default: $GAUSSUB_OUTPUT_DIR or ./gaussub_out)")
        p.add_argument("--describe", action="store_true", help="print the resolved config and exit")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for linear algebra (default 1, sequential)")
        p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    return ap


def _limit_threads(k: int):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(k)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    _limit_threads(args.threads)
    try:
        cfg = resolve_config(args.command, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.describe:
        from .report import canonical_json

        sys.stdout.write(canonical_json(cfg))
        return EXIT_OK
    from .report import output_dir

    try:
        out = output_dir(args.out)
        return COMMANDS[args.command](cfg, out, not args.no_figures)
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

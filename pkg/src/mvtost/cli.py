"""Command-line interface: ``mvtost <command> [options]``.

Commands
--------
decide            TOST and alpha-TOST on a paired CSV or a summary-statistics JSON
alpha-star        adjusted level for a covariance matrix
power             rejection probability at a parameter point
size              size and least favourable point
simulate          operating-characteristic curves for a scenario JSON
check-existence   sufficient condition for an adjusted level to exist
"""

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .adjust import alpha_star, atost_decide, existence_check
from .core import KNOWN, LOG_125, EquivalenceSpec, SummaryStats, standardize_margins, tost_decide
from .data import load_csv, load_ticlopidine, summarize
from .exceptions import ExistenceError, NonConvergenceError
from .kernels import MCConfig, RngStream
from .power import ESTIMATED_MC, KNOWN_MC, power_mc, size
from .simulation import SimScenario, engine_size, export_curve, run_curve

SEED_ENV = "MVTOST_SEED"

# builtin values of the shared options; a --config file and then flags override
_DEFAULTS = {
    "alpha": 0.05,
    "margin_c": LOG_125,
    "lower": None,
    "upper": None,
    "seed": 0,
    "mc_draws": None,
    "randomizations": 16,
    "tol": 1e-4,
    "r_max": 10,
    "format": "table",
    "screen_outcome": None,
    "screen_alpha": 0.05,
}


def _common_parser():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("shared options")
    g.add_argument("--alpha", type=float, help="nominal level (default 0.05)")
    g.add_argument("--margin-c", type=float, help="symmetric margin c (default ln 1.25)")
    g.add_argument("--lower", type=float, help="lower margin; with --upper replaces --margin-c")
    g.add_argument("--upper", type=float, help="upper margin")
    g.add_argument("--seed", type=int, help=f"master seed (default ${SEED_ENV} or 0)")
    g.add_argument("--mc-draws", type=int, help="Sobol points per randomization")
    g.add_argument("--randomizations", type=int, help="independent scramblings (default 16)")
    g.add_argument("--tol", type=float, help="adjusted-level tolerance (default 1e-4)")
    g.add_argument("--r-max", type=int, help="maximum outer iterations (default 10)")
    g.add_argument("--format", choices=("table", "json", "csv"), help="output format (default table)")
    g.add_argument("--screen-outcome", help="outcome whose log ratios are screened for outliers")
    g.add_argument("--screen-alpha", type=float, help="level of the outlier screen (default 0.05)")
    g.add_argument("--config", help="JSON file of option defaults; flags take precedence")
    return p


def _input_args(p, theta=False):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", help="paired CSV: subject,<outcome>_T,<outcome>_R,...")
    src.add_argument("--ticlopidine", action="store_true", help="use the bundled ticlopidine data")
    src.add_argument("--stats", help='summary JSON {"theta_hat": [...], "sigma_hat": [[...]], "nu": n}')
    src.add_argument("--sigma", help="covariance matrix as a JSON nested list")
    p.add_argument("--nu", help='degrees of freedom, or "known" (default: from the input)')
    p.add_argument("--outcomes", nargs="+", help="restrict and order the outcomes of a CSV")
    if theta:
        p.add_argument("--theta", required=True, help="parameter point as a JSON list")


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="mvtost", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mvtost {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decide", parents=[common], help="TOST and alpha-TOST declarations")
    _input_args(p)

    p = sub.add_parser("alpha-star", parents=[common], help="adjusted level")
    _input_args(p)

    p = sub.add_parser("power", parents=[common], help="rejection probability")
    _input_args(p, theta=True)
    p.add_argument("--level", type=float, help="test level (default --alpha)")

    p = sub.add_parser("size", parents=[common], help="size and least favourable point")
    _input_args(p)
    p.add_argument("--level", type=float, help="test level (default --alpha)")

    p = sub.add_parser("simulate", parents=[common], help="operating-characteristic curves")
    p.add_argument("scenario", help="scenario JSON")
    p.add_argument("--out", help="output stem for <out>.csv and <out>.json")
    p.add_argument("--B", type=int, dest="B", help="override the number of replicates")
    p.add_argument("--n-jobs", type=int, default=1, help="parallel workers (default 1)")

    p = sub.add_parser("check-existence", parents=[common], help="existence condition")
    _input_args(p)
    p.add_argument("--m", type=int, help="number of outcomes (default: from the input)")
    p.add_argument("--sigma-max", type=float, help="largest standard error (default: from the input)")
    return parser


class CliError(Exception):
    pass


def _resolve(args):
    config = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            config = {k.replace("-", "_"): v for k, v in json.load(fh).items()}
    env_seed = os.environ.get(SEED_ENV)
    args.seed_given = args.seed is not None or "seed" in config or env_seed is not None
    for key, default in _DEFAULTS.items():
        if getattr(args, key, None) is None:
            if key in config:
                value = config[key]
            elif key == "seed" and env_seed is not None:
                value = int(env_seed)
            else:
                value = default
            setattr(args, key, value)
    return args


def _spec(args, theta_hat=None):
    if (args.lower is None) != (args.upper is None):
        raise CliError("--lower and --upper must be given together")
    if args.lower is not None:
        shifted, c = standardize_margins(
            np.zeros(1) if theta_hat is None else theta_hat, args.lower, args.upper
        )
        return EquivalenceSpec(c=c, alpha=args.alpha), shifted
    return EquivalenceSpec(c=args.margin_c, alpha=args.alpha), theta_hat


def _mc(args, known):
    base = KNOWN_MC if known else ESTIMATED_MC
    return MCConfig(args.mc_draws or base.points, args.randomizations or base.randomizations)


def _nu(value):
    if value is None:
        return None
    if value == KNOWN:
        return KNOWN
    try:
        return int(value)
    except ValueError:
        raise CliError(f'--nu must be an integer or "known", got {value!r}') from None


def _load(args):
    """Return (SummaryStats or None, covariance, nu, screen report)."""
    report = None
    if args.data or args.ticlopidine:
        data = load_ticlopidine(args.outcomes) if args.ticlopidine else load_csv(args.data, args.outcomes)
        stats, report = summarize(data, args.screen_outcome, args.screen_alpha)
    elif args.stats:
        with open(args.stats, encoding="utf-8") as fh:
            stats = SummaryStats.from_dict(json.load(fh))
    elif args.sigma:
        sigma = np.array(json.loads(args.sigma), dtype=float)
        nu = _nu(args.nu)
        if nu is None:
            raise CliError("--sigma requires --nu")
        return None, np.atleast_2d(sigma), nu, None
    else:
        return None, None, _nu(args.nu), None
    nu = _nu(args.nu) or stats.nu
    return stats, stats.sigma_hat, nu, report


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _csv(rows, fields):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue().rstrip("\n")


def _table(rows, fields, floatfmt="{:.4f}"):
    cells = [[str(f) for f in fields]]
    for r in rows:
        cells.append([floatfmt.format(r[f]) if isinstance(r[f], float) else str(r[f]) for f in fields])
    widths = [max(len(row[i]) for row in cells) for i in range(len(fields))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _yes(flag):
    return "Yes" if flag else "No"


def cmd_decide(args):
    stats, _, nu, report = _load(args)
    if stats is None:
        raise CliError("decide needs --data, --ticlopidine or --stats")
    spec, theta = _spec(args, stats.theta_hat)
    stats = SummaryStats(theta, stats.sigma_hat, nu if nu != KNOWN else stats.nu, stats.names)
    rng = RngStream(args.seed)
    tost = tost_decide(stats, spec)
    at = atost_decide(stats, spec, tol=args.tol, r_max=args.r_max, rng=rng, mc=_mc(args, False))
    rows = []
    for method, dec in (("TOST", tost), ("alpha-TOST", at.decision)):
        for r in dec.rows():
            rows.append({"method": method, "level": dec.level_used, **r})
    out = {
        "n_outcomes": stats.m,
        "nu": stats.nu,
        "c": spec.c,
        "alpha": spec.alpha,
        "sigma_max": float(np.max(stats.se)),
        "tost": tost.to_dict(),
        "atost": at.to_dict(),
        "screen": None if report is None else report.to_dict(),
    }
    if args.format == "json":
        return _dump(out)
    fields = ["method", "level", "outcome", "ci_lower", "ci_upper", "pass"]
    if args.format == "csv":
        return _csv(rows, fields)
    lines = []
    if report is not None:
        removed = ", ".join(report.removed) or "none"
        lines.append(f"screen on {report.outcome}: removed {removed} (|z| > {report.threshold:.3f})")
    lines.append(f"n outcomes = {stats.m}, nu = {stats.nu}, sigma_max = {out['sigma_max']:.4f}, c = {spec.c:.4f}")
    lines.append(_table([{**r, "pass": _yes(r["pass"])} for r in rows], fields))
    lines.append(f"Equivalence (TOST, level {spec.alpha:g}): {_yes(tost.equivalence_declared)}")
    if at.adjusted:
        lines.append(
            f"Equivalence (alpha-TOST, level {at.alpha_star.alpha_star:.4f}): "
            f"{_yes(at.decision.equivalence_declared)}"
        )
    else:
        lines.append(f"Equivalence (alpha-TOST not adjusted: {at.reason}): {_yes(at.decision.equivalence_declared)}")
    return "\n".join(lines)


def _need_sigma(sigma, nu, what):
    if sigma is None:
        raise CliError(f"{what} needs --sigma, --stats, --data or --ticlopidine")
    if nu is None:
        raise CliError(f"{what} needs --nu")


def cmd_alpha_star(args):
    _, sigma, nu, _ = _load(args)
    _need_sigma(sigma, nu, "alpha-star")
    spec, _ = _spec(args)
    existence = existence_check(float(np.sqrt(np.max(np.diag(sigma)))), sigma.shape[0], spec)
    try:
        res = alpha_star(sigma, nu, spec, tol=args.tol, r_max=args.r_max, rng=RngStream(args.seed), mc=_mc(args, nu == KNOWN))
        out = {"converged": True, **res.to_dict()}
    except NonConvergenceError as err:
        out = {"converged": False, "error": str(err)}
        if err.partial is not None:
            out.update(err.partial.to_dict())
    except ExistenceError as err:
        out = {"converged": False, "error": str(err), "trace": list(err.trace or [])}
    out["existence"] = existence.to_dict()
    if args.format == "json":
        return _dump(out)
    keys = ["alpha_star", "achieved_size", "achieved_size_se", "face", "outer_iters", "converged"]
    rows = [{"quantity": k, "value": out.get(k)} for k in keys if k in out]
    rows.append({"quantity": "lambda", "value": " ".join(f"{v:.6f}" for v in out.get("lambda", []))})
    if "error" in out:
        rows.append({"quantity": "error", "value": out["error"]})
    if args.format == "csv":
        return _csv(rows, ["quantity", "value"])
    return _table(rows, ["quantity", "value"], floatfmt="{:.6f}")


def _level(args):
    return args.alpha if args.level is None else args.level


def cmd_power(args):
    _, sigma, nu, _ = _load(args)
    _need_sigma(sigma, nu, "power")
    spec, theta = _spec(args, np.array(json.loads(args.theta), dtype=float))
    est = power_mc(_level(args), theta, sigma, nu, spec, mc=_mc(args, nu == KNOWN), rng=RngStream(args.seed))
    out = {"power": est.value, "std_error": est.std_error, "n_draws": est.n_draws, "exact": est.exact}
    if args.format == "json":
        return _dump(out)
    if args.format == "csv":
        return _csv([out], list(out))
    return f"power = {est.value:.6f} +- {est.std_error:.2e} ({est.n_draws} draws)"


def cmd_size(args):
    _, sigma, nu, _ = _load(args)
    _need_sigma(sigma, nu, "size")
    spec, _ = _spec(args)
    est, lam = size(_level(args), sigma, nu, spec, rng=RngStream(args.seed), mc=_mc(args, nu == KNOWN), full_output=True)
    out = {"size": est.value, "std_error": est.std_error, "lambda": lam.lambda_.tolist(), "face": lam.face}
    if args.format == "json":
        return _dump(out)
    if args.format == "csv":
        return _csv([{**out, "lambda": " ".join(repr(v) for v in out["lambda"])}], list(out))
    lam_s = ", ".join(f"{v:.6f}" for v in out["lambda"])
    return f"size = {est.value:.6f} +- {est.std_error:.2e}\nlambda = ({lam_s}), face {lam.face}"


def cmd_simulate(args):
    sc = SimScenario.from_json(args.scenario)
    overrides = {}
    if args.B is not None:
        overrides["B"] = args.B
    if args.seed_given:
        overrides["seed"] = args.seed
    if overrides:
        sc = SimScenario.from_dict({**sc.to_dict(), **overrides})
    res = run_curve(sc, tol=args.tol, n_jobs=args.n_jobs)
    paths = export_curve(res, args.out) if args.out else None
    rows = [
        {"method": mth, "kappa": float(k), "proportion": float(p), "se": float(s)}
        for mth in res.methods
        for k, p, s in zip(res.kappa, res.proportion[mth], res.std_error[mth])
    ]
    summary = {
        "scenario": sc.name,
        "size_at_kappa_1": res.size_at_one,
        "size_at_kappa_1_se": res.size_at_one_se,
        "level_used": res.level_used,
        "dominance_violations": res.dominance_violations,
        "atost_fallbacks": res.atost_fallbacks,
        "engine_tost_size": engine_size(sc).value,
        "files": None if paths is None else [str(p) for p in paths],
    }
    if args.format == "json":
        return _dump({**summary, "curve": rows})
    if args.format == "csv":
        return _csv([{"scenario_id": sc.name, **r} for r in rows], ["scenario_id", "method", "kappa", "proportion", "se"])
    lines = [_table(rows, ["method", "kappa", "proportion", "se"])]
    for mth in res.methods:
        lines.append(
            f"{mth}: level {res.level_used[mth]:.4f}, size at kappa=1 "
            f"{res.size_at_one[mth]:.4f} +- {res.size_at_one_se[mth]:.4f}"
        )
    lines.append(f"dominance violations: {res.dominance_violations}; solver fallbacks: {res.atost_fallbacks}")
    if paths:
        lines.append("wrote " + ", ".join(str(p) for p in paths))
    return "\n".join(lines)


def cmd_check_existence(args):
    stats, sigma, _, _ = _load(args)
    spec, _ = _spec(args)
    m = args.m if args.m is not None else (None if sigma is None else sigma.shape[0])
    if m is None:
        raise CliError("check-existence needs --m or an input")
    sigma_max = args.sigma_max
    if sigma_max is None and sigma is not None:
        sigma_max = float(np.sqrt(np.max(np.diag(sigma))))
    rep = existence_check(math.inf if sigma_max is None else sigma_max, m, spec)
    out = rep.to_dict()
    if sigma_max is None:
        out["holds"] = None
        out["sigma_max"] = None
    if args.format == "json":
        return _dump(out)
    if args.format == "csv":
        return _csv([out], list(out))
    verdict = "n/a" if out["holds"] is None else ("pass" if out["holds"] else "fail")
    sm = "" if sigma_max is None else f"sigma_max = {sigma_max:.4f} vs "
    return f"m = {m}, alpha = {spec.alpha:g}: {sm}bound {rep.bound:.4f} -> {verdict}"


COMMANDS = {
    "decide": cmd_decide,
    "alpha-star": cmd_alpha_star,
    "power": cmd_power,
    "size": cmd_size,
    "simulate": cmd_simulate,
    "check-existence": cmd_check_existence,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    fmt = args.format or "table"
    try:
        args = _resolve(args)
        fmt = args.format
        text = COMMANDS[args.command](args)
    except (CliError, ValueError, RuntimeError, OSError, KeyError) as err:
        if fmt == "json":
            print(_dump({"error": type(err).__name__, "message": err.args[0] if isinstance(err, KeyError) else str(err)}))
        else:
            print(f"mvtost: error: {err}", file=sys.stderr)
        return 1
    print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())

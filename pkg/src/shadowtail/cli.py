"""Command-line interface: fit, report, compare, simulate, diagnose.

Exit status is 0 on success, 1 on a data or pipeline error and 2 on a usage
error. ``SHADOW_SEED`` supplies the seed when ``--seed`` is absent.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from typing import Sequence

import numpy as np

from . import __version__
from .compare import ParetoSpec, absorbing_barrier_mean, soft_to_truncated_ratio, truncated_pareto_moment
from .dual import DualTransform, phi
from .errors import InsufficientDataError
from .gpd import fit_mle, gpd_sf, empirical_mean_excess
from .pipeline import (
    NonFrechetTailWarning,
    build_report,
    check_bounds,
    dumps,
    fit_shadow_model,
    load_sample,
    measures_dict,
    model_dict,
    model_from_report,
    timestamp,
)
from .shadow import ShadowModel, h_sensitivity, risk_measures, shadow_mean, shadow_sf
from .simulate import SimConfig, apparent_tail_experiment, bootstrap_shadow_mean, sample_shadow_y


class UsageError(Exception):
    """Bad combination of flags that argparse cannot express."""


# ---------------------------------------------------------------------------
# argument types
# ---------------------------------------------------------------------------

def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _levels(text: str) -> list[float]:
    values = _float_list(text)
    bad = [p for p in values if not 0 < p < 1]
    if bad:
        raise argparse.ArgumentTypeError(f"levels must lie in (0, 1), got {bad}")
    return values


def _quantile(text: str) -> float:
    q = float(text)
    if not 0 <= q < 1:
        raise argparse.ArgumentTypeError(f"quantile must lie in [0, 1), got {q}")
    return q


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a non-negative 64-bit integer")
    return value


def _model_params(text: str) -> dict[str, float]:
    params = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected key=value, got {part!r}")
        params[key.strip()] = float(value)
    missing = {"alpha", "sigma", "L", "H"} - params.keys()
    if missing:
        raise argparse.ArgumentTypeError(f"model is missing {sorted(missing)}")
    unknown = params.keys() - {"alpha", "sigma", "L", "H", "u"}
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown model keys {sorted(unknown)}")
    return params


def _resolve_seed(args) -> int | None:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("SHADOW_SEED")
    if env is None or not env.strip():
        return None
    try:
        return _seed(env)
    except (ValueError, argparse.ArgumentTypeError):
        raise UsageError(f"SHADOW_SEED must be a non-negative integer, got {env!r}") from None


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _g(x) -> str:
    return "%.17g" % float(x)


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_g(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _fit_with_notes(sample, args):
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonFrechetTailWarning)
        model, fit = fit_shadow_model(
            sample,
            args.lower_bound,
            args.upper_bound,
            threshold=args.threshold,
            threshold_quantile=args.threshold_quantile,
        )
    for w in caught:
        if issubclass(w.category, NonFrechetTailWarning):
            notes.append(str(w.message))
        else:
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    for note in notes:
        print(f"shadowtail: warning: {note}", file=sys.stderr)
    return model, fit, notes


def _quantile_used(args) -> float | None:
    if args.threshold is not None:
        return None
    return 0.95 if args.threshold_quantile is None else args.threshold_quantile


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    sample = load_sample(args.input, column=args.column, fmt=args.format)
    model, fit, notes = _fit_with_notes(sample, args)
    report = build_report(
        sample, args.lower_bound, args.upper_bound, model, fit, _quantile_used(args),
        var_levels=(), es_levels=(), seed=_resolve_seed(args), notes=notes,
    )
    _emit(dumps(report) + "\n", args.output)
    return 0


def cmd_report(args) -> int:
    seed = _resolve_seed(args)
    if args.report is not None:
        if args.input is not None:
            raise UsageError("give either --report or --input, not both")
        if args.bootstrap:
            raise UsageError("--bootstrap needs the raw data (--input)")
        with open(args.report, encoding="utf-8") as fh:
            report = json.load(fh)
        model = model_from_report(report)
        report["measures"] = measures_dict(risk_measures(model, args.var_levels, args.es_levels))
        report["sensitivity"] = (
            [{"H": h, "shadow_mean": v} for h, v in
             h_sensitivity(model.alpha, model.sigma, model.L, model.u, args.h_grid)]
            if args.h_grid else None
        )
        report["provenance"]["timestamp"] = timestamp()
        report["provenance"]["tool_version"] = __version__
        _emit(dumps(report) + "\n", args.output)
        return 0

    if args.input is None or args.lower_bound is None or args.upper_bound is None:
        raise UsageError("report needs --report PATH, or --input with --lower-bound and --upper-bound")
    sample = load_sample(args.input, column=args.column, fmt=args.format)
    model, fit, notes = _fit_with_notes(sample, args)
    report = build_report(
        sample, args.lower_bound, args.upper_bound, model, fit, _quantile_used(args),
        var_levels=args.var_levels, es_levels=args.es_levels, h_grid=args.h_grid,
        seed=seed, notes=notes,
    )
    if args.bootstrap and model is not None:
        boot_seed = 0 if seed is None else seed
        ci = bootstrap_shadow_mean(
            sample.values, model.L, model.H, model.u, level=args.ci_level,
            replicates=args.bootstrap, seed=boot_seed, workers=args.workers,
        )
        report["measures"]["shadow_mean_ci"] = {
            "level": ci.level, "lower": ci.lower, "upper": ci.upper,
            "replicates": ci.replicates, "failed": ci.failed, "seed": boot_seed,
        }
        report["provenance"]["seed"] = boot_seed
    _emit(dumps(report) + "\n", args.output)
    return 0


def cmd_compare(args) -> int:
    L = args.lower_bound
    u = L if args.threshold is None else args.threshold
    if args.h_curve:
        H_values = args.h_curve
    elif args.upper_bound is not None:
        H_values = [args.upper_bound]
    else:
        raise UsageError("compare needs --upper-bound or --h-curve")
    rows = []
    for H in H_values:
        spec = ParetoSpec(args.alpha, args.sigma, L, H)
        rows.append(("truncated_mean", H, truncated_pareto_moment(spec, 1.0)))
        rows.append(("absorbing_barrier_mean", H, absorbing_barrier_mean(spec)))
        rows.append(("shadow_mean", H, shadow_mean(ShadowModel(args.alpha, args.sigma, L, H, u))))
        rows.append(("ratio", H, soft_to_truncated_ratio(args.alpha, args.sigma, L, H, u)))
    _emit(_csv_text(("series", "H", "value"), [(s, float(h), float(v)) for s, h, v in rows]), args.output)
    return 0


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    if seed is None:
        raise UsageError("simulate needs --seed or SHADOW_SEED")
    p = args.model
    m = ShadowModel(p["alpha"], p["sigma"], p["L"], p["H"], p.get("u", p["L"]))
    cfg = SimConfig(seed=seed, n=args.n, censor_at=args.censor_at)
    if args.experiment == "draws":
        y = sample_shadow_y(m, cfg, workers=args.workers)
        _emit("".join(_g(v) + "\n" for v in y), args.output)
        return 0
    res = apparent_tail_experiment(m, cfg, workers=args.workers)
    summary = {
        "experiment": "apparent-tail",
        "seed": seed,
        "n": cfg.n,
        "censor_at": cfg.censor_at,
        "model": model_dict(m),
        "n_kept": res.n_kept,
        "n_exceedances": res.n_exceedances,
        "naive_xi": res.naive_fit.params.xi,
        "naive_xi_se": res.naive_fit.std_errors[0] if res.naive_fit.std_errors else None,
        "dual_xi": res.dual_fit.params.xi,
        "dual_xi_se": res.dual_fit.std_errors[0] if res.dual_fit.std_errors else None,
        "xi_gap_in_se": res.xi_gap_in_se,
        "naive_mean_finite": res.naive_fit.params.xi < 1,
        "shadow_mean": shadow_mean(m),
    }
    _emit(dumps(summary) + "\n", args.output)
    return 0


def _survival_grid(u: float, H: float) -> np.ndarray:
    span = H - u
    grid = u + span * np.geomspace(1e-6, 10.0, 141)
    return np.unique(np.concatenate([grid, [H]]))


def cmd_diagnose(args) -> int:
    sample = load_sample(args.input, column=args.column, fmt=args.format)
    L, H = args.lower_bound, args.upper_bound
    y = sample.values
    check_bounds(y, L, H)
    z = phi(DualTransform(L, H), y)
    rows = []

    order = np.sort(y)
    thresholds = order[y.size // 2 :: 5]
    for space, data, grid in (("Y", y, thresholds), ("Z", z, phi(DualTransform(L, H), thresholds))):
        for v, e in empirical_mean_excess(data, grid):
            rows.append((space, float(v), float(e), "mean_excess"))

    try:
        model, fit, _ = _fit_with_notes(sample, args)
    except InsufficientDataError as exc:
        print(f"shadowtail: warning: survival curves skipped: {exc}", file=sys.stderr)
        model = fit = None
    if fit is not None:
        u = fit.threshold
        exc = y[y > u]
        zeta = exc.size / y.size
        grid = _survival_grid(u, H)
        below = grid[grid < H]
        for v in grid:
            rows.append(("Y", float(v), float(np.count_nonzero(y > v)) / y.size, "empirical_survival"))
        if model is not None:
            sf = np.concatenate([zeta * shadow_sf(model, below), np.zeros(grid.size - below.size)])
            rows.extend(("Y", float(v), float(s), "shadow_survival") for v, s in zip(grid, sf))
        naive = fit_mle(exc - u, threshold=u)
        rows.extend(
            ("Y", float(v), float(zeta * s), "naive_survival")
            for v, s in zip(grid, np.atleast_1d(gpd_sf(naive.params, grid - u)))
        )
    _emit(_csv_text(("space", "threshold_or_y", "value", "series_tag"), rows), args.output)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_input(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--input", required=required, help="CSV or JSONL file of observations")
    p.add_argument("--column", type=int, default=0, help="CSV column index (default 0)")
    p.add_argument("--format", choices=("csv", "jsonl"), help="input format (default: by extension)")
    p.add_argument("--lower-bound", type=float, required=required, help="lower bound L of the support")
    p.add_argument("--upper-bound", type=float, required=required, help="upper bound H of the support")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--threshold", type=float, help="threshold u in loss units")
    group.add_argument("--threshold-quantile", type=_quantile,
                       help="threshold as a sample quantile (default 0.95)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shadowtail", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the dual tail and write a report")
    _add_input(p)
    p.add_argument("--seed", type=_seed, help="seed recorded in the provenance block")
    p.add_argument("--output", help="output path (default stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="risk measures from a fit or a saved report")
    _add_input(p, required=False)
    p.add_argument("--report", help="previously written fit report")
    p.add_argument("--var-levels", type=_levels, default=[0.95, 0.99])
    p.add_argument("--es-levels", type=_levels, default=[0.95, 0.99])
    p.add_argument("--h-grid", type=_float_list, help="upper bounds for the sensitivity sweep")
    p.add_argument("--bootstrap", type=int, default=0, metavar="N",
                   help="add a percentile bootstrap CI for the shadow mean with N replicates")
    p.add_argument("--ci-level", type=_quantile, default=0.95)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("compare", help="shadow mean against hard truncation and absorbing barrier")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--lower-bound", type=float, required=True)
    p.add_argument("--upper-bound", type=float)
    p.add_argument("--threshold", type=float, help="shadow threshold u (default L)")
    p.add_argument("--h-curve", type=_float_list, help="sweep of upper bounds")
    p.add_argument("--output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="draw from a shadow model or run the apparent-tail experiment")
    p.add_argument("--model", type=_model_params, required=True,
                   help='e.g. "alpha=0.8,sigma=1,L=1,H=1e6,u=1" (u defaults to L)')
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--censor-at", type=float, help="drop draws above M")
    p.add_argument("--experiment", choices=("draws", "apparent-tail"), default="draws")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="mean-excess and survival plot data")
    _add_input(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "workers", 1) < 1:
        parser.print_usage(sys.stderr)
        print("shadowtail: error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"shadowtail: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, KeyError, TypeError) as exc:
        print(f"shadowtail: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

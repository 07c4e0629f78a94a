"""Command-line interface.

Every artifact carries the parsed configuration, the seed and the library
version: JSON outputs under top-level keys, CSV outputs in a leading ``#``
comment line. Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .conservative import conservative_curves
from .counterfactual import dr_learner_cdf, one_step_cdf_field, plugin_cdf_field
from .data import DataFormatError, Dataset, read_csv
from .dist1d import default_grid
from .effects import (contrast_effect, differential_effect_plugin, infinitesimal_profile,
                      quadratic_effect_onestep, quadratic_effect_plugin)
from .inference import PipelineConfig, bootstrap_band, hulc_interval
from .nuisance import fit_kernel_cond_cdf
from .simlab import DgpSpec, simulate
from .transport import (barycenter, conservative_psi_lower_binary, covariance_bounds,
                        default_z_grid, fh_difference_cdf_bounds)

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
NO_EIF_MSG = ("the one-step estimator needs a discrete treatment: with a continuous "
              "treatment the target has no efficient influence function "
              "(use --estimator dr_learner or plugin)")

# named substreams derived from --seed
STREAM_SPLIT, STREAM_BOOT, STREAM_HULC, STREAM_ANCHORS = 1, 2, 3, 4


class ValidationError(ValueError):
    pass


def substream(seed: int, name: int) -> int:
    """Deterministic child seed for one named use of the master seed."""
    return int(np.random.SeedSequence([seed, name]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def _config(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _envelope(args, result) -> dict:
    return {"command": args.command, "config": _config(args), "seed": args.seed,
            "version": __version__, "result": result}


def _emit(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def write_json(args, result, out=None):
    text = json.dumps(_jsonable(_envelope(args, result)), sort_keys=True, indent=1) + "\n"
    _emit(text, args.out if out is None else out)


def write_csv(args, header, rows):
    buf = io.StringIO()
    meta = {"command": args.command, "config": _config(args), "seed": args.seed,
            "version": __version__}
    buf.write("# " + json.dumps(_jsonable(meta), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    _emit(buf.getvalue(), args.out)


# ---------------------------------------------------------------------------
# shared parsing
# ---------------------------------------------------------------------------

def parse_grid(spec: str | None) -> np.ndarray | None:
    """``"lo:hi:n"`` (linspace) or a comma-separated list."""
    if spec is None:
        return None
    try:
        if ":" in spec:
            lo, hi, n = spec.split(":")
            grid = np.linspace(float(lo), float(hi), int(n))
        else:
            grid = np.array([float(v) for v in spec.split(",")])
    except ValueError:
        raise ValidationError(f"bad grid spec {spec!r}; use lo:hi:n or v1,v2,...") from None
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or not np.all(np.isfinite(grid)):
        raise ValidationError(f"grid {spec!r} must be finite and strictly increasing")
    return grid


def load(args) -> Dataset:
    return read_csv(args.input)


def is_discrete(data: Dataset, args) -> bool:
    if args.treatment == "auto":
        return data.is_discrete(args.max_levels)
    return args.treatment == "discrete"


def a_grid_for(data: Dataset, args, discrete: bool) -> np.ndarray:
    grid = parse_grid(args.a_grid)
    if grid is not None:
        return grid
    if discrete:
        return data.levels()
    lo, hi = np.quantile(data.a, [0.05, 0.95])
    if not hi > lo:
        raise ValidationError("treatment has no spread; pass --a-grid explicitly")
    return np.linspace(lo, hi, 41)


def y_grid_for(data: Dataset, args) -> np.ndarray:
    return default_grid(data.y, args.y_points)


def fit_field(data: Dataset, args):
    discrete = is_discrete(data, args)
    a_grid = a_grid_for(data, args, discrete)
    y_grid = y_grid_for(data, args)
    treatment = "discrete" if discrete else "continuous"
    est = getattr(args, "estimator", "plugin")
    if est == "one_step":
        if not discrete:
            raise ValidationError(NO_EIF_MSG)
        return one_step_cdf_field(data, y_grid, h=args.h,
                                  seed=substream(args.seed, STREAM_SPLIT))
    if est == "dr_learner":
        if discrete:
            raise ValidationError("the DR-learner smooths over a continuous treatment; "
                                  "use plugin or one_step for discrete A")
        return dr_learner_cdf(data, a_grid, y_grid, h=args.h, nu=args.nu,
                              seed=substream(args.seed, STREAM_SPLIT))
    nuis = fit_kernel_cond_cdf(data, h=args.h, nu=args.nu, treatment=treatment)
    if discrete:
        missing = [a for a in a_grid if not np.any(data.a == a)]
        if missing:
            raise ValidationError(f"a-grid values {missing} are not observed treatment levels")
    return plugin_cdf_field(data, nuis, a_grid, y_grid, discrete=discrete)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    params = {}
    if args.dgp == "two_lines":
        params["a_range"] = tuple(args.a_range)
    if args.dgp == "hirano":
        params["propensity"] = args.propensity
    data, truth = simulate(DgpSpec(args.dgp, args.n, args.seed, params))
    if args.out in (None, "-"):
        raise ValidationError("simulate needs --out (the truth sidecar is written next to it)")
    data.to_csv(args.out)
    truth_path = Path(args.truth) if args.truth else Path(args.out).with_name("truth.json")
    write_json(args, truth, out=str(truth_path))


def cmd_fit_cdf(args):
    data = load(args)
    field = fit_field(data, args)
    write_json(args, {"field": field.to_dict(), "flags": list(field.flags)})


def cmd_curve(args):
    data = load(args)
    field = fit_field(data, args)
    if args.anchor_rows:
        rows = [int(v) for v in args.anchor_rows.split(",")]
        if any(r < 0 or r >= data.n for r in rows):
            raise ValidationError(f"anchor rows must lie in [0, {data.n})")
    else:
        if args.anchors < 1 or args.anchors > data.n:
            raise ValidationError(f"--anchors must lie in [1, {data.n}]")
        rng = np.random.default_rng(substream(args.seed, STREAM_ANCHORS))
        rows = sorted(rng.choice(data.n, size=args.anchors, replace=False).tolist())
    curves = conservative_curves(field, data.a[rows], data.y[rows])
    out = []
    for row, c in zip(rows, curves):
        out.extend((row, float(a), float(v)) for a, v in zip(c.a_grid, c.values))
    write_csv(args, ["anchor_id", "a", "y_star"], out)


def cmd_bounds(args):
    data = load(args)
    args.treatment = "discrete"
    levels = data.levels()
    if levels.size != 2:
        raise ValidationError(f"bounds need a binary treatment, found {levels.size} levels")
    field = fit_field(data, args)
    F0, F1 = field.laws
    cov = covariance_bounds(F0, F1)
    t_values = parse_grid(args.t) if args.t else np.array([0.0])
    diff = []
    for t in t_values:
        z = default_z_grid(F0, F1, t, refine=1)
        if z.size > args.max_z:
            z = z[np.linspace(0, z.size - 1, args.max_z).astype(int)]
        lo, hi = fh_difference_cdf_bounds(F0, F1, t, z)
        diff.append({"t": float(t), "z": z, "lower": lo, "upper": hi})
    write_json(args, {"levels": levels, "covariance_bounds": list(cov),
                      "w2_squared": conservative_psi_lower_binary(F0, F1),
                      "difference_cdf_bounds": diff})


def cmd_barycenter(args):
    data = load(args)
    field = fit_field(data, args)
    bary = barycenter(field.laws, field.pi_weights)
    u = np.linspace(0.01, 0.99, 99)
    write_json(args, {"a_grid": field.a_grid, "pi_weights": field.pi_weights,
                      "quantiles": {"u": u, "value": bary.quantile_at(u)},
                      "mean": bary.mean()})


def cmd_effect(args):
    data = load(args)
    discrete = is_discrete(data, args)
    if args.method == "one_step":
        if args.kind != "quadratic":
            raise ValidationError("one-step estimation is available for the quadratic effect only")
        if not discrete:
            raise ValidationError(NO_EIF_MSG)
        est = quadratic_effect_onestep(data, h=args.h, n_y=args.y_points,
                                       seed=substream(args.seed, STREAM_SPLIT))
    else:
        if args.kind in ("differential", "infinitesimal") and discrete:
            raise ValidationError(f"the {args.kind} effect differentiates in the treatment "
                                  "and needs a continuous one")
        field = fit_field(data, args)
        if args.kind == "quadratic":
            est = quadratic_effect_plugin(field)
        elif args.kind == "contrast":
            if args.a0 is None:
                raise ValidationError("--kind contrast needs --a0")
            est = contrast_effect(field, args.a0)
        elif args.kind == "differential":
            est = differential_effect_plugin(field)
        else:
            est = infinitesimal_profile(field)
    write_json(args, est.to_dict())


def _anchor(data: Dataset, args):
    if args.anchor is not None:
        return tuple(args.anchor)
    if not 0 <= args.anchor_row < data.n:
        raise ValidationError(f"--anchor-row must lie in [0, {data.n})")
    return float(data.a[args.anchor_row]), float(data.y[args.anchor_row])


def cmd_band(args):
    data = load(args)
    discrete = is_discrete(data, args)
    a_grid = a_grid_for(data, args, discrete)
    cfg = PipelineConfig(tuple(a_grid.tolist()), args.h, args.nu, args.y_points,
                         "discrete" if discrete else "continuous")
    band = bootstrap_band(data, cfg, _anchor(data, args), args.n_boot, args.alpha,
                          substream(args.seed, STREAM_BOOT), n_jobs=args.threads)
    write_csv(args, ["a", "center", "lo", "hi"], band.rows())


def cmd_hulc(args):
    data = load(args)
    if not is_discrete(data, args):
        raise ValidationError("HulC here targets the quadratic effect of a discrete treatment")
    levels = data.levels()

    def estimator(part: Dataset) -> float:
        if args.method == "one_step":
            return quadratic_effect_onestep(part, h=args.h, n_y=args.y_points,
                                            seed=substream(args.seed, STREAM_SPLIT)).value
        nuis = fit_kernel_cond_cdf(part, h=args.h, treatment="discrete")
        if not np.array_equal(part.levels(), levels):
            raise ValidationError("a HulC group is missing a treatment level; use more data")
        field = plugin_cdf_field(part, nuis, levels, default_grid(part.y, args.y_points),
                                 discrete=True)
        return quadratic_effect_plugin(field).value

    hi = hulc_interval(data, estimator, args.alpha, substream(args.seed, STREAM_HULC))
    write_json(args, hi.to_dict())


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p, data_in=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    if data_in:
        p.add_argument("--in", dest="input", required=True, help="CSV with header x1..xd,a,y")
        p.add_argument("--treatment", choices=["auto", "discrete", "continuous"], default="auto")
        p.add_argument("--max-levels", type=int, default=10,
                       help="auto mode treats A as discrete up to this many distinct values")
        p.add_argument("--h", type=float, default=None, help="covariate bandwidth")
        p.add_argument("--nu", type=float, default=None, help="treatment bandwidth")
        p.add_argument("--a-grid", default=None, help="lo:hi:n or comma list")
        p.add_argument("--y-points", type=int, default=512)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conservative-cf",
                                     description="Conservative counterfactual curves and effects.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a dataset with known truth")
    _common(p, data_in=False)
    p.add_argument("--dgp", choices=["hirano", "two_lines", "location_gauss", "binary_gauss"],
                   required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--a-range", type=float, nargs=2, default=[1.0, 2.0])
    p.add_argument("--propensity", choices=["rate", "mean"], default="rate")
    p.add_argument("--truth", default=None, help="truth sidecar path (default: truth.json)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-cdf", help="estimate the counterfactual CDF family")
    _common(p)
    p.add_argument("--estimator", choices=["plugin", "one_step", "dr_learner"], default="plugin")
    p.set_defaults(func=cmd_fit_cdf)

    p = sub.add_parser("curve", help="conservative curves through observed points")
    _common(p)
    p.add_argument("--estimator", choices=["plugin", "one_step", "dr_learner"], default="plugin")
    p.add_argument("--anchors", type=int, default=5, help="number of random anchor rows")
    p.add_argument("--anchor-rows", default=None, help="explicit comma-separated row indices")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("bounds", help="coupling bounds for a binary treatment")
    _common(p)
    p.add_argument("--t", default=None, help="difference thresholds (grid spec)")
    p.add_argument("--max-z", type=int, default=200)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("barycenter", help="Wasserstein barycenter of the CDF family")
    _common(p)
    p.set_defaults(func=cmd_barycenter)

    p = sub.add_parser("effect", help="effect summaries")
    _common(p)
    p.add_argument("--kind", choices=["quadratic", "contrast", "differential", "infinitesimal"],
                   default="quadratic")
    p.add_argument("--method", choices=["plugin", "one_step"], default="plugin")
    p.add_argument("--a0", type=float, default=None)
    p.set_defaults(func=cmd_effect)

    p = sub.add_parser("band", help="bootstrap band for one conservative curve")
    _common(p)
    p.add_argument("--anchor-row", type=int, default=0)
    p.add_argument("--anchor", type=float, nargs=2, default=None, metavar=("A", "Y"))
    p.add_argument("--n-boot", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.1)
    p.set_defaults(func=cmd_band)

    p = sub.add_parser("hulc", help="HulC interval for the quadratic effect")
    _common(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--method", choices=["plugin", "one_step"], default="plugin")
    p.set_defaults(func=cmd_hulc)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_INVALID
    if hasattr(args, "alpha") and not 0 < args.alpha < 1:
        print("error: --alpha must lie in (0, 1)", file=sys.stderr)
        return EXIT_INVALID
    try:
        with np.errstate(all="ignore"):
            args.func(args)
    except (DataFormatError, ValidationError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

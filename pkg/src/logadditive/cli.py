"""Command-line interface: ``logadditive {fit,select,predict,tabulate,simulate,chi-fit}``.

Exit codes: 1 for I/O problems, 2 for invalid data or arguments, 3 for
numerical failures (singular systems, over-parameterized models).
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .dataset import INTERCEPT, load_profiles, preprocess, dumps_profiles
from .design import AdditiveModelSpec, eq8_spec, eq8q_spec, make_spec, profile_consistency_spec
from .diffusivity import DEFAULT_LAMBDA, chi_basis, fit_chi, load_conditions
from .errors import DataError, NumericalError, SpecError
from .model import FittedModel, predict, tabulate
from .risk import CorrelationModel
from .selection import fit_outcome, forward_select, relative_grid
from .simulate import simulate_profiles
from .splines import DEFAULT_THINNING, SplineBasis
from .tables import BUILTIN_MODELS

EXIT_IO, EXIT_DATA, EXIT_NUMERICAL = 1, 2, 3

DEFAULT_CANDIDATES = ("nbar", "qgeo", "Ip", "Vloop", "Bt", "kappa", "li", "a", "R", "Zeff", "time")
TEMP_UNITS = {"ev": 1.0, "kev": 1000.0}


def parse_lambda_grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        return relative_grid(float(lo), float(hi), int(n))
    except ValueError:
        raise SpecError(f"--lambda-grid expects lo:hi:n, got {text!r}") from None


def _json_arg(text: str):
    """Inline JSON, or the contents of a JSON file."""
    if text.lstrip().startswith(("{", "[")):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"malformed inline JSON: {exc.msg}") from None
    path = Path(text)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: malformed JSON ({exc.msg})") from None


def parse_spec(text: str, basis: SplineBasis) -> AdditiveModelSpec:
    """Preset name (``eq8``, ``eq8q``, ``consistency:Ip,Bt``, ``free:Ip,Bt``), inline JSON or a JSON file."""
    if text == "eq8":
        return eq8_spec(basis)
    if text == "eq8q":
        return eq8q_spec(basis)
    for prefix, build in (("consistency:", profile_consistency_spec), ("free:", make_spec)):
        if text.startswith(prefix):
            names = [c for c in text[len(prefix):].split(",") if c]
            return build(names, basis)
    return AdditiveModelSpec.from_json(_json_arg(text), basis)


def load_model(text: str) -> FittedModel:
    if text in BUILTIN_MODELS:
        return BUILTIN_MODELS[text]()
    return FittedModel.load(text)


def parse_covariates(text: str) -> dict[str, float]:
    """``Ip=2.5,Bt=2.7`` or JSON."""
    if text.lstrip().startswith("{") or text.endswith(".json"):
        obj = _json_arg(text)
        return {k: float(v) for k, v in obj.items()}
    out = {}
    for item in text.split(","):
        if not item:
            continue
        key, sep, val = item.partition("=")
        if not sep:
            raise SpecError(f"covariate {item!r} must look like name=value")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise SpecError(f"covariate {key!r}: {val!r} is not a number") from None
    return out


def parse_psi(text: str) -> np.ndarray:
    """Comma list or ``lo:hi:step``."""
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            n = int(round((hi - lo) / step))
            return np.round(lo + step * np.arange(n + 1), 10)
        return np.array([float(x) for x in text.split(",") if x])
    except ValueError:
        raise SpecError(f"cannot parse psi values {text!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _correlation(args) -> CorrelationModel:
    return CorrelationModel.from_rho(args.rho, args.corr_length)


def _grid(args):
    return parse_lambda_grid(args.lambda_grid) if args.lambda_grid else None


def _profiles(args):
    profiles = load_profiles(args.input)
    if args.preprocess:
        profiles = preprocess(profiles, args.edge_threshold, args.reflect_threshold)
    if args.reference_model:
        profiles = profiles.with_normalization(load_model(args.reference_model).normalization)
    return profiles


def _basis(args) -> SplineBasis:
    return SplineBasis.clamped(args.knots, args.thinning)


def cmd_fit(args) -> int:
    profiles = _profiles(args)
    spec = parse_spec(args.spec, _basis(args))
    lambdas = None if args.fixed_lambda is None else args.fixed_lambda
    outcome = fit_outcome(profiles, spec, criterion=args.criterion, grid=_grid(args),
                          corr=_correlation(args), lambdas=lambdas, scale=args.scale,
                          temp_unit_ev=TEMP_UNITS[args.temp_unit])
    model = outcome.model
    if args.out:
        model.save(args.out)
    m, risk = model.metrics, model.risk
    summary = {
        "mae_ev": m["mae_ev"],
        "mae_percent_line_average": 100.0 * m["mae_fraction"],
        "rmse_log": m["rmse_log"],
        "rice": risk.rice if np.isfinite(risk.rice) else None,
        "dof_effective": risk.dof_effective,
    }
    if args.metrics_out:
        Path(args.metrics_out).write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    lines = [
        f"terms: {', '.join(f'{t.name}({t.constraint})' for t in spec.terms)}",
        f"profiles: {len(profiles)}  measured points: {profiles.n_measured}",
        f"MAE: {m['mae_ev']:.1f} eV ({summary['mae_percent_line_average']:.1f}% of mean line-average "
        f"{m['mean_line_average_ev']:.0f} eV)",
        f"RMSE (log scale): {m['rmse_log']:.4f}",
    ]
    lines += [f"{label}: {value}" for label, value in risk.rows()]
    for name, se in model.stderr.items():
        lines.append(f"constant {name}: {model.constant(name):.4f} +/- {se:.4f}")
    print("\n".join(lines))
    return 0


def cmd_select(args) -> int:
    profiles = _profiles(args)
    candidates = [c for c in args.candidates.split(",") if c] if args.candidates else list(DEFAULT_CANDIDATES)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        trace = forward_select(profiles, candidates, max_stages=args.max_stages, basis=_basis(args),
                               criterion=args.criterion, grid=_grid(args), corr=_correlation(args),
                               temp_unit_ev=TEMP_UNITS[args.temp_unit])
    if args.out:
        Path(args.out).write_text(json.dumps(trace.to_json(), indent=1, sort_keys=True) + "\n")
    sys.stdout.write(trace.render())
    for msg in trace.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    covs = parse_covariates(args.covariates)
    psi = parse_psi(args.psi)
    temp = predict(model, psi, covs) * model.temp_unit_ev
    rows = ["psi\ttemp_ev"] + [f"{p + 0.0:.4f}\t{t:.6g}" for p, t in zip(psi, temp)]
    _emit("\n".join(rows) + "\n", args.out)
    return 0


def cmd_tabulate(args) -> int:
    model = load_model(args.model)
    _emit(tabulate(model, args.step), args.out)
    return 0


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    ranges = None
    if args.ranges:
        ranges = {k: tuple(float(x) for x in v) for k, v in _json_arg(args.ranges).items()}
    sim = simulate_profiles(model, n_profiles=args.n_profiles, noise_rel=args.noise, seed=args.seed,
                            ranges=ranges, n_points=args.n_points, sampling=args.sampling)
    _emit(dumps_profiles(sim), args.out)
    return 0


def cmd_chi_fit(args) -> int:
    profiles = load_profiles(args.input)
    conditions = load_conditions(args.conditions)
    terms = [INTERCEPT] + [t for t in (args.terms or "").split(",") if t and t != INTERCEPT]
    result = fit_chi(profiles, conditions, terms=terms, lambdas=DEFAULT_LAMBDA if args.fixed_lambda is None else args.fixed_lambda,
                     basis=chi_basis(args.knots), n_grid=args.n_grid)
    if args.out:
        result.model.save(args.out)
    lines = [f"iterations: {result.iterations}  converged: {result.converged}",
             f"objective: {result.objective:.6g}",
             f"MAE: {result.model.metrics['mae_ev']:.2f} eV"]
    lines += [f"{label}: {value}" for label, value in result.risk.rows()]
    print("\n".join(lines))
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", help="output path (default: stdout where applicable)")


def _add_fit_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="profiles NDJSON")
    p.add_argument("--criterion", choices=("rice", "gcv"), default="rice")
    p.add_argument("--rho", type=float, default=0.0, help="within-profile error correlation (AR1 in psi)")
    p.add_argument("--corr-length", type=float, default=0.05, help="correlation length in psi")
    p.add_argument("--lambda-grid", help="relative smoothing grid lo:hi:n (default 1e-6:1e6:25)")
    p.add_argument("--lambda", dest="fixed_lambda", type=float,
                   help="use this smoothing parameter for every term instead of searching")
    p.add_argument("--knots", type=int, default=20, help="number of interior knots")
    p.add_argument("--thinning", type=float, default=DEFAULT_THINNING, help="edge knot thinning factor")
    p.add_argument("--temp-unit", choices=sorted(TEMP_UNITS), default="kev",
                   help="temperature unit of the fitted log scale (default kev)")
    p.add_argument("--reference-model",
                   help="take covariate reference values from this model file (or table3/table4)")
    p.add_argument("--preprocess", action="store_true",
                   help="delete rising edge points and reflect outboard points inboard first")
    p.add_argument("--edge-threshold", type=float, default=0.9)
    p.add_argument("--reflect-threshold", type=float, default=0.87)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logadditive", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit an additive model and report risk and fit metrics")
    _add_common(p)
    _add_fit_options(p)
    p.add_argument("--spec", default="eq8", help="eq8, eq8q, consistency:<covs>, free:<covs>, JSON or file")
    p.add_argument("--scale", choices=("log", "linear"), default="log")
    p.add_argument("--metrics-out", help="write the summary metrics as JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="forward selection of radial functions")
    _add_common(p)
    _add_fit_options(p)
    p.add_argument("--candidates", help="comma-separated covariates")
    p.add_argument("--max-stages", type=int)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("predict", help="temperature profile for given covariates")
    _add_common(p)
    p.add_argument("--model", required=True, help="model JSON, or table3/table4")
    p.add_argument("--covariates", required=True, help="name=value list or JSON")
    p.add_argument("--psi", default="-1:1:0.1", help="comma list or lo:hi:step")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("tabulate", help="radial functions as a TSV table")
    _add_common(p)
    p.add_argument("--model", required=True, help="model JSON, or table3/table4")
    p.add_argument("--step", type=float, default=0.1)
    p.set_defaults(func=cmd_tabulate)

    p = sub.add_parser("simulate", help="synthetic profiles from a model")
    _add_common(p)
    p.add_argument("--model", default="table3", help="model JSON, or table3/table4")
    p.add_argument("--n-profiles", type=int, default=43)
    p.add_argument("--noise", type=float, default=0.10, help="relative noise level")
    p.add_argument("--n-points", type=int, default=50)
    p.add_argument("--ranges", help="covariate ranges as JSON {name: [lo, hi]} or file")
    p.add_argument("--sampling", choices=("log-uniform", "uniform"), default="log-uniform")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("chi-fit", help="fit a log-additive diffusivity through the transport model")
    _add_common(p)
    p.add_argument("--input", required=True, help="profiles NDJSON (psi used as |psi|)")
    p.add_argument("--conditions", required=True, help="discharge conditions NDJSON")
    p.add_argument("--terms", help="comma-separated covariates besides the intercept")
    p.add_argument("--lambda", dest="fixed_lambda", type=float, help="smoothing parameter for every term (default 1e-2)")
    p.add_argument("--knots", type=int, default=8, help="interior knots on [0, 1]")
    p.add_argument("--n-grid", type=int, help="resample conditions onto this many grid points")
    p.set_defaults(func=cmd_chi_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        where = f": {exc.filename}" if getattr(exc, "filename", None) else ""
        print(f"I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

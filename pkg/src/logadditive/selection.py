"""Smoothing-parameter search, forward variable selection and term reductions."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import DISCOURAGED_COVARIATES, INTERCEPT, ProfileSet
from .design import AdditiveModelSpec, DesignSystem, build_design, make_spec
from .errors import (
    CovariateError,
    DomainError,
    NumericalError,
    OverParameterizedError,
    SpecError,
)
from .model import FittedModel, fit_metrics
from .pwls import FitResult, coefficient_covariance, solve, solve_linear_scale
from .risk import CorrelationModel, autocorr_K, criterion_value, risk_report
from .splines import SplineBasis

GRID_SIZE = 25
GRID_SPAN = (1e-6, 1e6)
STOP_REL_IMPROVEMENT = 0.01


def relative_grid(lo: float = GRID_SPAN[0], hi: float = GRID_SPAN[1], n: int = GRID_SIZE) -> np.ndarray:
    """Geometric multipliers applied to each term's natural scale ``tr(C_l)/tr(S_l)``."""
    if n < 1 or not 0 < lo <= hi:
        raise SpecError("lambda grid needs n >= 1 and 0 < lo <= hi")
    return np.geomspace(lo, hi, n)


def term_scales(system: DesignSystem) -> np.ndarray:
    """``tr(C_l) / tr(S_l)`` per term; 0 for unpenalized terms."""
    out = np.zeros(len(system.blocks))
    C = system.C
    for i, blk in enumerate(system.blocks):
        tS = system.penalty_trace(i)
        if tS > 0:
            out[i] = float(np.trace(C[blk, blk])) / tS
    return out


@dataclass(frozen=True, eq=False)
class LambdaSearch:
    lambdas: np.ndarray
    value: float
    fit: FitResult
    index: tuple[int, ...]
    n_evaluations: int


def optimize_lambdas(system: DesignSystem, criterion: str = "rice", grid: np.ndarray | None = None,
                     K: np.ndarray | None = None, start: Sequence[int] | None = None) -> LambdaSearch:
    """Coordinate descent over per-term smoothing parameters on a geometric grid.

    Every penalized term gets ``lambda_l = grid * tr(C_l)/tr(S_l)``. Starting
    from the middle grid point (or ``start``), each pass scans one term at a
    time over the whole grid and moves to the first grid point with a strictly
    lower criterion. The search stops after a pass that moves nothing.
    Inadmissible points (Rice or GCV undefined) score ``inf``.
    """
    grid = relative_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise SpecError("lambda grid is empty")
    scales = term_scales(system)
    active = [i for i in range(len(scales)) if scales[i] > 0]
    n = grid.size
    idx = [n // 2] * len(scales) if start is None else list(start)
    cache: dict[tuple[int, ...], tuple[float, FitResult]] = {}

    def lam_of(ix) -> np.ndarray:
        return np.array([grid[ix[i]] * scales[i] if i in active else 0.0 for i in range(len(scales))])

    def evaluate(ix) -> float:
        key = tuple(ix[i] for i in active)
        if key not in cache:
            fit = solve(system, lam_of(ix), K)
            cache[key] = (criterion_value(fit, criterion), fit)
        return cache[key][0]

    best = evaluate(idx)
    changed = True
    while changed and active:
        changed = False
        for i in active:
            vals = []
            for j in range(n):
                trial = idx.copy()
                trial[i] = j
                vals.append(evaluate(trial))
            j = int(np.argmin(vals))
            if vals[j] < best:
                best, idx[i], changed = vals[j], j, True
    if not math.isfinite(best):
        raise OverParameterizedError(
            f"{criterion} is undefined at every grid point: the model is too rich for {system.n_measured} points")
    key = tuple(idx[i] for i in active)
    return LambdaSearch(lambdas=lam_of(idx), value=best, fit=cache[key][1], index=tuple(idx),
                        n_evaluations=len(cache))


def in_units(profiles: ProfileSet, temp_unit_ev: float) -> ProfileSet:
    """Express temperatures (and their errors) in units of ``temp_unit_ev`` eV."""
    if temp_unit_ev == 1.0:
        return profiles
    if not temp_unit_ev > 0:
        raise SpecError("temperature unit must be positive")
    return profiles.map(lambda r: replace(r, temp=r.temp / temp_unit_ev, sigma=r.sigma / temp_unit_ev))


@dataclass(eq=False)
class FitOutcome:
    model: FittedModel
    system: DesignSystem
    fit: FitResult
    search: LambdaSearch | None


def fit_outcome(profiles: ProfileSet, spec: AdditiveModelSpec, criterion: str = "rice",
                grid: np.ndarray | None = None, corr: CorrelationModel | None = None,
                lambdas=None, scale: str = "log", temp_unit_ev: float = 1.0,
                start: Sequence[int] | None = None) -> FitOutcome:
    """Build, optimize, solve and summarize one additive model.

    Smoothing parameters are searched on the log scale unless given. With
    ``scale="linear"`` the final coefficients are refined on the temperature
    scale at those smoothing parameters.
    """
    if scale not in ("log", "linear"):
        raise SpecError(f"unknown scale {scale!r}")
    data = in_units(profiles, temp_unit_ev)
    system = build_design(data, spec)
    K = autocorr_K(system, corr)
    search = None
    if lambdas is None:
        search = optimize_lambdas(system, criterion, grid, K, start)
        fit = search.fit
    else:
        fit = solve(system, lambdas, K)
    if scale == "linear":
        fit = solve_linear_scale(system, fit.lambdas, start=fit.alpha)
        if corr is not None and not corr.is_independent:
            # tr[K G] of the linearized problem under correlated errors
            fit = replace(fit, trace_KG=float(np.sum(K * fit.G)))
    report = risk_report(fit, strict=False)
    cov = coefficient_covariance(fit, system, K)
    stderr = {}
    for t, blk in zip(spec.terms, system.blocks):
        if t.constraint == "constant":
            stderr[t.name] = float(math.sqrt(max(cov[blk, blk][0, 0], 0.0)))
    model = FittedModel.from_fit(system, fit, risk=report,
                                 metrics=fit_metrics(system, fit, data, temp_unit_ev),
                                 stderr=stderr, temp_unit_ev=temp_unit_ev)
    return FitOutcome(model, system, fit, search)


def fit_additive(profiles: ProfileSet, spec: AdditiveModelSpec, **kwargs) -> FittedModel:
    """Fitted model with risk report and fit metrics; see :func:`fit_outcome`."""
    return fit_outcome(profiles, spec, **kwargs).model


INADMISSIBLE_ERRORS = (NumericalError, CovariateError, DomainError)


@dataclass
class SelectionTrace:
    """Criterion values of every candidate at every stage.

    ``stages[s]`` maps candidate to criterion value (``inf`` when the
    candidate model is inadmissible); ``chosen[s]`` is the stage winner, or
    ``None`` for a final stage that did not improve enough.
    """

    baseline: float
    stages: list[dict[str, float]] = field(default_factory=list)
    chosen: list[str | None] = field(default_factory=list)
    stop_reason: str = ""
    criterion: str = "rice"
    warnings: list[str] = field(default_factory=list)

    @property
    def selected(self) -> list[str]:
        return [c for c in self.chosen if c is not None]

    @property
    def winning_values(self) -> list[float]:
        return [self.stages[s][c] for s, c in enumerate(self.chosen) if c is not None]

    def to_json(self) -> dict:
        fin = lambda v: v if math.isfinite(v) else None  # noqa: E731
        return {
            "criterion": self.criterion,
            "baseline": fin(self.baseline),
            "stages": [{k: fin(v) for k, v in st.items()} for st in self.stages],
            "chosen": list(self.chosen),
            "selected": self.selected,
            "stop_reason": self.stop_reason,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, obj) -> "SelectionTrace":
        inf = lambda v: math.inf if v is None else v  # noqa: E731
        return cls(baseline=inf(obj["baseline"]),
                   stages=[{k: inf(v) for k, v in st.items()} for st in obj["stages"]],
                   chosen=list(obj["chosen"]), stop_reason=obj["stop_reason"],
                   criterion=obj.get("criterion", "rice"), warnings=list(obj.get("warnings", [])))

    def render(self) -> str:
        """Candidates as rows, stages as columns; winners starred, earlier winners shown as seed."""
        names = []
        for st in self.stages:
            names.extend(n for n in st if n not in names)
        width = max([len("Vars in model")] + [len(n) for n in names])
        head = f"{'Vars in model':<{width}}" + "".join(f"{f'{s + 1} Var':>10}" for s in range(len(self.stages)))
        lines = [head]
        for name in names:
            cells = []
            for s, st in enumerate(self.stages):
                if name in self.chosen[:s]:
                    cells.append("seed")
                elif name not in st:
                    cells.append("")
                elif not math.isfinite(st[name]):
                    cells.append("inadm.")
                else:
                    star = "*" if self.chosen[s] == name else ""
                    cells.append(f"{st[name]:.4g}{star}")
            lines.append(f"{name:<{width}}" + "".join(f"{c:>10}" for c in cells))
        lines.append(f"baseline (intercept only): {self.baseline:.4g}; stop: {self.stop_reason}")
        return "\n".join(lines) + "\n"


def forward_select(profiles: ProfileSet, candidates: Sequence[str], max_stages: int | None = None,
                   basis: SplineBasis | None = None, criterion: str = "rice",
                   grid: np.ndarray | None = None, corr: CorrelationModel | None = None,
                   rel_tol: float = STOP_REL_IMPROVEMENT, temp_unit_ev: float = 1.0) -> SelectionTrace:
    """Greedy forward selection of free radial functions.

    Stage 0 is the intercept-only model. Each stage fits the current model
    plus one remaining candidate (each with its own smoothing-parameter
    search) and keeps the best. Selection stops when the best relative
    improvement is below ``rel_tol``, when ``max_stages`` are done or no
    candidates remain, or when every candidate is inadmissible.
    """
    candidates = list(dict.fromkeys(candidates))
    if not candidates:
        raise SpecError("candidate list is empty")
    if INTERCEPT in candidates:
        raise SpecError("the intercept is always in the model and cannot be a candidate")
    basis = SplineBasis.clamped() if basis is None else basis
    max_stages = len(candidates) if max_stages is None else max_stages
    data = in_units(profiles, temp_unit_ev)

    def score(spec: AdditiveModelSpec, start):
        try:
            out = fit_outcome(data, spec, criterion=criterion, grid=grid, corr=corr, start=start)
        except INADMISSIBLE_ERRORS:
            return math.inf, None
        return out.search.value, out.search.index

    base_spec = make_spec([], basis)
    current, start = score(base_spec, None)
    trace = SelectionTrace(baseline=current, criterion=criterion)
    if not math.isfinite(current):
        trace.stop_reason = "all-inadmissible"
        return trace
    chosen: list[str] = []
    while True:
        if len(trace.stages) >= max_stages or len(chosen) == len(candidates):
            trace.stop_reason = "max-terms"
            break
        values, starts = {}, {}
        for cand in candidates:
            if cand in chosen:
                continue
            spec = make_spec(chosen + [cand], basis)
            warm = None if start is None else tuple(start) + (len(grid) // 2 if grid is not None
                                                              else GRID_SIZE // 2,)
            values[cand], starts[cand] = score(spec, warm)
        trace.stages.append(values)
        best = min(values, key=lambda c: (values[c], candidates.index(c)))
        if not math.isfinite(values[best]):
            trace.chosen.append(None)
            trace.stop_reason = "all-inadmissible"
            break
        if (current - values[best]) / abs(current) < rel_tol:
            trace.chosen.append(None)
            trace.stop_reason = "no-improvement"
            break
        trace.chosen.append(best)
        chosen.append(best)
        current, start = values[best], starts[best]
        if best in DISCOURAGED_COVARIATES:
            msg = f"covariate {best!r} was selected but is not a control variable"
            trace.warnings.append(msg)
            warnings.warn(msg, stacklevel=2)
    return trace


@dataclass(frozen=True)
class VariantComparison:
    """Two fitted variants of one model; the lower criterion value wins."""

    term: str
    labels: tuple[str, str]
    criterion_values: tuple[float, float]
    mae_ev: tuple[float, float]
    recommendation: str
    constants: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        fin = lambda v: v if math.isfinite(v) else None  # noqa: E731
        return {"term": self.term, "labels": list(self.labels),
                "criterion_values": [fin(v) for v in self.criterion_values],
                "mae_ev": list(self.mae_ev), "recommendation": self.recommendation,
                "constants": dict(self.constants), "stderr": dict(self.stderr)}


def _compare(profiles, specs, labels, term, **kwargs):
    outs = [fit_outcome(profiles, s, **kwargs) for s in specs]
    vals = tuple(o.search.value if o.search else o.model.risk.rice for o in outs)
    maes = tuple(o.model.metrics["mae_ev"] for o in outs)
    winner = labels[0] if vals[0] <= vals[1] else labels[1]
    return outs, VariantComparison(term=term, labels=labels, criterion_values=vals, mae_ev=maes,
                                   recommendation=winner)


def test_symmetry(profiles: ProfileSet, spec: AdditiveModelSpec, term: str, **kwargs) -> VariantComparison:
    """Fit ``term`` free and mirror-symmetric, each with its own smoothing search."""
    t = spec.terms[spec.index(term)]
    if t.constraint != "free":
        raise SpecError(f"term {term!r} is {t.constraint}; the symmetry test needs a free term")
    sym = spec.replace_term(term, "symmetric")
    _, cmp = _compare(profiles, (spec, sym), ("free", "symmetric"), term, **kwargs)
    return cmp


test_symmetry.__test__ = False  # not a pytest test despite the name


def reduce_to_constant(profiles: ProfileSet, spec: AdditiveModelSpec, term: str | Sequence[str],
                       **kwargs) -> VariantComparison:
    """Compare spline terms against radius-independent exponents.

    ``term`` may name several terms that are reduced together. The report
    holds the fitted constants and their standard errors from ``G K G``.
    """
    names = [term] if isinstance(term, str) else list(term)
    if not names:
        raise SpecError("no terms to reduce")
    reduced = spec
    for name in names:
        t = spec.terms[spec.index(name)]
        if t.constraint == "constant":
            raise SpecError(f"term {name!r} is already constant")
        if name == INTERCEPT:
            raise SpecError("the intercept carries the profile shape and cannot be made constant")
        reduced = reduced.replace_term(name, "constant")
    outs, cmp = _compare(profiles, (spec, reduced), ("spline", "constant"), ",".join(names), **kwargs)
    model = outs[1].model
    return replace(cmp, constants={n: model.constant(n) for n in names},
                   stderr={n: model.stderr[n] for n in names})


__all__ = [
    "FitOutcome", "LambdaSearch", "SelectionTrace", "VariantComparison",
    "fit_additive", "fit_outcome", "forward_select", "in_units", "optimize_lambdas",
    "reduce_to_constant", "relative_grid", "term_scales", "test_symmetry",
]

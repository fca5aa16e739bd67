"""Log-additive heat diffusivity estimated through a steady-state transport model.

Geometry is a cylinder of minor radius ``a`` with ``r = a * rho`` and
``rho = |psi|``. Energy balance with a fixed volumetric source S gives

    q(r) = (1/r) int_0^r S(r') r' dr',    T(r) = T_edge + int_r^a q / (c n chi) dr',

with ``c = 1e19 * e`` so that densities in 1e19 m^-3, sources in W/m^3 and
temperatures in eV combine into chi in m^2/s. Both integrals use the
trapezoid rule, so constant sources, densities and diffusivities are
reproduced exactly and smooth cases converge at second order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg
from scipy.integrate import cumulative_trapezoid

from .dataset import INTERCEPT, ProfileRecord, ProfileSet
from .design import Term
from .errors import (
    EmptySetError,
    NonConvergenceError,
    ProfileParseError,
    SingularConductivityError,
    SpecError,
    ValidationError,
)
from .model import FittedModel
from .pwls import FitResult
from .risk import RiskReport, risk_report
from .splines import SplineBasis

# 1e19 m^-3 times the elementary charge (J per eV)
DENSITY_ENERGY = 1.602176634

MIN_GRID = 16
MAX_ITER = 100
REL_TOL = 1e-8
MAX_HALVINGS = 30
# weights are 1/sigma^2, so the data term is chi^2-scaled; a small penalty pins
# g near the axis, where the heat flux vanishes and the data carry no information
DEFAULT_LAMBDA = 1e-2


def chi_basis(n_interior: int = 8, order: int = 4) -> SplineBasis:
    """Cubic basis on ``rho`` in [0, 1] with uniform interior knots."""
    return SplineBasis.clamped(n_interior, edge_thinning=1.0, order=order, lo=0.0, hi=1.0)


class ChiModel(FittedModel):
    """``chi(rho, u) = exp(sum_l g_l(rho) h_l(u))``; positive for any coefficients."""

    def __init__(self, basis, terms, coefficients, normalization=None, **kwargs):
        kwargs.setdefault("kind", "diffusivity")
        super().__init__(basis=basis, terms=terms, coefficients=coefficients,
                         normalization=dict(normalization or {}), **kwargs)

    @classmethod
    def uniform(cls, chi0: float, basis: SplineBasis | None = None) -> "ChiModel":
        basis = chi_basis() if basis is None else basis
        return cls(basis, (Term(INTERCEPT),), (np.full(basis.K, math.log(chi0)),))

    @classmethod
    def from_function(cls, log_chi, basis: SplineBasis | None = None, n_fit: int = 400) -> "ChiModel":
        """Least-squares spline representation of ``log_chi(rho)`` (single intercept term)."""
        basis = chi_basis() if basis is None else basis
        rho = np.linspace(0.0, 1.0, n_fit)
        coef, *_ = linalg.lstsq(basis.design(rho), log_chi(rho))
        return cls(basis, (Term(INTERCEPT),), (coef,))

    def chi(self, rho, covariates: Mapping[str, float] | None = None) -> np.ndarray:
        return np.exp(self.log_predict(rho, covariates or {}))


@dataclass(frozen=True, eq=False)
class DischargeConditions:
    """Fixed inputs of one discharge on a radial grid ``rho`` from 0 to 1."""

    id: str
    rho: np.ndarray
    density: np.ndarray
    source: np.ndarray
    edge_temp: float
    minor_radius: float
    covariates: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        n = np.asarray(self.density, dtype=float)
        s = np.asarray(self.source, dtype=float)
        if rho.ndim != 1 or rho.size < 2 or n.shape != rho.shape or s.shape != rho.shape:
            raise ValidationError(self.id, "psi_grid", "grid, density and source must be 1-D of equal length >= 2")
        if np.any(np.diff(rho) <= 0) or abs(rho[0]) > 1e-12 or abs(rho[-1] - 1.0) > 1e-12:
            raise ValidationError(self.id, "psi_grid", "must increase strictly from 0 to 1")
        if not np.all(np.isfinite(n)) or np.any(n < 0):
            raise ValidationError(self.id, "density", "must be finite and nonnegative")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise ValidationError(self.id, "source_w_m3", "must be finite and nonnegative")
        if not self.edge_temp > 0:
            raise ValidationError(self.id, "edge_temp_ev", "must be positive")
        if not self.minor_radius > 0:
            raise ValidationError(self.id, "minor_radius_m", "must be positive")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "density", n)
        object.__setattr__(self, "source", s)
        object.__setattr__(self, "edge_temp", float(self.edge_temp))
        object.__setattr__(self, "minor_radius", float(self.minor_radius))
        object.__setattr__(self, "covariates", {k: float(v) for k, v in dict(self.covariates).items()})

    def to_json(self) -> dict:
        out = {"id": self.id, "psi_grid": self.rho.tolist(), "density": self.density.tolist(),
               "source_w_m3": self.source.tolist(), "edge_temp_ev": self.edge_temp,
               "minor_radius_m": self.minor_radius}
        if self.covariates:
            out["covariates"] = dict(self.covariates)
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "DischargeConditions":
        rid = obj.get("id", "?")
        for key in ("id", "psi_grid", "density", "source_w_m3", "edge_temp_ev", "minor_radius_m"):
            if key not in obj:
                raise ValidationError(rid, key, "missing")
        return cls(id=str(obj["id"]), rho=obj["psi_grid"], density=obj["density"],
                   source=obj["source_w_m3"], edge_temp=obj["edge_temp_ev"],
                   minor_radius=obj["minor_radius_m"], covariates=obj.get("covariates", {}))


def load_conditions(path) -> dict[str, DischargeConditions]:
    path = Path(path)
    out = {}
    with path.open() as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProfileParseError(path, line_no, f"malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise ProfileParseError(path, line_no, "expected a JSON object")
            cond = DischargeConditions.from_json(obj)
            if cond.id in out:
                raise ValidationError(cond.id, "id", "duplicate discharge id")
            out[cond.id] = cond
    if not out:
        raise EmptySetError(f"{path}: no discharge conditions")
    return out


def write_conditions(conditions: Sequence[DischargeConditions], path) -> None:
    Path(path).write_text("".join(json.dumps(c.to_json()) + "\n" for c in conditions))


@dataclass(frozen=True, eq=False)
class TransportSolution:
    rho: np.ndarray
    temp: np.ndarray
    heat_flux: np.ndarray  # W/m^2
    chi: np.ndarray
    edge_weights: np.ndarray  # T = T_edge + edge_weights @ (q / (c n chi))


def solver_grid(cond: DischargeConditions, n_grid: int | None = None) -> np.ndarray:
    if n_grid is None:
        return cond.rho
    if n_grid < MIN_GRID:
        raise SpecError(f"n_grid must be at least {MIN_GRID}, got {n_grid}")
    return np.linspace(0.0, 1.0, n_grid)


def _outward_integral_matrix(r: np.ndarray) -> np.ndarray:
    """Trapezoid weights ``W`` with ``(W @ p)_i = int_{r_i}^{r_end} p dr``."""
    n = r.size
    h = np.diff(r)
    W = np.zeros((n, n))
    for i in range(n - 2, -1, -1):
        W[i] = W[i + 1]
        W[i, i] += 0.5 * h[i]
        W[i, i + 1] += 0.5 * h[i]
    return W


def forward_temperature(chi: ChiModel, cond: DischargeConditions, n_grid: int | None = None) -> TransportSolution:
    """Steady-state temperature for fixed source, density and edge temperature.

    ``n_grid`` resamples the inputs (linearly) onto an equispaced grid; by
    default the conditions' own grid is used.
    """
    rho = solver_grid(cond, n_grid)
    dens = np.interp(rho, cond.rho, cond.density)
    src = np.interp(rho, cond.rho, cond.source)
    a = cond.minor_radius
    r = a * rho
    chi_v = chi.chi(rho, cond.covariates)
    if np.any(dens <= 0) or np.any(chi_v <= 0) or not np.all(np.isfinite(chi_v)):
        raise SingularConductivityError(f"discharge {cond.id!r}: density or diffusivity vanishes on the grid")
    area = cumulative_trapezoid(src * r, r, initial=0.0)
    q = np.zeros_like(r)
    q[1:] = area[1:] / r[1:]
    W = _outward_integral_matrix(r)
    p = q / (DENSITY_ENERGY * dens * chi_v)
    temp = cond.edge_temp + W @ p
    return TransportSolution(rho=rho, temp=temp, heat_flux=q, chi=chi_v, edge_weights=W)


def _interp_matrix(grid: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Linear interpolation as a matrix: ``f(x) = L @ f(grid)``."""
    x = np.clip(x, grid[0], grid[-1])
    j = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
    t = (x - grid[j]) / (grid[j + 1] - grid[j])
    L = np.zeros((x.size, grid.size))
    L[np.arange(x.size), j] = 1.0 - t
    L[np.arange(x.size), j + 1] = t
    return L


def chi_features(chi: ChiModel, rho: np.ndarray, covariates: Mapping[str, float]) -> np.ndarray:
    """d log(chi) / d coefficients at each grid point: ``h_l(u) B(rho)`` per term."""
    B = chi.basis.design(rho)
    h = chi.covariate_vector(covariates)
    return np.hstack([hl * B for hl in h])


def predict_at(chi: ChiModel, cond: DischargeConditions, rho_obs: np.ndarray,
               n_grid: int | None = None, with_jacobian: bool = False):
    """Model temperature at ``rho_obs`` and optionally its Jacobian in the stacked coefficients.

    Only the second integral depends on chi, and ``dp/dtheta = -p dlog(chi)/dtheta``,
    so ``J = -L W diag(p) Phi`` with ``L`` the interpolation onto ``rho_obs``.
    """
    sol = forward_temperature(chi, cond, n_grid)
    L = _interp_matrix(sol.rho, np.asarray(rho_obs, dtype=float))
    T = L @ sol.temp
    if not with_jacobian:
        return T
    dens = np.interp(sol.rho, cond.rho, cond.density)
    p = sol.heat_flux / (DENSITY_ENERGY * dens * sol.chi)
    Phi = chi_features(chi, sol.rho, cond.covariates)
    J = -(L @ sol.edge_weights) @ (p[:, None] * Phi)
    return T, J


def jacobian(chi: ChiModel, cond: DischargeConditions, rho_obs, n_grid: int | None = None) -> np.ndarray:
    return predict_at(chi, cond, rho_obs, n_grid, with_jacobian=True)[1]


def with_coefficients(chi: ChiModel, theta: np.ndarray) -> ChiModel:
    K = chi.basis.K
    coefs = tuple(theta[i * K:(i + 1) * K] for i in range(len(chi.terms)))
    return ChiModel(chi.basis, chi.terms, coefs, chi.normalization, temp_unit_ev=chi.temp_unit_ev)


def initial_model(profiles: ProfileSet, conditions: Mapping[str, DischargeConditions],
                  terms: Sequence[Term], basis: SplineBasis, normalization: Mapping[str, float],
                  n_grid: int | None = None) -> ChiModel:
    """Constant diffusivity matching the data in the mean, other terms zero.

    ``T - T_edge`` scales as ``1/chi`` for constant chi, so the best constant
    is a weighted ratio of observed and unit-diffusivity temperature rises.
    """
    unit = ChiModel(basis, terms, tuple(np.zeros(basis.K) for _ in terms), normalization)
    num = den = 0.0
    for rec in profiles:
        cond = conditions[rec.id]
        m = rec.measured
        rise = predict_at(unit, cond, np.abs(rec.psi[m]), n_grid) - cond.edge_temp
        obs = rec.temp[m] - cond.edge_temp
        w = 1.0 / rec.sigma[m] ** 2
        num += float(np.sum(w * rise * rise))
        den += float(np.sum(w * rise * obs))
    chi0 = num / den if den > 0 and num > 0 else 1.0
    coefs = [np.zeros(basis.K) for _ in terms]
    coefs[0] = np.full(basis.K, math.log(chi0))
    return ChiModel(basis, terms, tuple(coefs), normalization)


@dataclass(eq=False)
class ChiFit:
    model: ChiModel
    risk: RiskReport
    fit: FitResult
    objective: float
    iterations: int
    converged: bool
    history: list[float]


def _stack(profiles, conditions, chi, n_grid, jac=True):
    Ts, Js = [], []
    for rec in profiles:
        m = rec.measured
        out = predict_at(chi, conditions[rec.id], np.abs(rec.psi[m]), n_grid, with_jacobian=jac)
        if jac:
            Ts.append(out[0])
            Js.append(out[1])
        else:
            Ts.append(out)
    return np.concatenate(Ts), (np.vstack(Js) if jac else None)


def fit_chi(profiles: ProfileSet, conditions: Mapping[str, DischargeConditions],
            terms: Sequence[Term | str] = (INTERCEPT,), lambdas=DEFAULT_LAMBDA, basis: SplineBasis | None = None,
            initial: ChiModel | None = None, n_grid: int | None = None,
            max_iter: int = MAX_ITER, tol: float = REL_TOL) -> ChiFit:
    """Penalized nonlinear least squares for the diffusivity coefficients.

    Minimizes ``sum ((T - T_hat) / sigma)^2 + sum_l lambda_l g_l' S g_l`` over
    measured points by Gauss-Newton with step halving. Stops when the relative
    decrease falls below ``tol`` or after ``max_iter`` iterations. Risk
    statistics come from the problem linearized at the solution.
    """
    if len(profiles) == 0:
        raise EmptySetError("no profiles to fit")
    missing = [r.id for r in profiles if r.id not in conditions]
    if missing:
        raise ValidationError(missing[0], "id", "no discharge conditions for this profile")
    terms = tuple(Term(t) if isinstance(t, str) else t for t in terms)
    if not terms or terms[0].name != INTERCEPT:
        raise SpecError("the first diffusivity term must be the intercept")
    if any(t.constraint != "free" for t in terms):
        raise SpecError("diffusivity terms are free functions of rho")
    basis = (initial.basis if initial is not None else chi_basis()) if basis is None else basis
    norm = dict(profiles.normalization)
    chi = initial if initial is not None else initial_model(profiles, conditions, terms, basis, norm, n_grid)
    if chi.names != [t.name for t in terms]:
        raise SpecError("initial model terms do not match the requested terms")

    K, nt = basis.K, len(terms)
    lam = np.broadcast_to(np.asarray(lambdas, dtype=float), (nt,))
    if np.any(lam < 0):
        raise SpecError("smoothing parameters must be nonnegative")
    Pen = linalg.block_diag(*[l_ * basis.penalty for l_ in lam])
    T_obs = np.concatenate([r.temp[r.measured] for r in profiles])
    W = 1.0 / np.concatenate([r.sigma[r.measured] for r in profiles]) ** 2

    def objective(theta, That):
        r = T_obs - That
        return float(np.sum(W * r * r) + theta @ Pen @ theta)

    theta = np.concatenate(chi.coefficients)
    That, J = _stack(profiles, conditions, chi, n_grid)
    f = objective(theta, That)
    history = [f]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        JW = J * W[:, None]
        A = JW.T @ J + Pen
        g = JW.T @ (T_obs - That) - Pen @ theta
        try:
            step = linalg.solve(A, g, assume_a="pos")
        except linalg.LinAlgError:
            step = linalg.lstsq(A, g)[0]
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = theta + t * step
            trial = with_coefficients(chi, cand)
            try:
                # overflowing trials are rejected below, so keep them quiet
                with np.errstate(over="ignore", under="ignore", invalid="ignore"):
                    T_new = _stack(profiles, conditions, trial, n_grid, jac=False)[0]
                    f_new = objective(cand, T_new)
            except SingularConductivityError:
                f_new = math.inf
            if not np.isfinite(f_new):
                f_new = math.inf
            if f_new <= f:
                break
            t *= 0.5
        else:
            raise NonConvergenceError(f"diffusivity fit: no decrease after {MAX_HALVINGS} step halvings",
                                      payload=chi)
        decrease = f - f_new
        theta, chi, f = cand, trial, f_new
        history.append(f)
        That, J = _stack(profiles, conditions, chi, n_grid)
        if decrease <= tol * max(abs(history[-2]), np.finfo(float).tiny):
            converged = True
            break

    JW = J * W[:, None]
    C = JW.T @ J
    A = C + Pen
    G = linalg.pinvh(A)
    r = T_obs - That
    fit = FitResult(alpha=theta, lambdas=np.asarray(lam, dtype=float), G=G,
                    trace_CG=float(np.sum(C * G)), trace_KG=float(np.sum(C * G)),
                    rss_weighted=float(np.sum(W * r * r)), fitted=That, n_measured=T_obs.size,
                    scale="linear")
    report = risk_report(fit, strict=False)
    model = ChiModel(basis, terms, chi.coefficients, norm, lambdas=fit.lambdas,
                     traces={"trace_CG": fit.trace_CG, "trace_KG": fit.trace_KG}, risk=report,
                     metrics={"mae_ev": float(np.mean(np.abs(r))), "objective": f,
                              "iterations": it})
    return ChiFit(model=model, risk=report, fit=fit, objective=f, iterations=it,
                  converged=converged, history=history)


def simulate_chi_profiles(chi: ChiModel, conditions: Sequence[DischargeConditions],
                          rho_obs: np.ndarray | None = None, noise_rel: float = 0.0,
                          seed: int = 0, n_grid: int | None = None) -> ProfileSet:
    """Profiles generated by the transport model (measured at ``+rho_obs``)."""
    rng = np.random.default_rng(seed)
    rho_obs = np.linspace(0.0, 0.95, 20) if rho_obs is None else np.asarray(rho_obs, dtype=float)
    recs = []
    for cond in conditions:
        T = predict_at(chi, cond, rho_obs, n_grid)
        if noise_rel > 0:
            T = T * np.exp(rng.normal(0.0, noise_rel, T.size))
        sigma = max(noise_rel, 0.01) * T
        recs.append(ProfileRecord(id=cond.id, psi=rho_obs, temp=T, sigma=sigma,
                                  covariates=dict(cond.covariates)))
    return ProfileSet(recs)

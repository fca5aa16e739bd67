"""Penalized weighted least squares and the hat-matrix algebra.

The estimate is ``alpha = G X' D y`` with ``G = [X' D X + sum_l lambda_l S_l]^-1``.
Everything the risk estimators need (``G``, traces, weighted residual sum of
squares over measured rows) is returned on :class:`FitResult`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .design import DesignSystem
from .errors import NonConvergenceError, RankDeficiencyError

_PIVOT_RTOL = 1e-14
_JITTER = 1e-10


@dataclass(frozen=True, eq=False)
class FitResult:
    alpha: np.ndarray
    lambdas: np.ndarray
    G: np.ndarray
    trace_CG: float
    trace_KG: float
    rss_weighted: float
    fitted: np.ndarray
    n_measured: int
    jittered: bool = False
    scale: str = "log"

    @property
    def dof_effective(self) -> float:
        return self.n_measured - self.trace_KG


def _factor(A: np.ndarray, scale: float):
    """Cholesky factor, or None when a pivot falls below ``_PIVOT_RTOL * scale``."""
    try:
        cf = linalg.cho_factor(A, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None
    piv = np.diag(cf[0]) ** 2
    if piv.min() <= _PIVOT_RTOL * scale:
        return None
    return cf


def _offending_term(A: np.ndarray, system: DesignSystem, scale: float) -> str | None:
    for name, blk in zip(system.term_names, system.blocks):
        if _factor(A[blk, blk], scale) is None:
            return name
    return None


def factorize(A: np.ndarray, system: DesignSystem, C: np.ndarray):
    """Cholesky factor of ``A = C + penalty`` with a single diagonal-jitter retry.

    A column is dead when it has no data weight and no penalty; the data
    scale sets the threshold so that large smoothing parameters cannot mask
    (or fake) an empty design block.
    """
    data = np.diag(C)
    scale = max(np.max(data), np.finfo(float).tiny)
    dead = np.flatnonzero((data <= _PIVOT_RTOL * scale) & (np.diag(A) <= _PIVOT_RTOL * scale))
    if dead.size:
        term = next(n for n, b in zip(system.term_names, system.blocks)
                    if b.start <= dead[0] < b.stop)
        raise RankDeficiencyError(
            f"term {term!r} has an identically zero design block (covariate constant at its reference?)",
            term=term)
    cf = _factor(A, scale)
    if cf is not None:
        return cf, False
    P = A.shape[0]
    jitter = _JITTER * float(np.trace(C)) / P
    cf = _factor(A + jitter * np.eye(P), scale)
    if cf is not None:
        return cf, True
    term = _offending_term(A, system, scale)
    where = f"term {term!r}" if term else "collinearity across terms"
    raise RankDeficiencyError(f"penalized normal equations are singular ({where})", term=term)


def solve(system: DesignSystem, lambdas, K: np.ndarray | None = None) -> FitResult:
    """Minimize ``||y - X a||_D^2 + sum_l lambda_l a' S_l a``.

    ``K`` defaults to ``X' D X`` restricted to measured rows (independent
    errors); pass the output of :func:`logadditive.risk.autocorr_K` for
    correlated measurements.
    """
    lam = system.check_lambdas(lambdas)
    C = system.C
    # work in penalty eigen-coordinates so null-space directions carry no penalty at all
    R = system.rotation
    A = system.C_rotated + np.diag(system.penalty_diagonal(lam))
    cf, jittered = factorize(A, system, system.C_rotated)
    alpha = R @ linalg.cho_solve(cf, R.T @ system.Xty, check_finite=False)
    G = R @ linalg.cho_solve(cf, R.T, check_finite=False)
    G = 0.5 * (G + G.T)
    if K is None:
        K = system.C_measured
    fitted = system.X @ alpha
    m = system.measured
    r = system.y[m] - fitted[m]
    rss = float(np.sum(system.w[m] * r * r))
    return FitResult(alpha=alpha, lambdas=lam, G=G, trace_CG=float(np.sum(C * G)),
                     trace_KG=float(np.sum(K * G)), rss_weighted=rss, fitted=fitted,
                     n_measured=system.n_measured, jittered=jittered)


def objective(system: DesignSystem, alpha: np.ndarray, lambdas) -> float:
    """Penalized objective over all rows (the quantity ``solve`` minimizes)."""
    r = system.y - system.X @ alpha
    return float(np.sum(system.w * r * r) + alpha @ system.penalty(lambdas) @ alpha)


def coefficient_covariance(fit: FitResult, system: DesignSystem, K: np.ndarray | None = None) -> np.ndarray:
    """``G K G``; with ``K`` defaulting to ``X' D X`` this is the covariance under independent errors."""
    if K is None:
        K = system.C
    return fit.G @ K @ fit.G


def solve_linear_scale(system: DesignSystem, lambdas, start: np.ndarray | None = None,
                       max_iter: int = 50, tol: float = 1e-10) -> FitResult:
    """Fit ``T ~ exp(X a)`` by Gauss-Newton with residuals on the temperature scale.

    Residuals are ``(T - T_hat) / sigma`` in the original units, i.e. the
    objective written literally on T. ``G`` and the traces are those of the
    linearized problem at convergence.
    """
    lam = system.check_lambdas(lambdas)
    Pen = system.penalty(lam)
    W = 1.0 / system.sigma**2
    T = system.temp
    alpha = solve(system, lam).alpha if start is None else np.asarray(start, dtype=float)

    def obj(a):
        r = T - np.exp(system.X @ a)
        return float(np.sum(W * r * r) + a @ Pen @ a)

    f = obj(alpha)
    jittered = False
    for _ in range(max_iter):
        mu = np.exp(system.X @ alpha)
        J = system.X * mu[:, None]
        JW = J * W[:, None]
        JtWJ = JW.T @ J
        cf, jittered = factorize(JtWJ + Pen, system, JtWJ)
        step = linalg.cho_solve(cf, JW.T @ (T - mu) - Pen @ alpha)
        t = 1.0
        for _ in range(30):
            f_new = obj(alpha + t * step)
            if f_new <= f:
                break
            t *= 0.5
        else:
            raise NonConvergenceError("linear-scale fit: line search failed", payload=alpha)
        alpha = alpha + t * step
        done = f - f_new <= tol * max(f, 1e-300)
        f = f_new
        if done:
            break
    mu = np.exp(system.X @ alpha)
    J = system.X * mu[:, None]
    C = (J * W[:, None]).T @ J
    cf, jittered = factorize(C + Pen, system, C)
    G = linalg.cho_solve(cf, np.eye(C.shape[0]))
    G = 0.5 * (G + G.T)
    m = system.measured
    Jm = J[m]
    Km = (Jm * W[m][:, None]).T @ Jm
    r = T[m] - mu[m]
    return FitResult(alpha=alpha, lambdas=lam, G=G, trace_CG=float(np.sum(C * G)),
                     trace_KG=float(np.sum(Km * G)), rss_weighted=float(np.sum(W[m] * r * r)),
                     fitted=system.X @ alpha, n_measured=system.n_measured,
                     jittered=jittered, scale="linear")

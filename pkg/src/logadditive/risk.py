"""Risk estimators for penalized fits, with an autocorrelation correction.

All statistics share the weighted residual sum of squares over measured
rows, ``rss = ||y - X alpha||_D^2``, and the complexity ``tr[K G]`` where
``K = X' D Sigma D X``. With independent errors (``Sigma = D^-1``) K equals
``X' D X`` and ``tr[K G]`` is the usual effective parameter count.

=========  ====================================
ease_cw    rss - (N - 2 tr[K G])
sigma2_cw  rss / (N - tr[K G])
gcv        N rss / (N - tr[K G])^2
rice       rss / (N - 2 tr[K G])
chi2       rss / (N - tr[K G])
=========  ====================================
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .design import DesignSystem
from .errors import OverParameterizedError, SaturationError, SpecError
from .pwls import FitResult

DEFAULT_LENGTH = 0.05


@dataclass(frozen=True)
class CorrelationModel:
    """Within-profile error correlation ``rho ** (|psi_j - psi_k| / length)``.

    Profiles are mutually independent; ``rho = 0`` means independent points.
    """

    kind: str = "independent"
    rho: float = 0.0
    length: float = DEFAULT_LENGTH

    def __post_init__(self):
        if self.kind not in ("independent", "radial-ar1"):
            raise SpecError(f"unknown correlation model {self.kind!r}")
        if not 0.0 <= self.rho < 1.0:
            raise SpecError(f"rho must lie in [0, 1), got {self.rho}")
        if self.length <= 0:
            raise SpecError("correlation length must be positive")

    @classmethod
    def from_rho(cls, rho: float, length: float = DEFAULT_LENGTH) -> "CorrelationModel":
        return cls("radial-ar1" if rho > 0 else "independent", rho, length)

    @property
    def is_independent(self) -> bool:
        return self.kind == "independent" or self.rho == 0.0


def ar1_correlation(psi: np.ndarray, rho: float, length: float = DEFAULT_LENGTH) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    if rho == 0.0:
        return np.eye(psi.size)
    dist = np.abs(psi[:, None] - psi[None, :])
    return rho ** (dist / length)


def sandwich_K(X: np.ndarray, w: np.ndarray, Sigma: np.ndarray) -> np.ndarray:
    """``X' D Sigma D X`` for diagonal ``D = diag(w)``."""
    Xd = X * np.asarray(w)[:, None]
    return Xd.T @ Sigma @ Xd


def autocorr_K(system: DesignSystem, corr: CorrelationModel | None = None) -> np.ndarray:
    """K over measured rows with a block-diagonal (per-profile) error covariance.

    ``Sigma_jk = s_j s_k R_jk`` with ``s = 1/sqrt(w)``, so that
    ``D Sigma D = D^1/2 R D^1/2``.
    """
    if corr is None or corr.is_independent:
        return system.C_measured
    if system.psi is None:
        raise SpecError("correlated errors need radial positions on the design")
    m = system.measured
    X, w, psi, prof = system.X[m], system.w[m], system.psi[m], system.profile[m]
    P = X.shape[1]
    K = np.zeros((P, P))
    for p in np.unique(prof):
        idx = prof == p
        Xs = X[idx] * np.sqrt(w[idx])[:, None]
        K += Xs.T @ ar1_correlation(psi[idx], corr.rho, corr.length) @ Xs
    return K


def _trace(fit: FitResult, K: np.ndarray | None) -> float:
    return fit.trace_KG if K is None else float(np.sum(K * fit.G))


def _n(fit: FitResult, N: int | None) -> int:
    N = fit.n_measured if N is None else N
    if N <= 0:
        raise SpecError("N must be positive")
    return N


def ease_estimate(fit: FitResult, K: np.ndarray | None = None, N: int | None = None) -> float:
    """Craven-Wahba estimate of the expected average square error (may be negative)."""
    return fit.rss_weighted - (_n(fit, N) - 2.0 * _trace(fit, K))


# denominators below this fraction of N are roundoff, not degrees of freedom
DOF_TOL = 1e-9


def _dof(fit, K, N) -> tuple[int, float]:
    N = _n(fit, N)
    dof = N - _trace(fit, K)
    if dof <= DOF_TOL * N:
        raise SaturationError(f"effective degrees of freedom exhausted (N - tr[KG] = {dof:.3g})")
    return N, dof


def sigma2_cw(fit: FitResult, K: np.ndarray | None = None, N: int | None = None) -> float:
    _, dof = _dof(fit, K, N)
    return fit.rss_weighted / dof


def gcv(fit: FitResult, K: np.ndarray | None = None, N: int | None = None) -> float:
    N, dof = _dof(fit, K, N)
    return N * fit.rss_weighted / dof**2


def rice(fit: FitResult, K: np.ndarray | None = None, N: int | None = None) -> float:
    N = _n(fit, N)
    denom = N - 2.0 * _trace(fit, K)
    if denom <= DOF_TOL * N:
        raise OverParameterizedError(
            f"Rice criterion undefined: N - 2 tr[KG] = {denom:.3g} <= 0 (model too rich for the data)")
    return fit.rss_weighted / denom


def chi2_stat(fit: FitResult, K: np.ndarray | None = None, N: int | None = None) -> float:
    """Mean square error per effective degree of freedom."""
    _, dof = _dof(fit, K, N)
    return fit.rss_weighted / dof


CRITERIA = {"rice": rice, "gcv": gcv}


def criterion_value(fit: FitResult, criterion: str = "rice", K=None, N=None) -> float:
    """Criterion value, or ``inf`` for inadmissible fits."""
    try:
        fn = CRITERIA[criterion]
    except KeyError:
        raise SpecError(f"unknown criterion {criterion!r}") from None
    try:
        return fn(fit, K, N)
    except (OverParameterizedError, SaturationError):
        return math.inf


@dataclass(frozen=True)
class RiskReport:
    ease_cw: float
    gcv: float
    rice: float
    chi2: float
    sigma2_cw: float
    dof_effective: float
    n_measured: int
    trace_KG: float

    def to_json(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, obj) -> "RiskReport":
        return cls(**{k: (math.inf if v is None else v) for k, v in obj.items()})

    def rows(self) -> list[tuple[str, str]]:
        """Fixed-order (label, value) pairs for printing."""
        fmt = lambda v: "inadmissible" if not math.isfinite(v) else f"{v:.6g}"  # noqa: E731
        return [
            ("N (measured)", str(self.n_measured)),
            ("tr[KG]", fmt(self.trace_KG)),
            ("effective dof", fmt(self.dof_effective)),
            ("EASE (Craven-Wahba)", fmt(self.ease_cw)),
            ("sigma^2 (Craven-Wahba)", fmt(self.sigma2_cw)),
            ("GCV", fmt(self.gcv)),
            ("Rice C_R", fmt(self.rice)),
            ("chi^2 per dof", fmt(self.chi2)),
        ]


def risk_report(fit: FitResult, K: np.ndarray | None = None, N: int | None = None,
                strict: bool = True) -> RiskReport:
    """All estimators for one fit.

    With ``strict`` an over-parameterized or saturated fit raises; otherwise
    the undefined statistics are reported as ``inf``.
    """
    N = _n(fit, N)
    tr = _trace(fit, K)

    def safe(fn):
        try:
            return fn(fit, K, N)
        except (OverParameterizedError, SaturationError):
            if strict:
                raise
            return math.inf

    return RiskReport(ease_cw=ease_estimate(fit, K, N), gcv=safe(gcv), rice=safe(rice),
                      chi2=safe(chi2_stat), sigma2_cw=safe(sigma2_cw),
                      dof_effective=N - tr, n_measured=N, trace_KG=tr)

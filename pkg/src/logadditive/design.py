"""Assembly of the additive log-linear model over all profiles at once.

Row ``(i, j)`` of the design is profile ``i`` at radius ``psi_j``; the columns
for term ``l`` are ``h_l(u_i) * B(psi_j) @ F_l`` where ``F_l`` folds the K
spline coefficients according to the term constraint.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import INTERCEPT, ProfileSet, covariate_value
from .errors import SpecError
from .splines import SplineBasis

CONSTRAINTS = ("free", "symmetric", "constant")


@dataclass(frozen=True)
class Term:
    name: str
    constraint: str = "free"

    def __post_init__(self):
        if self.constraint not in CONSTRAINTS:
            raise SpecError(f"term {self.name!r}: unknown constraint {self.constraint!r}")

    @property
    def label(self) -> str:
        return "f_0" if self.name == INTERCEPT else f"f_{self.name}"


@dataclass(frozen=True, eq=False)
class AdditiveModelSpec:
    terms: tuple[Term, ...]
    basis: SplineBasis

    def __post_init__(self):
        terms = tuple(t if isinstance(t, Term) else Term(*t) for t in self.terms)
        if not terms or terms[0].name != INTERCEPT:
            raise SpecError("the first term must be the intercept")
        names = [t.name for t in terms]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise SpecError(f"duplicate term {dup!r}")
        object.__setattr__(self, "terms", terms)
        for t in terms:
            self.basis.fold(t.constraint)  # validates symmetric knots

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    @property
    def covariates(self) -> list[str]:
        return [t.name for t in self.terms[1:]]

    def n_columns(self, term: Term) -> int:
        return self.basis.fold(term.constraint).shape[1]

    @property
    def n_params(self) -> int:
        return sum(self.n_columns(t) for t in self.terms)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SpecError(f"no term {name!r} in model") from None

    def replace_term(self, name: str, constraint: str) -> "AdditiveModelSpec":
        terms = [Term(t.name, constraint) if t.name == name else t for t in self.terms]
        return AdditiveModelSpec(tuple(terms), self.basis)

    def with_term(self, name: str, constraint: str = "free") -> "AdditiveModelSpec":
        return AdditiveModelSpec(self.terms + (Term(name, constraint),), self.basis)

    def to_json(self) -> dict:
        return {"terms": [[t.name, t.constraint] for t in self.terms]}

    @classmethod
    def from_json(cls, obj, basis: SplineBasis) -> "AdditiveModelSpec":
        raw = obj["terms"] if isinstance(obj, Mapping) else obj
        terms = []
        for item in raw:
            if isinstance(item, str):
                terms.append(Term(item))
            elif isinstance(item, Mapping):
                terms.append(Term(item["name"], item.get("constraint", "free")))
            else:
                terms.append(Term(*item))
        return cls(tuple(terms), basis)


def make_spec(covariates: Iterable[str], basis: SplineBasis, constraint: str = "free",
              intercept: str = "free") -> AdditiveModelSpec:
    terms = [Term(INTERCEPT, intercept)] + [Term(c, constraint) for c in covariates]
    return AdditiveModelSpec(tuple(terms), basis)


def profile_consistency_spec(covariates: Sequence[str], basis: SplineBasis) -> AdditiveModelSpec:
    """Shape function plus a radius-independent log-linear shift ``H(u)``."""
    return make_spec(covariates, basis, constraint="constant")


def eq8_spec(basis: SplineBasis) -> AdditiveModelSpec:
    """Five free radial functions: intercept, Ip, Bt, nbar and qgeo."""
    return make_spec(["Ip", "Bt", "nbar", "qgeo"], basis)


def eq8q_spec(basis: SplineBasis) -> AdditiveModelSpec:
    """Free shape and q95 functions, constant Ip, Bt and nbar exponents."""
    terms = (Term(INTERCEPT), Term("q95"), Term("Ip", "constant"),
             Term("Bt", "constant"), Term("nbar", "constant"))
    return AdditiveModelSpec(terms, basis)


# relative size below which a penalty eigenvalue is treated as exactly zero
NULL_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class DesignSystem:
    """Stacked regression problem ``y = X alpha + eps`` with diagonal weights ``w``.

    ``w`` holds the diagonal of D (inverse variances on the fitted scale).
    ``measured`` masks the rows that count toward N in the risk estimators.
    ``blocks[l]`` is the column range of term ``l`` and ``penalties[l]`` its
    (folded) roughness matrix. Profile metadata is optional so that plain
    array problems can be solved with the same machinery.
    """

    X: np.ndarray
    y: np.ndarray
    w: np.ndarray
    measured: np.ndarray
    blocks: tuple[slice, ...]
    penalties: tuple[np.ndarray, ...]
    term_names: tuple[str, ...]
    profile: np.ndarray
    psi: np.ndarray | None = None
    temp: np.ndarray | None = None
    sigma: np.ndarray | None = None
    spec: AdditiveModelSpec | None = None
    normalization: Mapping[str, float] | None = None
    folds: tuple[np.ndarray, ...] | None = None
    h: np.ndarray | None = None  # (n_profiles, n_terms) covariate values
    record_ids: tuple[str, ...] = ()

    @classmethod
    def from_arrays(cls, X, y, w=None, penalties=None, blocks=None, names=None,
                    measured=None, profile=None, psi=None) -> "DesignSystem":
        """Generic system; a single unpenalized block unless told otherwise."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        n, P = X.shape
        w = np.ones(n) if w is None else np.asarray(w, dtype=float)
        if blocks is None:
            blocks = (slice(0, P),)
        blocks = tuple(blocks)
        if penalties is None:
            penalties = tuple(np.zeros((b.stop - b.start,) * 2) for b in blocks)
        names = tuple(names) if names is not None else tuple(f"block{i}" for i in range(len(blocks)))
        measured = np.ones(n, dtype=bool) if measured is None else np.asarray(measured, dtype=bool)
        profile = np.zeros(n, dtype=int) if profile is None else np.asarray(profile, dtype=int)
        return cls(X=X, y=y, w=w, measured=measured, blocks=blocks,
                   penalties=tuple(np.asarray(S, dtype=float) for S in penalties),
                   term_names=names, profile=profile,
                   psi=None if psi is None else np.asarray(psi, dtype=float))

    @property
    def n_rows(self) -> int:
        return self.y.size

    @property
    def n_measured(self) -> int:
        return int(np.count_nonzero(self.measured))

    @property
    def n_params(self) -> int:
        return self.X.shape[1]

    @property
    def sigma_log(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.w)

    @cached_property
    def C(self) -> np.ndarray:
        """X' D X over all rows."""
        Xw = self.X * self.w[:, None]
        return Xw.T @ self.X

    @cached_property
    def Xty(self) -> np.ndarray:
        return self.X.T @ (self.w * self.y)

    @cached_property
    def C_measured(self) -> np.ndarray:
        m = self.measured
        Xm = self.X[m]
        return (Xm * self.w[m][:, None]).T @ Xm

    @cached_property
    def penalty_eigen(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        """Per-block eigenvectors and eigenvalues of the penalties.

        Eigenvalues below ``NULL_RTOL`` times the block maximum are set to
        exactly zero. Assembling ``S`` in floating point leaves its null space
        (quadratics) with eigenvalues of order ``eps * |S|``; at very large
        smoothing parameters those would penalize the null space noticeably.
        """
        out = []
        for S in self.penalties:
            if not np.any(S):
                out.append((np.eye(S.shape[0]), np.zeros(S.shape[0])))
                continue
            ev, U = np.linalg.eigh(0.5 * (S + S.T))
            top = max(ev.max(), 0.0)
            ev = np.where(ev > NULL_RTOL * top, ev, 0.0)
            out.append((U, ev))
        return tuple(out)

    @cached_property
    def rotation(self) -> np.ndarray:
        """Block-diagonal orthogonal change to penalty eigen-coordinates."""
        R = np.zeros((self.n_params, self.n_params))
        for blk, (U, _) in zip(self.blocks, self.penalty_eigen):
            R[blk, blk] = U
        return R

    @cached_property
    def C_rotated(self) -> np.ndarray:
        R = self.rotation
        return R.T @ self.C @ R

    def penalty_diagonal(self, lambdas) -> np.ndarray:
        """``sum_l lambda_l S_l`` in eigen-coordinates (a diagonal)."""
        lambdas = self.check_lambdas(lambdas)
        return np.concatenate([lam * ev for lam, (_, ev) in zip(lambdas, self.penalty_eigen)])

    def penalty_trace(self, i: int) -> float:
        return float(np.sum(self.penalty_eigen[i][1]))

    @property
    def penalized_terms(self) -> list[int]:
        return [i for i in range(len(self.blocks)) if self.penalty_trace(i) > 0]

    def penalty(self, lambdas) -> np.ndarray:
        """Block-diagonal ``sum_l lambda_l S_l`` embedded in P x P."""
        lambdas = self.check_lambdas(lambdas)
        P = self.n_params
        out = np.zeros((P, P))
        for lam, blk, S in zip(lambdas, self.blocks, self.penalties):
            if lam:
                out[blk, blk] += lam * S
        return out

    def check_lambdas(self, lambdas) -> np.ndarray:
        try:
            lam = np.broadcast_to(np.asarray(lambdas, dtype=float), (len(self.blocks),)).copy()
        except ValueError:
            raise SpecError(f"expected {len(self.blocks)} smoothing parameters") from None
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise SpecError("smoothing parameters must be finite and nonnegative")
        return lam

    def term_coefficients(self, beta: np.ndarray) -> list[np.ndarray]:
        """Unfold the stacked parameter vector into K spline coefficients per term."""
        return [F @ beta[blk] for blk, F in zip(self.blocks, self.folds)]


def build_design(profiles: ProfileSet, spec: AdditiveModelSpec) -> DesignSystem:
    basis = spec.basis
    folds = tuple(basis.fold(t.constraint) for t in spec.terms)
    widths = [F.shape[1] for F in folds]
    starts = np.concatenate([[0], np.cumsum(widths)])
    blocks = tuple(slice(int(a), int(b)) for a, b in zip(starts[:-1], starts[1:]))
    norm = profiles.normalization

    rows_X, ys, ws, meas, prof, psis, temps, sigmas, hs = [], [], [], [], [], [], [], [], []
    for i, rec in enumerate(profiles):
        h = np.array([covariate_value(rec, t.name, norm) for t in spec.terms])
        B = basis.design(rec.psi)
        rows_X.append(np.hstack([h[l] * (B @ F) for l, F in enumerate(folds)]))
        ys.append(np.log(rec.temp))
        ws.append((rec.temp / rec.sigma) ** 2)
        meas.append(rec.measured)
        prof.append(np.full(len(rec), i))
        psis.append(rec.psi)
        temps.append(rec.temp)
        sigmas.append(rec.sigma)
        hs.append(h)
    if not rows_X:
        raise SpecError("cannot build a design from an empty profile set")
    S = basis.penalty
    return DesignSystem(
        X=np.vstack(rows_X), y=np.concatenate(ys), w=np.concatenate(ws),
        measured=np.concatenate(meas), blocks=blocks,
        penalties=tuple(F.T @ S @ F for F in folds),
        term_names=tuple(spec.names), profile=np.concatenate(prof),
        psi=np.concatenate(psis), temp=np.concatenate(temps), sigma=np.concatenate(sigmas),
        spec=spec, normalization=dict(norm), folds=folds, h=np.array(hs),
        record_ids=tuple(r.id for r in profiles),
    )

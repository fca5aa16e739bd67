"""Fitted additive models: evaluation, prediction, tabulation and JSON storage."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import ProfileSet, transform_covariate
from .design import AdditiveModelSpec, DesignSystem, Term
from .errors import DataError, SpecError
from .pwls import FitResult
from .risk import RiskReport
from .splines import SplineBasis

FORMAT = "logadditive-model/1"


@dataclass(eq=False)
class FittedModel:
    """Radial functions ``f_l(psi) = B(psi) @ coefficients[l]`` plus everything
    needed to evaluate them on new covariates.

    ``kind`` is ``"temperature"`` for log-temperature models and
    ``"diffusivity"`` for log-diffusivity models. Predictions are in the
    units of the training data; ``temp_unit_ev`` converts them to eV.
    """

    basis: SplineBasis
    terms: tuple[Term, ...]
    coefficients: tuple[np.ndarray, ...]
    normalization: dict[str, float]
    lambdas: np.ndarray | None = None
    traces: dict[str, float] = field(default_factory=dict)
    risk: RiskReport | None = None
    metrics: dict[str, float] = field(default_factory=dict)
    stderr: dict[str, float] = field(default_factory=dict)
    temp_unit_ev: float = 1.0
    scale: str = "log"
    kind: str = "temperature"

    def __post_init__(self):
        self.terms = tuple(t if isinstance(t, Term) else Term(*t) for t in self.terms)
        self.coefficients = tuple(np.asarray(c, dtype=float) for c in self.coefficients)
        if len(self.coefficients) != len(self.terms):
            raise SpecError("one coefficient vector per term is required")
        for t, c in zip(self.terms, self.coefficients):
            if c.shape != (self.basis.K,):
                raise SpecError(f"term {t.name!r}: expected {self.basis.K} coefficients, got {c.shape}")

    @classmethod
    def from_fit(cls, system: DesignSystem, fit: FitResult, **kwargs) -> "FittedModel":
        spec = system.spec
        return cls(basis=spec.basis, terms=spec.terms,
                   coefficients=tuple(system.term_coefficients(fit.alpha)),
                   normalization=dict(system.normalization), lambdas=fit.lambdas,
                   traces={"trace_CG": fit.trace_CG, "trace_KG": fit.trace_KG},
                   scale=fit.scale, **kwargs)

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    @property
    def spec(self) -> AdditiveModelSpec:
        return AdditiveModelSpec(self.terms, self.basis)

    def term(self, name: str) -> tuple[Term, np.ndarray]:
        for t, c in zip(self.terms, self.coefficients):
            if t.name == name:
                return t, c
        raise SpecError(f"model has no term {name!r}")

    def evaluate(self, name: str, psi) -> np.ndarray:
        """Radial function of one term."""
        _, c = self.term(name)
        out = self.basis.design(psi) @ c
        return out[0] if np.ndim(psi) == 0 else out

    def constant(self, name: str) -> float:
        t, c = self.term(name)
        if t.constraint != "constant":
            raise SpecError(f"term {name!r} is not constant-constrained")
        return float(c[0])

    def covariate_vector(self, covariates: Mapping[str, float]) -> np.ndarray:
        return np.array([transform_covariate(covariates, t.name, self.normalization)
                         for t in self.terms])

    def log_predict(self, psi, covariates: Mapping[str, float]) -> np.ndarray:
        h = self.covariate_vector(covariates)
        B = self.basis.design(psi)
        out = B @ (np.column_stack(self.coefficients) @ h)
        return out[0] if np.ndim(psi) == 0 else out

    def to_json(self) -> dict:
        return {
            "format": FORMAT,
            "kind": self.kind,
            "scale": self.scale,
            "temp_unit_ev": self.temp_unit_ev,
            "basis": self.basis.to_json(),
            "basis_metadata": self.basis.metadata(),
            "terms": [{"name": t.name, "constraint": t.constraint, "coefficients": c.tolist()}
                      for t, c in zip(self.terms, self.coefficients)],
            "normalization": dict(self.normalization),
            "lambdas": None if self.lambdas is None else np.asarray(self.lambdas).tolist(),
            "traces": dict(self.traces),
            "risk": None if self.risk is None else self.risk.to_json(),
            "metrics": dict(self.metrics),
            "stderr": dict(self.stderr),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "FittedModel":
        if obj.get("format") != FORMAT:
            raise DataError(f"not a model file (format {obj.get('format')!r})")
        try:
            basis = SplineBasis.from_json(obj["basis"])
            terms = tuple(Term(t["name"], t.get("constraint", "free")) for t in obj["terms"])
            coefs = tuple(np.asarray(t["coefficients"], dtype=float) for t in obj["terms"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed model file: {exc}") from None
        risk = obj.get("risk")
        lam = obj.get("lambdas")
        return cls(basis=basis, terms=terms, coefficients=coefs,
                   normalization=dict(obj.get("normalization", {})),
                   lambdas=None if lam is None else np.asarray(lam, dtype=float),
                   traces=dict(obj.get("traces", {})),
                   risk=None if risk is None else RiskReport.from_json(risk),
                   metrics=dict(obj.get("metrics", {})), stderr=dict(obj.get("stderr", {})),
                   temp_unit_ev=float(obj.get("temp_unit_ev", 1.0)),
                   scale=obj.get("scale", "log"), kind=obj.get("kind", "temperature"))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "FittedModel":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: malformed JSON ({exc.msg})") from None
        return cls.from_json(obj)


def predict(model: FittedModel, psi, covariates: Mapping[str, float]):
    """``exp(sum_l f_l(psi) h_l(u))`` using the model's stored reference values."""
    return np.exp(model.log_predict(psi, covariates))


def _psi_decimals(step: float) -> int:
    for d in range(1, 10):
        if abs(round(step, d) - step) < 1e-12:
            return d
    return 10


def tabulate(model: FittedModel, step: float = 0.1, names: Sequence[str] | None = None) -> str:
    """TSV of every radial function on ``psi = -1, -1 + step, ..., 1`` (4 decimals)."""
    if not step > 0:
        raise SpecError("step must be positive")
    n = round(2.0 / step)
    if n < 1 or abs(n * step - 2.0) > 1e-9:
        raise SpecError(f"step {step} does not divide the interval [-1, 1]")
    lo, hi = model.basis.domain
    psi = np.clip(-1.0 + 2.0 * np.arange(n + 1) / n, lo, hi)
    names = model.names if names is None else list(names)
    cols = [model.evaluate(name, psi) for name in names]
    d = _psi_decimals(step)
    labels = [model.term(name)[0].label for name in names]
    lines = ["\t".join(["psi"] + labels)]
    for i, p in enumerate(psi):
        vals = [f"{round(c[i], 4) + 0.0:.4f}" for c in cols]
        lines.append("\t".join([f"{round(p, d) + 0.0:.{d}f}"] + vals))
    return "\n".join(lines) + "\n"


def relative_mae(mae: float, mean_line_average: float) -> float:
    """Mean absolute error as a fraction of the mean line-average temperature."""
    return mae / mean_line_average


def fit_metrics(system: DesignSystem, fit: FitResult, profiles: ProfileSet,
                temp_unit_ev: float = 1.0) -> dict[str, float]:
    """Goodness-of-fit summary over measured points.

    ``mae_ev`` and ``rmse_ev`` are on the temperature scale, ``rmse_log`` on
    the log scale; ``mae_fraction`` divides by the mean line-average
    temperature of the profile set.
    """
    m = system.measured
    T = system.temp[m]
    That = np.exp(fit.fitted[m])
    err = (T - That) * temp_unit_ev
    mae = float(np.mean(np.abs(err)))
    line_avg = profiles.mean_line_average() * temp_unit_ev
    return {
        "mae_ev": mae,
        "rmse_ev": float(math.sqrt(np.mean(err**2))),
        "mean_line_average_ev": line_avg,
        "mae_fraction": relative_mae(mae, line_avg),
        "rmse_log": float(math.sqrt(np.mean((system.y[m] - fit.fitted[m]) ** 2))),
    }

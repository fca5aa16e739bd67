"""Profile records: NDJSON ingest, LIDAR edge cleaning, inboard reflection
and covariate normalization.

Radial positions use the signed normalized flux radius ``psi`` in [-1, 1]
with negative values on the inboard side.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    CovariateError,
    DomainError,
    EmptySetError,
    ProfileParseError,
    SpecError,
    ValidationError,
)

INTERCEPT = "intercept"

# Covariates entering additively on their raw scale (centered on the set mean).
# Every other name is log-transformed and normalized by a geometric mean.
LINEAR_COVARIATES = frozenset({"Vloop", "Zeff", "li", "time"})

# Physically motivated rejection list: selectable, but flagged when chosen.
DISCOURAGED_COVARIATES = frozenset({"time"})


def is_log_covariate(name: str) -> bool:
    return name not in LINEAR_COVARIATES


@dataclass(frozen=True, eq=False)
class ProfileRecord:
    """One measured temperature profile.

    ``augmented`` flags points that were not measured (reflected copies);
    they take part in fits but never in the point count used by the risk
    estimators.
    """

    id: str
    psi: np.ndarray
    temp: np.ndarray
    sigma: np.ndarray
    covariates: Mapping[str, float] = field(default_factory=dict)
    augmented: np.ndarray | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float)
        temp = np.asarray(self.temp, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        aug = (np.zeros(psi.shape, dtype=bool) if self.augmented is None
               else np.asarray(self.augmented, dtype=bool))
        for name, arr in (("psi", psi), ("temp", temp), ("sigma", sigma), ("augmented", aug)):
            if arr.ndim != 1:
                raise ValidationError(self.id, name, "must be one-dimensional")
        n = psi.size
        if temp.size != n or sigma.size != n or aug.size != n:
            raise ValidationError(self.id, "psi", "psi, temp and sigma must have equal length")
        if n < 4:
            raise ValidationError(self.id, "psi", f"need at least 4 points, got {n}")
        if not np.all(np.isfinite(psi)) or np.any(np.abs(psi) > 1.0):
            raise ValidationError(self.id, "psi", "values must be finite and lie in [-1, 1]")
        if not np.all(np.isfinite(temp)) or np.any(temp <= 0):
            raise ValidationError(self.id, "temp", "values must be finite and strictly positive")
        if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
            raise ValidationError(self.id, "sigma", "values must be finite and strictly positive")
        covs = {}
        for key, val in dict(self.covariates).items():
            try:
                covs[str(key)] = float(val)
            except (TypeError, ValueError):
                raise ValidationError(self.id, f"covariates.{key}", "not a number") from None
            if not math.isfinite(covs[str(key)]):
                raise ValidationError(self.id, f"covariates.{key}", "not finite")
        for name, arr in (("psi", psi), ("temp", temp), ("sigma", sigma), ("augmented", aug)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "covariates", covs)
        object.__setattr__(self, "notes", tuple(self.notes))

    def __len__(self):
        return self.psi.size

    @property
    def measured(self) -> np.ndarray:
        return ~self.augmented

    @property
    def n_measured(self) -> int:
        return int(np.count_nonzero(~self.augmented))

    def take(self, keep: np.ndarray, note: str | None = None) -> "ProfileRecord":
        notes = self.notes + ((note,) if note else ())
        return replace(self, psi=self.psi[keep], temp=self.temp[keep], sigma=self.sigma[keep],
                       augmented=self.augmented[keep], notes=notes)

    def line_average(self) -> float:
        """Chord average of the measured temperature (trapezoid rule over psi)."""
        m = self.measured
        order = np.argsort(self.psi[m])
        x, t = self.psi[m][order], self.temp[m][order]
        if x[-1] == x[0]:
            return float(t.mean())
        return float(np.trapezoid(t, x) / (x[-1] - x[0]))

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "psi": self.psi.tolist(),
            "temp_ev": self.temp.tolist(),
            "sigma_ev": self.sigma.tolist(),
            "covariates": dict(self.covariates),
        }
        if self.augmented.any():
            out["augmented"] = self.augmented.tolist()
        if self.notes:
            out["notes"] = list(self.notes)
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "ProfileRecord":
        rid = obj.get("id", "?")
        for key in ("id", "psi", "temp_ev", "sigma_ev"):
            if key not in obj:
                raise ValidationError(rid, key, "missing")
        return cls(id=str(obj["id"]), psi=obj["psi"], temp=obj["temp_ev"],
                   sigma=obj["sigma_ev"], covariates=obj.get("covariates", {}),
                   augmented=obj.get("augmented"), notes=tuple(obj.get("notes", ())))


def raw_covariate(record: ProfileRecord, name: str) -> float:
    """Raw value of a covariate, deriving ``qgeo = q95 * Ip / Bt`` on demand."""
    return _raw_from_map(record.covariates, name, record.id)


def _raw_from_map(covs: Mapping[str, float], name: str, rid: str) -> float:
    if name in covs:
        return float(covs[name])
    if name == "qgeo":
        try:
            return float(covs["q95"]) * float(covs["Ip"]) / float(covs["Bt"])
        except KeyError:
            raise CovariateError(rid, name) from None
    raise CovariateError(rid, name)


def transform_covariate(covs: Mapping[str, float], name: str, normalization: Mapping[str, float],
                        record_id: str = "<input>") -> float:
    """Transformed covariate h(u) computed from a raw covariate map.

    Log covariates give ``ln(raw / reference)``, linear ones ``raw - reference``.
    Product terms ``"Ip*Bt"`` multiply the transformed factors.
    """
    if name == INTERCEPT:
        return 1.0
    if "*" in name:
        return math.prod(transform_covariate(covs, part, normalization, record_id)
                         for part in name.split("*"))
    raw = _raw_from_map(covs, name, record_id)
    if name not in normalization:
        raise SpecError(f"no reference value for covariate {name!r}")
    ref = normalization[name]
    if not is_log_covariate(name):
        return raw - ref
    if raw <= 0:
        raise DomainError(f"record {record_id!r}: covariate {name!r} = {raw} cannot be log-transformed")
    if ref <= 0:
        raise DomainError(f"reference value for {name!r} must be positive, got {ref}")
    return math.log(raw / ref)


def covariate_value(record: ProfileRecord, name: str, normalization: Mapping[str, float]) -> float:
    """Transformed covariate h(u) of one record (see :func:`transform_covariate`)."""
    return transform_covariate(record.covariates, name, normalization, record.id)


def compute_normalization(records: Iterable[ProfileRecord]) -> dict[str, float]:
    """Geometric means of log covariates and arithmetic means of linear ones.

    Only covariates available on every record are included; a log covariate
    with any nonpositive value gets no reference (using it raises later).
    """
    records = list(records)
    if not records:
        return {}
    names = set(records[0].covariates)
    for rec in records[1:]:
        names &= set(rec.covariates)
    if {"q95", "Ip", "Bt"} <= names:
        names.add("qgeo")
    out = {}
    for name in sorted(names):
        vals = np.array([raw_covariate(r, name) for r in records])
        if np.all(vals == vals[0]):
            out[name] = float(vals[0])
        elif is_log_covariate(name):
            if np.all(vals > 0):
                out[name] = float(np.exp(np.mean(np.log(vals))))
        else:
            out[name] = float(np.mean(vals))
    return out


@dataclass(frozen=True, eq=False)
class ProfileSet:
    records: tuple[ProfileRecord, ...]
    normalization: Mapping[str, float]

    def __init__(self, records: Iterable[ProfileRecord], normalization: Mapping[str, float] | None = None):
        records = tuple(records)
        ids = [r.id for r in records]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise ValidationError(dup, "id", "duplicate record id")
        norm = compute_normalization(records) if normalization is None else dict(normalization)
        for name, val in norm.items():
            if is_log_covariate(name) and not val > 0:
                raise ValidationError("<set>", f"normalization.{name}", "must be strictly positive")
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "normalization", norm)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    @property
    def n_measured(self) -> int:
        return sum(r.n_measured for r in self.records)

    def with_normalization(self, normalization: Mapping[str, float]) -> "ProfileSet":
        """Same records with externally supplied reference values (e.g. from a stored model)."""
        norm = dict(self.normalization)
        norm.update(normalization)
        return ProfileSet(self.records, norm)

    def map(self, fn) -> "ProfileSet":
        """Apply a record transformation, keeping the current normalization."""
        return ProfileSet([fn(r) for r in self.records], self.normalization)

    def mean_line_average(self) -> float:
        return float(np.mean([r.line_average() for r in self.records]))


def load_profiles(path) -> ProfileSet:
    path = Path(path)
    records = []
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
            records.append(ProfileRecord.from_json(obj))
    if not records:
        raise EmptySetError(f"{path}: no profile records")
    return ProfileSet(records)


def dumps_profiles(profiles: Iterable[ProfileRecord]) -> str:
    return "".join(json.dumps(r.to_json(), separators=(", ", ": ")) + "\n" for r in profiles)


def write_profiles(profiles: Iterable[ProfileRecord], path) -> None:
    Path(path).write_text(dumps_profiles(profiles))


def _rising_tail(temp: np.ndarray, inner_temp: float | None) -> int:
    """Start index of the maximal run that rises monotonically to the wall.

    ``temp`` is ordered outward. Returns ``len(temp)`` when there is no rise.
    """
    m = temp.size
    s = m
    while s > 0:
        j = s - 1
        if j > 0:
            rising = temp[j] > temp[j - 1]
        elif inner_temp is not None:
            rising = temp[0] > inner_temp
        else:
            rising = m >= 2 and temp[1] > temp[0]
        if not rising:
            break
        s = j
    return s


def clean_edge(record: ProfileRecord, threshold: float = 0.9) -> ProfileRecord:
    """Delete spurious edge points whose temperature rises toward the wall.

    Each side (sign of psi) is treated separately. Among measured points with
    ``|psi| > threshold``, ordered outward, the maximal run of points each
    hotter than its inward neighbour is removed. The last point inside the
    threshold serves as the inward neighbour of the first edge point.
    """
    keep = np.ones(len(record), dtype=bool)
    removed = []
    meas = np.flatnonzero(record.measured)
    for sign in (1.0, -1.0):
        side = meas[np.sign(record.psi[meas]) == sign]
        if side.size == 0:
            continue
        side = side[np.argsort(np.abs(record.psi[side]), kind="stable")]
        r = np.abs(record.psi[side])
        outer = side[r > threshold]
        if outer.size == 0:
            continue
        inner = side[r <= threshold]
        inner_temp = float(record.temp[inner[-1]]) if inner.size else None
        s = _rising_tail(record.temp[outer], inner_temp)
        if s < outer.size:
            keep[outer[s:]] = False
            removed.extend(record.psi[outer[s:]].tolist())
    if not removed:
        return record
    note = "clean_edge: removed psi=" + ",".join(f"{p:g}" for p in sorted(removed))
    return record.take(keep, note)


def reflect_inboard(record: ProfileRecord, threshold: float = 0.87) -> ProfileRecord:
    """Append augmented mirror images at ``-psi`` of measured points with ``psi > threshold``."""
    meas = record.measured
    src = np.flatnonzero(meas & (record.psi > threshold))
    existing = set(record.psi[record.augmented].tolist())
    src = np.array([i for i in src if -record.psi[i] not in existing], dtype=int)
    if src.size == 0:
        return record
    return replace(
        record,
        psi=np.concatenate([record.psi, -record.psi[src]]),
        temp=np.concatenate([record.temp, record.temp[src]]),
        sigma=np.concatenate([record.sigma, record.sigma[src]]),
        augmented=np.concatenate([record.augmented, np.ones(src.size, dtype=bool)]),
        notes=record.notes + (f"reflect_inboard: {src.size} points mirrored above {threshold:g}",),
    )


def preprocess(profiles: ProfileSet, edge_threshold: float = 0.9,
               reflect_threshold: float | None = 0.87) -> ProfileSet:
    """Edge cleaning followed by (optional) inboard reflection for every record."""
    out = profiles.map(lambda r: clean_edge(r, edge_threshold))
    if reflect_threshold is not None:
        out = out.map(lambda r: reflect_inboard(r, reflect_threshold))
    return out

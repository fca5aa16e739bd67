"""Synthetic profile sets drawn from a fitted or tabulated model."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .dataset import ProfileRecord, ProfileSet, is_log_covariate
from .errors import SpecError
from .model import FittedModel, predict
from .tables import covariate_ranges

# sigma = max(noise_rel, floor) * T keeps the weights finite for noiseless sets.
SIGMA_FLOOR = 0.01


def draw_covariates(rng: np.random.Generator, ranges: Mapping[str, tuple[float, float]],
                    sampling: str = "log-uniform") -> dict[str, float]:
    """One covariate vector, each entry drawn independently within its range.

    Log-transformed covariates are drawn log-uniformly (``sampling="log-uniform"``)
    or uniformly; covariates that enter linearly are always uniform.
    """
    if sampling not in ("log-uniform", "uniform"):
        raise SpecError(f"unknown sampling {sampling!r}")
    out = {}
    for name in sorted(ranges):
        lo, hi = ranges[name]
        if hi < lo:
            raise SpecError(f"range for {name!r} is empty")
        if sampling == "log-uniform" and is_log_covariate(name) and lo > 0:
            out[name] = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        else:
            out[name] = float(rng.uniform(lo, hi))
    return out


def radial_grid(rng: np.random.Generator, n_points: int = 50, jitter: float = 0.4) -> np.ndarray:
    """Roughly equispaced chord positions with a random offset of up to ``jitter`` spacings."""
    base = np.linspace(-1.0, 1.0, n_points)
    h = 2.0 / (n_points - 1)
    return np.clip(base + rng.uniform(-jitter * h, jitter * h, n_points), -1.0, 1.0)


def simulate_profiles(model: FittedModel, n_profiles: int = 43, noise_rel: float = 0.10,
                      seed: int = 0, ranges: Mapping[str, tuple[float, float]] | None = None,
                      n_points: int = 50, sampling: str = "log-uniform") -> ProfileSet:
    """Draw ``n_profiles`` profiles with multiplicative log-normal noise.

    ``T = predict(model) * exp(eps)`` with ``eps ~ N(0, noise_rel**2)``,
    reported in eV, and ``sigma = noise_rel * T``. The returned set carries
    the model's own references so refits are directly comparable.
    """
    if noise_rel < 0:
        raise SpecError("noise_rel must be nonnegative")
    if n_profiles < 1:
        raise SpecError("n_profiles must be positive")
    if n_points < 4:
        raise SpecError("n_points must be at least 4")
    ranges = covariate_ranges() if ranges is None else dict(ranges)
    rng = np.random.default_rng(seed)
    width = len(str(n_profiles - 1))
    records = []
    for i in range(n_profiles):
        covs = draw_covariates(rng, ranges, sampling)
        psi = radial_grid(rng, n_points)
        eps = rng.normal(0.0, noise_rel, n_points) if noise_rel > 0 else np.zeros(n_points)
        temp = predict(model, psi, covs) * model.temp_unit_ev * np.exp(eps)
        sigma = max(noise_rel, SIGMA_FLOOR) * temp
        records.append(ProfileRecord(id=f"sim{seed}-{i:0{width}d}", psi=psi, temp=temp,
                                     sigma=sigma, covariates=covs))
    sim = ProfileSet(records)
    norm = dict(sim.normalization)
    norm.update(model.normalization)
    return sim.with_normalization(norm)

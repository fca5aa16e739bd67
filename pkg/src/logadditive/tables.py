"""Published reference data: covariate ranges and tabulated radial functions.

The tabulated functions are turned into spline models by minimum-roughness
interpolation, i.e. the coefficients minimize ``a' S a`` subject to
reproducing every tabulated value exactly. Tabulating such a model on the
same grid gives the published numbers back.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .dataset import INTERCEPT
from .design import Term
from .model import FittedModel
from .splines import SplineBasis

PSI_GRID = np.round(np.linspace(-1.0, 1.0, 21), 1)

# name: (mean, min, max, standard deviation); Zeff merges the two reported estimates.
COVARIATE_SUMMARY = {
    "nbar": (2.29, 1.32, 3.90, 0.75),
    "q95": (5.48, 2.88, 12.6, 2.86),
    "Ip": (2.80, 0.97, 5.25, 1.13),
    "Bt": (2.76, 1.30, 3.22, 0.46),
    "kappa": (1.44, 1.30, 1.75, 0.122),
    "a": (1.16, 1.05, 1.19, 0.040),
    "R": (2.92, 2.83, 3.01, 0.047),
    "Vloop": (-0.35, -1.12, 0.914, 0.66),
    "Zeff": (1.99, 1.07, 3.35, 0.58),
}

# Not summarized in the published table; plausible ranges for a large tokamak.
EXTRA_RANGES = {"li": (0.7, 1.5), "time": (5.0, 20.0)}


def covariate_ranges() -> dict[str, tuple[float, float]]:
    out = {k: (v[1], v[2]) for k, v in COVARIATE_SUMMARY.items()}
    out.update(EXTRA_RANGES)
    return out


# Rice criterion of the winning model at stages 1..4 of the forward selection.
RICE_STAIRCASE = (1.93, 1.58, 1.12, 0.885)

# Reported fit quality on the measured database.
MAE_EV = 152.0
MEAN_LINE_AVERAGE_EV = 1454.0
RMSE_LOG = 0.171
N_PROFILES = 43

# Five free radial functions with references Ip, Bt, nbar, qgeo.
TABLE3_REFERENCES = {"Ip": 2.552, "Bt": 2.710, "nbar": 2.171, "qgeo": 4.150}
TABLE3 = {
    INTERCEPT: [0.2376, 0.4267, 0.7972, 1.1884, 1.4813, 1.7071, 1.8869, 1.9517, 1.9528, 1.9785, 2.0271,
                2.0257, 1.9588, 1.8611, 1.7285, 1.5236, 1.2578, 0.9711, 0.6821, 0.4173, 0.2243],
    "Ip": [0.5057, 0.6679, 0.7728, 0.8231, 0.8236, 0.7827, 0.7131, 0.6316, 0.5561, 0.5029, 0.4838,
           0.5029, 0.5561, 0.6316, 0.7131, 0.7827, 0.8236, 0.8231, 0.7728, 0.6679, 0.5057],
    "Bt": [0.0776, 0.0900, 0.1320, 0.2037, 0.3046, 0.4317, 0.5771, 0.7261, 0.8577, 0.9491, 0.9820,
           0.9491, 0.8577, 0.7261, 0.5771, 0.4317, 0.3046, 0.2037, 0.1320, 0.0900, 0.0776],
    "nbar": [-0.3013, -0.2332, -0.2710, -0.3479, -0.3746, -0.3449, -0.3294, -0.3658, -0.4384, -0.5021,
             -0.5261, -0.5021, -0.4384, -0.3658, -0.3294, -0.3449, -0.3746, -0.3479, -0.2710, -0.2332,
             -0.3013],
    "qgeo": [-0.3879, -0.3755, -0.3370, -0.2902, -0.2484, -0.2161, -0.1891, -0.1631, -0.1397, -0.1236,
             -0.1179, -0.1236, -0.1397, -0.1631, -0.1891, -0.2161, -0.2484, -0.2902, -0.3370, -0.3755,
             -0.3879],
}

# Free shape and q95 functions plus constant Ip, Bt and nbar exponents.
TABLE4_REFERENCES = {"Ip": 2.552, "Bt": 2.710, "nbar": 2.171, "q95": 4.537}
TABLE4 = {
    INTERCEPT: [0.2326, 0.4279, 0.8015, 1.1914, 1.4827, 1.7092, 1.8890, 1.9514, 1.9505, 1.9750, 2.0194,
                2.0154, 1.9511, 1.8579, 1.7298, 1.5275, 1.2613, 0.9729, 0.6841, 0.4194, 0.2208],
    "q95": [-0.3729, -0.3364, -0.2822, -0.2298, -0.1951, -0.1836, -0.1885, -0.1995, -0.2105, -0.2186,
            -0.2215, -0.2186, -0.2105, -0.1995, -0.1885, -0.1836, -0.1951, -0.2298, -0.2822, -0.3364,
            -0.3729],
}
TABLE4_CONSTANTS = {"Ip": 0.6868, "Bt": 0.4900, "nbar": -0.3652}

# Rounded constants quoted alongside the simpler model.
CONSTANT_TARGETS = {"Ip": 0.69, "Bt": 0.49, "nbar": -0.37}

# The published tables are in keV.
TABLE_TEMP_UNIT_EV = 1000.0


def interpolate_min_roughness(basis: SplineBasis, psi, values) -> np.ndarray:
    """Spline coefficients through ``(psi, values)`` with the least ``int f'''^2``.

    Solves the equality-constrained quadratic program through its KKT system.
    Needs at most K points; with fewer, the roughness penalty picks the
    smoothest of the interpolants.
    """
    B = basis.design(psi)
    S = basis.penalty
    K, m = basis.K, B.shape[0]
    kkt = np.block([[S, B.T], [B, np.zeros((m, m))]])
    rhs = np.concatenate([np.zeros(K), np.asarray(values, dtype=float)])
    return linalg.solve(kkt, rhs)[:K]


def _table_model(table: dict, constants: dict, references: dict, basis: SplineBasis | None,
                 order: list[str]) -> FittedModel:
    basis = SplineBasis.clamped() if basis is None else basis
    terms, coefs = [], []
    for name in order:
        if name in table:
            terms.append(Term(name, "free"))
            coefs.append(interpolate_min_roughness(basis, PSI_GRID, table[name]))
        else:
            terms.append(Term(name, "constant"))
            coefs.append(np.full(basis.K, constants[name]))
    return FittedModel(basis=basis, terms=tuple(terms), coefficients=tuple(coefs),
                       normalization=dict(references), temp_unit_ev=TABLE_TEMP_UNIT_EV)


def table3_model(basis: SplineBasis | None = None) -> FittedModel:
    """Five-function reference model (intercept, Ip, Bt, nbar, qgeo)."""
    return _table_model(TABLE3, {}, TABLE3_REFERENCES, basis, [INTERCEPT, "Ip", "Bt", "nbar", "qgeo"])


def table4_model(basis: SplineBasis | None = None) -> FittedModel:
    """Reduced reference model: free intercept and q95 terms, constant Ip, Bt, nbar."""
    return _table_model(TABLE4, TABLE4_CONSTANTS, TABLE4_REFERENCES, basis,
                        [INTERCEPT, "q95", "Ip", "Bt", "nbar"])


BUILTIN_MODELS = {"table3": table3_model, "table4": table4_model}

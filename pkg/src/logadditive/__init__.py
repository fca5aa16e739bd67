"""Additive log-linear profile regression with penalized B-splines.

The temperature model is ``ln T(psi, u) = sum_l f_l(psi) h_l(u)`` with each
radial function expanded in cubic B-splines, smoothing parameters chosen by
the Rice criterion (or GCV), and an optional log-additive diffusivity fitted
through a 1-D transport model.
"""

from .dataset import (
    INTERCEPT,
    ProfileRecord,
    ProfileSet,
    clean_edge,
    covariate_value,
    load_profiles,
    preprocess,
    reflect_inboard,
    write_profiles,
)
from .design import (
    AdditiveModelSpec,
    DesignSystem,
    Term,
    build_design,
    eq8_spec,
    eq8q_spec,
    make_spec,
    profile_consistency_spec,
)
from .diffusivity import (
    ChiModel,
    DischargeConditions,
    fit_chi,
    forward_temperature,
    load_conditions,
)
from .errors import DataError, LogAdditiveError, NumericalError
from .model import FittedModel, predict, tabulate
from .pwls import FitResult, coefficient_covariance, solve
from .risk import CorrelationModel, RiskReport, autocorr_K, gcv, rice, risk_report
from .selection import (
    fit_additive,
    forward_select,
    optimize_lambdas,
    reduce_to_constant,
    test_symmetry,
)
from .simulate import simulate_profiles
from .splines import SplineBasis, eval_basis, make_knots, penalty_matrix
from .tables import table3_model, table4_model

__version__ = "0.1.0"

import math

import numpy as np
import pytest

from logadditive.design import DesignSystem, build_design, make_spec
from logadditive.errors import OverParameterizedError, SaturationError, SpecError
from logadditive.pwls import FitResult, solve
from logadditive.risk import (
    CorrelationModel,
    RiskReport,
    autocorr_K,
    chi2_stat,
    criterion_value,
    ease_estimate,
    gcv,
    rice,
    risk_report,
    sigma2_cw,
)


def _fake(rss, N, tr):
    return FitResult(alpha=np.zeros(1), lambdas=np.zeros(1), G=np.eye(1), trace_CG=tr, trace_KG=tr,
                     rss_weighted=rss, fitted=np.zeros(N), n_measured=N)


def _mean_toy():
    return solve(DesignSystem.from_arrays([[1.0], [1.0]], [1.0, 3.0]), 0.0)


class TestK:
    def test_independent_is_C(self, sim43, basis):
        system = build_design(sim43, make_spec(["Ip"], basis))
        np.testing.assert_array_equal(autocorr_K(system, CorrelationModel()), system.C_measured)
        np.testing.assert_array_equal(autocorr_K(system, CorrelationModel("radial-ar1", 0.0)), system.C_measured)

    def test_two_point_hand_value(self):
        system = DesignSystem.from_arrays([[1.0], [1.0]], [0.0, 0.0], psi=[0.0, 0.05])
        K = autocorr_K(system, CorrelationModel("radial-ar1", 0.5, length=0.05))
        assert K[0, 0] == pytest.approx(3.0)

    def test_block_diagonal_across_profiles(self):
        system = DesignSystem.from_arrays([[1.0], [1.0]], [0.0, 0.0], psi=[0.0, 0.05], profile=[0, 1])
        K = autocorr_K(system, CorrelationModel("radial-ar1", 0.5, length=0.05))
        assert K[0, 0] == pytest.approx(2.0)

    def test_correlation_increases_complexity(self, sim43, basis):
        system = build_design(sim43, make_spec(["Ip"], basis))
        lam = 1e-3
        plain = solve(system, lam)
        corr = solve(system, lam, autocorr_K(system, CorrelationModel.from_rho(0.6)))
        assert corr.trace_KG > plain.trace_KG
        assert plain.trace_KG == pytest.approx(plain.trace_CG, rel=1e-12)

    @pytest.mark.parametrize("rho", [-0.1, 1.0])
    def test_rho_range(self, rho):
        with pytest.raises(SpecError):
            CorrelationModel("radial-ar1", rho)


class TestToys:
    def test_mean_model(self):
        fit = _mean_toy()
        assert ease_estimate(fit) == pytest.approx(2.0)
        assert sigma2_cw(fit) == pytest.approx(2.0)
        assert gcv(fit) == pytest.approx(4.0)
        assert chi2_stat(fit) == pytest.approx(2.0)
        with pytest.raises(OverParameterizedError):
            rice(fit)

    def test_four_point_rice(self):
        fit = solve(DesignSystem.from_arrays(np.ones((4, 1)), [1.0, 3.0, 1.0, 3.0]), 0.0)
        assert fit.rss_weighted == pytest.approx(4.0)
        assert rice(fit) == pytest.approx(2.0)

    def test_perfect_fit_ease(self):
        assert ease_estimate(_fake(0.0, 50, 7.0)) == pytest.approx(-(50 - 14))

    def test_saturation(self):
        with pytest.raises(SaturationError):
            sigma2_cw(_fake(1.0, 10, 10.0))
        with pytest.raises(SaturationError):
            gcv(_fake(1.0, 10, 10.0))

    def test_gcv_zero_rss(self):
        assert gcv(_fake(0.0, 10, 2.0)) == 0.0

    def test_gcv_large_N_limit(self):
        N, tr, rss = 10_000, 5.0, 9_000.0
        assert gcv(_fake(rss, N, tr)) == pytest.approx(rss / N, rel=0.01)

    def test_rice_gcv_gap_order_tr_over_N(self):
        N, tr, rss = 1000, 5.0, 950.0
        f = _fake(rss, N, tr)
        assert abs(gcv(f) - rice(f)) / rice(f) < 2 * tr / N

    def test_explicit_K_and_N(self):
        fit = _mean_toy()
        assert gcv(fit, K=np.array([[2.0]]), N=2) == pytest.approx(2 * 2 / (2 - 1) ** 2)


def test_shared_rss_identities():
    rng = np.random.default_rng(0)
    for _ in range(20):
        N = int(rng.integers(20, 200))
        tr = float(rng.uniform(0.5, N / 2 - 1))
        f = _fake(float(rng.uniform(1, 100)), N, tr)
        rss = f.rss_weighted
        assert rice(f) * (N - 2 * tr) == pytest.approx(rss, rel=1e-12)
        assert gcv(f) * (N - tr) ** 2 / N == pytest.approx(rss, rel=1e-12)
        assert chi2_stat(f) == sigma2_cw(f) <= rice(f)


def test_sigma2_cw_recovers_noise_level():
    rng = np.random.default_rng(1)
    N, P, sigma2 = 200, 10, 2.5
    X = rng.normal(size=(N, P))
    mu = X @ rng.normal(size=P)
    ests = []
    for _ in range(100):
        y = mu + rng.normal(0, math.sqrt(sigma2), N)
        fit = solve(DesignSystem.from_arrays(X, y, w=np.full(N, 1 / sigma2)), 0.0)
        ests.append(sigma2_cw(fit) * sigma2)
    assert abs(np.median(ests) - sigma2) / sigma2 < 0.2


def test_rice_at_least_as_selective_as_gcv():
    """Pure-noise responses: nested small/large polynomial models."""
    rng = np.random.default_rng(2)
    x = np.linspace(-1, 1, 60)
    small = np.vander(x, 2)
    large = np.vander(x, 8)
    picks = {"rice": 0, "gcv": 0}
    for _ in range(200):
        y = rng.normal(size=x.size)
        fits = [solve(DesignSystem.from_arrays(X, y), 0.0) for X in (small, large)]
        for crit in picks:
            v = [criterion_value(f, crit) for f in fits]
            picks[crit] += v[0] <= v[1]
    assert picks["rice"] >= picks["gcv"]


def test_report_round_trip_and_rows():
    rep = risk_report(_mean_toy(), strict=False)
    assert math.isinf(rep.rice)
    back = RiskReport.from_json(rep.to_json())
    assert back == rep
    labels = [r[0] for r in rep.rows()]
    assert labels[0] == "N (measured)" and "Rice C_R" in labels
    with pytest.raises(OverParameterizedError):
        risk_report(_mean_toy())


def test_augmented_rows_excluded_from_N(sim43, basis):
    from logadditive.dataset import preprocess
    aug = preprocess(sim43)
    system = build_design(aug, make_spec([], basis))
    fit = solve(system, 1.0)
    assert fit.n_measured == aug.n_measured < system.n_rows

from dataclasses import replace

import numpy as np
import pytest

from logadditive.dataset import ProfileRecord, ProfileSet
from logadditive.design import DesignSystem, build_design, make_spec
from logadditive.errors import RankDeficiencyError
from logadditive.pwls import coefficient_covariance, objective, solve, solve_linear_scale
from logadditive.selection import relative_grid, term_scales


def _random_system(rng, n=80, blocks=(6, 5), penalized=True):
    P = sum(blocks)
    X = rng.normal(size=(n, P))
    y = rng.normal(size=n)
    w = rng.uniform(0.5, 2.0, n)
    slices, start = [], 0
    pens = []
    for b in blocks:
        slices.append(slice(start, start + b))
        A = rng.normal(size=(b, b - 2))
        pens.append(A @ A.T if penalized else np.zeros((b, b)))
        start += b
    return DesignSystem.from_arrays(X, y, w, penalties=pens, blocks=slices)


def test_consistent_system_recovered(rng=np.random.default_rng(0)):
    X = rng.normal(size=(40, 7))
    a = rng.normal(size=7)
    fit = solve(DesignSystem.from_arrays(X, X @ a), 0.0)
    np.testing.assert_allclose(fit.alpha, a, atol=1e-10)


def test_scalar_mean_model():
    fit = solve(DesignSystem.from_arrays([[1.0], [1.0]], [1.0, 3.0]), 0.0)
    assert fit.alpha[0] == pytest.approx(2.0) and fit.rss_weighted == pytest.approx(2.0)
    assert fit.trace_CG == pytest.approx(1.0)


def test_scalar_mean_variance():
    system = DesignSystem.from_arrays([[1.0], [1.0]], [1.0, 3.0])
    fit = solve(system, 0.0)
    assert coefficient_covariance(fit, system)[0, 0] == pytest.approx(0.5)


def test_covariance_is_inverse_C_at_zero_lambda():
    rng = np.random.default_rng(1)
    system = _random_system(rng)
    fit = solve(system, 0.0)
    np.testing.assert_allclose(coefficient_covariance(fit, system), np.linalg.inv(system.C), rtol=1e-9, atol=1e-12)


def test_covariance_shrinks_with_lambda():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 4))
    system = DesignSystem.from_arrays(X, rng.normal(size=50), penalties=[np.eye(4)])
    norms = [np.linalg.norm(coefficient_covariance(solve(system, lam), system)) for lam in (1, 1e3, 1e6, 1e9)]
    assert all(a > b for a, b in zip(norms, norms[1:])) and norms[-1] < 1e-15


def test_residual_orthogonality():
    rng = np.random.default_rng(3)
    system = _random_system(rng)
    lam = np.array([0.7, 3.0])
    fit = solve(system, lam)
    lhs = system.X.T @ (system.w * (system.y - system.X @ fit.alpha))
    rhs = system.penalty(lam) @ fit.alpha
    assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)


def test_objective_minimum_and_gradient():
    rng = np.random.default_rng(4)
    system = _random_system(rng)
    lam = np.array([2.0, 0.5])
    fit = solve(system, lam)
    f0 = objective(system, fit.alpha, lam)
    for _ in range(100):
        assert f0 <= objective(system, fit.alpha + 1e-3 * rng.normal(size=fit.alpha.size), lam)
    # analytic gradient -2 X'D(y - Xa) + 2 P a against central differences, at a generic point
    a = fit.alpha + rng.normal(size=fit.alpha.size)
    grad = -2 * system.X.T @ (system.w * (system.y - system.X @ a)) + 2 * system.penalty(lam) @ a
    h = 1e-5
    fd = np.array([(objective(system, a + h * e, lam) - objective(system, a - h * e, lam)) / (2 * h)
                   for e in np.eye(a.size)])
    assert np.linalg.norm(fd - grad) <= 1e-6 * np.linalg.norm(grad)


def test_trace_identities_on_profile_design(sim43, basis):
    system = build_design(sim43, make_spec(["Ip"], basis))
    assert solve(system, 0.0).trace_CG == pytest.approx(system.n_params, abs=1e-8)
    scales = term_scales(system)
    traces = [solve(system, g * scales).trace_CG for g in relative_grid()]
    assert all(a > b for a, b in zip(traces, traces[1:]))
    # the penalty null space (quadratics) survives any smoothing: 3 per term
    assert traces[-1] > 2 * 3 - 1e-3


def test_constant_covariate_is_rank_deficient(basis):
    recs = [ProfileRecord(f"r{i}", np.linspace(-1, 1, 12), np.full(12, 100.0 + i), np.full(12, 5.0),
                          {"Ip": 2.0, "Bt": 1.0 + i}) for i in range(4)]
    ps = ProfileSet(recs)
    with pytest.raises(RankDeficiencyError) as exc:
        solve(build_design(ps, make_spec(["Ip", "Bt"], basis)), 1.0)
    assert exc.value.term == "Ip"


def test_exact_collinearity_is_regularized_once():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(30, 1))
    y = rng.normal(size=30)
    system = DesignSystem.from_arrays(np.hstack([x, 2 * x]), y,
                                      blocks=[slice(0, 1), slice(1, 2)], names=["a", "b"])
    fit = solve(system, 0.0)
    assert fit.jittered
    direct = solve(DesignSystem.from_arrays(x, y), 0.0)
    np.testing.assert_allclose(fit.fitted, direct.fitted, atol=1e-6)


def test_near_singular_system_is_jittered():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(30, 1))
    X = np.hstack([x, x + 1e-9 * rng.normal(size=(30, 1))])
    fit = solve(DesignSystem.from_arrays(X, rng.normal(size=30)), 0.0)
    assert fit.jittered and np.all(np.isfinite(fit.alpha))


def test_linear_scale_fit_noiseless(small_set, basis):
    # exact log-linear data: both scales give the same coefficients
    spec = make_spec(["Ip"], basis)
    system = build_design(small_set, spec)
    eta = system.X @ solve(system, 1e-3).alpha
    system_exact = replace(system, y=eta, temp=np.exp(eta))
    log_fit = solve(system_exact, 1e-9)
    lin = solve_linear_scale(system_exact, 1e-9)
    assert lin.scale == "linear"
    np.testing.assert_allclose(lin.fitted, log_fit.fitted, atol=1e-6)


def test_linear_scale_decreases_its_objective(small_set, basis):
    system = build_design(small_set, make_spec(["Ip"], basis))
    lam = 1e-2
    log_fit = solve(system, lam)
    lin = solve_linear_scale(system, lam)
    W = 1 / system.sigma**2
    pen = system.penalty(lam)

    def obj(a):
        r = system.temp - np.exp(system.X @ a)
        return np.sum(W * r * r) + a @ pen @ a

    assert obj(lin.alpha) <= obj(log_fit.alpha)


def test_penalty_null_space_is_exact(basis):
    system = DesignSystem.from_arrays(basis.design(np.linspace(-1, 1, 50)), np.zeros(50),
                                      penalties=[basis.penalty])
    ev = system.penalty_eigen[0][1]
    assert np.count_nonzero(ev == 0.0) == 3 and ev.min() >= 0


def test_constant_term_is_unpenalized(sim43, basis):
    from logadditive.design import eq8q_spec
    system = build_design(sim43, eq8q_spec(basis))
    scales = term_scales(system)
    for i, name in enumerate(system.term_names):
        assert (scales[i] == 0) == (name in ("Ip", "Bt", "nbar"))


def test_huge_lambda_recovers_weighted_quadratic(basis):
    rng = np.random.default_rng(9)
    x = np.sort(rng.uniform(-1, 1, 200))
    w = rng.uniform(0.5, 2.0, x.size)
    y = 0.3 + x - 2 * x**2 + rng.normal(0, 1, x.size)
    fit = solve(DesignSystem.from_arrays(basis.design(x), y, w, penalties=[basis.penalty]), 1e10)
    V = np.vander(x, 3)
    coef = np.linalg.lstsq(V * np.sqrt(w)[:, None], y * np.sqrt(w), rcond=None)[0]
    assert np.max(np.abs(fit.fitted - V @ coef)) < 1e-6

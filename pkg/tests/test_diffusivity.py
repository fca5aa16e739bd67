import math

import numpy as np
import pytest

from logadditive.dataset import INTERCEPT, ProfileSet
from logadditive.design import Term
from logadditive.diffusivity import (
    DENSITY_ENERGY,
    ChiModel,
    DischargeConditions,
    chi_basis,
    fit_chi,
    forward_temperature,
    load_conditions,
    predict_at,
    simulate_chi_profiles,
    with_coefficients,
    write_conditions,
)
from logadditive.errors import (
    EmptySetError,
    SingularConductivityError,
    SpecError,
    ValidationError,
)
from logadditive.model import predict


def _conditions(cid="d0", n=101, s0=5e5, shape=lambda r: 1 - r**2, density=3.0, edge=100.0, a=1.0,
                covariates=None):
    rho = np.linspace(0.0, 1.0, n)
    return DischargeConditions(cid, rho, np.full(n, density), s0 * shape(rho), edge, a,
                               covariates or {})


def _parabolic_exact(rho, s0, n, chi, a, edge):
    # T for S = s0 (1 - rho^2), constant density and diffusivity
    r2 = (a * rho) ** 2
    return edge + s0 / (DENSITY_ENERGY * n * chi) * ((a**2 - r2) / 4 - (a**4 - r2**2) / (16 * a**2))


class TestForward:
    def test_constant_everything_is_exact(self):
        cond = _conditions(shape=np.ones_like, a=0.9)
        sol = forward_temperature(ChiModel.uniform(1.7), cond)
        r = 0.9 * sol.rho
        exact = 100.0 + 5e5 * (0.81 - r**2) / (4 * DENSITY_ENERGY * 3.0 * 1.7)
        np.testing.assert_allclose(sol.temp, exact, rtol=1e-13)

    def test_no_source_gives_edge_temperature(self):
        sol = forward_temperature(ChiModel.uniform(1.0), _conditions(s0=0.0))
        np.testing.assert_array_equal(sol.temp, 100.0)

    def test_second_order_convergence(self):
        errs = []
        for n in (64, 128):
            sol = forward_temperature(ChiModel.uniform(0.8), _conditions(n=n))
            exact = _parabolic_exact(sol.rho, 5e5, 3.0, 0.8, 1.0, 100.0)
            errs.append(np.max(np.abs(sol.temp - exact)))
        assert math.log2(errs[0] / errs[1]) >= 1.9

    def test_resampled_grid(self):
        cond = _conditions(shape=np.ones_like)
        sol = forward_temperature(ChiModel.uniform(1.0), cond, n_grid=33)
        assert sol.rho.size == 33
        assert sol.temp[0] == pytest.approx(100.0 + 5e5 / (4 * DENSITY_ENERGY * 3.0), rel=1e-12)
        with pytest.raises(SpecError):
            forward_temperature(ChiModel.uniform(1.0), cond, n_grid=8)

    def test_vanishing_density(self):
        rho = np.linspace(0, 1, 20)
        cond = DischargeConditions("z", rho, np.where(rho > 0.5, 0.0, 2.0), np.ones(20), 50.0, 1.0)
        with pytest.raises(SingularConductivityError):
            forward_temperature(ChiModel.uniform(1.0), cond)

    def test_source_changes_shape_but_temperature_model_does_not(self, table3):
        chi = ChiModel.uniform(1.0)
        covs = {"Ip": 2.5, "Bt": 2.7, "nbar": 2.2, "qgeo": 4.0}
        central = _conditions(shape=lambda r: np.exp(-((r / 0.3) ** 2)), covariates=covs)
        broad = _conditions("d1", shape=np.ones_like, covariates=covs)
        shapes = []
        for cond in (central, broad):
            T = forward_temperature(chi, cond).temp - cond.edge_temp
            shapes.append(T / T[0])
        assert np.max(np.abs(shapes[0] - shapes[1])) > 0.1
        psi = np.linspace(0, 0.9, 10)
        np.testing.assert_array_equal(predict(table3, psi, central.covariates),
                                      predict(table3, psi, broad.covariates))


class TestJacobian:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        basis = chi_basis()
        norm = {"Ip": 2.0}
        chi = ChiModel(basis, (Term(INTERCEPT), Term("Ip")),
                       (0.3 * rng.normal(size=basis.K), 0.3 * rng.normal(size=basis.K)), norm)
        cond = _conditions(covariates={"Ip": 3.1})
        rho_obs = np.linspace(0.02, 0.97, 17)
        T, J = predict_at(chi, cond, rho_obs, with_jacobian=True)
        theta = np.concatenate(chi.coefficients)
        h = 1e-6
        fd = np.empty_like(J)
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = h
            fd[:, k] = (predict_at(with_coefficients(chi, theta + e), cond, rho_obs)
                        - predict_at(with_coefficients(chi, theta - e), cond, rho_obs)) / (2 * h)
        assert np.linalg.norm(J - fd) / np.linalg.norm(fd) < 1e-5

    def test_positivity_for_any_coefficients(self):
        rng = np.random.default_rng(1)
        basis = chi_basis()
        rho = np.linspace(0, 1, 201)
        for _ in range(20):
            chi = ChiModel(basis, (Term(INTERCEPT),), (rng.uniform(-20, 20, basis.K),))
            assert np.all(chi.chi(rho) > 0)


def _three_discharges():
    return [_conditions(f"d{i}", s0=s0, density=d, edge=e)
            for i, (s0, d, e) in enumerate([(4e5, 2.5, 80.0), (7e5, 3.5, 120.0), (1e6, 5.0, 150.0)])]


class TestFit:
    def test_recovers_constant(self):
        conds = _three_discharges()
        truth = ChiModel.uniform(0.7)
        profiles = simulate_chi_profiles(truth, conds)
        res = fit_chi(profiles, {c.id: c for c in conds})
        coef = res.model.coefficients[0]
        assert np.max(np.abs(coef - math.log(0.7))) < 1e-2
        assert res.converged

    def test_recovers_flat_core_parabolic_edge(self):
        conds = _three_discharges()
        log_truth = lambda r: math.log(0.5) + 4.0 * np.clip(r - 0.6, 0.0, None) ** 2  # noqa: E731
        truth = ChiModel.from_function(log_truth)
        profiles = simulate_chi_profiles(truth, conds, rho_obs=np.linspace(0, 0.97, 40))
        res = fit_chi(profiles, {c.id: c for c in conds})
        rho = np.linspace(0.1, 0.9, 81)
        err = np.max(np.abs(np.log(res.model.chi(rho)) - log_truth(rho)))
        assert err < 0.05

    def test_objective_history_is_monotone(self):
        conds = _three_discharges()
        profiles = simulate_chi_profiles(ChiModel.from_function(lambda r: 0.3 * r - 0.5), conds,
                                         noise_rel=0.05, seed=3)
        res = fit_chi(profiles, {c.id: c for c in conds}, lambdas=1e-3)
        assert np.all(np.diff(res.history) <= 0)
        assert res.objective == res.history[-1]
        assert res.model.kind == "diffusivity" and res.risk.n_measured == profiles.n_measured

    def test_default_penalty_pins_axis_under_noise(self):
        conds = _three_discharges()[:2]
        profiles = simulate_chi_profiles(ChiModel.uniform(0.9), conds, noise_rel=0.05, seed=1)
        with np.errstate(over="raise"):
            res = fit_chi(profiles, {c.id: c for c in conds})
        assert np.max(np.abs(res.model.coefficients[0] - math.log(0.9))) < 0.5

    def test_errors(self):
        conds = _three_discharges()
        profiles = simulate_chi_profiles(ChiModel.uniform(1.0), conds)
        with pytest.raises(EmptySetError):
            fit_chi(ProfileSet([]), {})
        with pytest.raises(ValidationError):
            fit_chi(profiles, {c.id: c for c in conds[:2]})
        with pytest.raises(SpecError):
            fit_chi(profiles, {c.id: c for c in conds}, terms=("Ip",))
        with pytest.raises(SpecError):
            fit_chi(profiles, {c.id: c for c in conds}, lambdas=-1.0)


class TestConditionsIO:
    def test_round_trip(self, tmp_path):
        conds = _three_discharges()
        path = tmp_path / "c.ndjson"
        write_conditions(conds, path)
        back = load_conditions(path)
        assert list(back) == ["d0", "d1", "d2"]
        for c in conds:
            np.testing.assert_array_equal(back[c.id].source, c.source)
            assert back[c.id].edge_temp == c.edge_temp

    @pytest.mark.parametrize("kw", [{"edge": 0.0}, {"a": -1.0}, {"s0": -1.0}])
    def test_validation(self, kw):
        with pytest.raises(ValidationError):
            _conditions(**kw)

    def test_grid_must_span_unit_interval(self):
        with pytest.raises(ValidationError):
            DischargeConditions("g", np.linspace(0, 0.9, 5), np.ones(5), np.ones(5), 1.0, 1.0)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "c.ndjson"
        path.write_text("\n")
        with pytest.raises(EmptySetError):
            load_conditions(path)

    def test_model_json_round_trip(self, tmp_path):
        chi = ChiModel.from_function(lambda r: r - 1.0)
        chi.save(tmp_path / "chi.json")
        back = ChiModel.load(tmp_path / "chi.json")
        assert isinstance(back, ChiModel) and back.kind == "diffusivity"
        np.testing.assert_array_equal(back.chi(np.linspace(0, 1, 5)), chi.chi(np.linspace(0, 1, 5)))

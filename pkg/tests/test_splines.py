import numpy as np
import pytest
from scipy.integrate import quad
from scipy.interpolate import BSpline

from logadditive.errors import DomainError, SpecError
from logadditive.splines import SplineBasis, eval_basis, make_knots, penalty_matrix


def _interp_coefficients(basis, f):
    """Exact spline coefficients of a polynomial of degree <= 3 (least squares on many points)."""
    x = np.linspace(-1, 1, 200)
    coef, *_ = np.linalg.lstsq(basis.design(x), f(x), rcond=None)
    return coef


class TestKnots:
    def test_single_interior_knot_at_zero(self):
        for thinning in (1.0, 2.0, 5.0):
            t = make_knots(1, thinning)
            assert t[4] == 0.0 and t.size == 9

    def test_uniform_limit(self):
        t = make_knots(20, 1.0)
        np.testing.assert_allclose(np.diff(t[4:-4]), 2 / 21, atol=1e-14)

    def test_thinning_widens_edge_gaps(self):
        interior = make_knots(20, 2.0)[4:-4]
        gaps = np.diff(interior)
        inner = gaps[gaps.size // 2]
        assert gaps[0] >= inner and gaps[-1] >= inner

    def test_default_outer_gap_about_twice_inner(self):
        gaps = np.diff(make_knots(20)[4:-4])
        assert 1.8 < gaps[0] / gaps[gaps.size // 2] < 2.3

    def test_symmetric(self):
        t = make_knots(20)
        np.testing.assert_allclose(t, -t[::-1], atol=0)

    @pytest.mark.parametrize("n,thin", [(0, 2.0), (5, 0.5)])
    def test_bad_arguments(self, n, thin):
        with pytest.raises(SpecError):
            make_knots(n, thin)


class TestBasis:
    def test_dimension(self, basis):
        assert basis.K == 24
        assert basis.metadata() == {"n_interior_knots": 20, "n_basis": 24, "order": 4}

    def test_uniform_cubic_at_centre(self):
        b = SplineBasis(np.arange(-3.0, 8.0), 4)
        # the B-spline supported on [0, 4] has value 2/3 at its centre
        j = 3
        assert eval_basis(b, 2.0)[j] == pytest.approx(2 / 3, abs=1e-15)

    def test_partition_of_unity(self, basis):
        x = np.random.default_rng(1).uniform(-1, 1, 1000)
        B = basis.design(x)
        assert np.max(np.abs(B.sum(axis=1) - 1)) < 1e-12
        assert B.min() >= 0
        assert np.max(np.count_nonzero(B, axis=1)) <= 4

    def test_endpoints(self, basis):
        B = basis.design([-1.0, 1.0])
        np.testing.assert_allclose(B.sum(axis=1), 1.0)
        assert B[0, 0] == 1.0 and B[1, -1] == 1.0

    def test_out_of_range(self, basis):
        with pytest.raises(DomainError):
            eval_basis(basis, 1.5)

    @pytest.mark.parametrize("deriv", [0, 1, 2, 3])
    def test_matches_scipy(self, basis, deriv):
        x = np.linspace(-1, 1, 57)
        ref = np.column_stack([BSpline(basis.knots, np.eye(basis.K)[k], 3)(x, nu=deriv)
                               for k in range(basis.K)])
        np.testing.assert_allclose(basis.design(x, deriv), ref, atol=1e-9)

    def test_json_round_trip(self, basis):
        back = SplineBasis.from_json(basis.to_json())
        np.testing.assert_array_equal(back.knots, basis.knots)


class TestPenalty:
    def test_quadratic_is_free(self, basis):
        a = _interp_coefficients(basis, lambda x: x**2)
        assert abs(a @ basis.penalty @ a) < 1e-9

    def test_cubic_gives_72(self, basis):
        a = _interp_coefficients(basis, lambda x: x**3)
        assert a @ basis.penalty @ a == pytest.approx(72.0, rel=1e-10)

    def test_matches_quadrature_oracle(self, basis):
        a = np.random.default_rng(2).normal(size=basis.K)
        spline = BSpline(basis.knots, a, 3)
        breaks = np.unique(basis.knots)
        ref = sum(quad(lambda x: spline(x, nu=3) ** 2, lo, hi)[0] for lo, hi in zip(breaks[:-1], breaks[1:]))
        assert a @ basis.penalty @ a == pytest.approx(ref, rel=1e-10)

    def test_symmetric_psd_nullity_three(self, basis):
        S = basis.penalty
        np.testing.assert_array_equal(S, S.T)
        ev = np.linalg.eigvalsh(S)
        assert ev.min() >= -1e-10 * ev.max()
        assert np.sum(ev < 1e-9 * ev.max()) == 3

    def test_reversal_invariance(self, basis):
        flipped = SplineBasis(-basis.knots[::-1], 4)
        S, Sf = basis.penalty, flipped.penalty
        np.testing.assert_allclose(Sf, S[::-1, ::-1], rtol=1e-12, atol=1e-12 * np.abs(S).max())

    def test_second_derivative_penalty(self, basis):
        a = _interp_coefficients(basis, lambda x: x**2)
        assert a @ penalty_matrix(basis, 2) @ a == pytest.approx(8.0, rel=1e-10)

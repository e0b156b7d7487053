import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from cutiga.exceptions import InvalidArgumentError, UnknownBasisError
from cutiga.spline_basis import (
    TensorBSplineBasis,
    UniformKnotGrid1D,
    bspline_pieces,
    eval_bspline_1d,
    eval_bspline_1d_deriv,
    eval_tensor,
    local_basis_1d,
    support_box,
)


def scipy_bspline(i, p, h):
    """Independent oracle: scipy's B-spline element on knots i*h .. (i+p+1)*h."""
    return BSpline.basis_element(np.arange(i, i + p + 2) * h, extrapolate=False)


class TestOneDimensional:
    def test_hat_function_values(self):
        assert eval_bspline_1d(0, 1, 0.5) == pytest.approx(0.5)
        assert eval_bspline_1d(0, 1, 1.0) == pytest.approx(1.0)
        assert eval_bspline_1d(0, 1, 1.5) == pytest.approx(0.5)
        assert eval_bspline_1d(0, 1, 2.0) == 0.0

    def test_quadratic_at_knots(self):
        x = np.array([0.0, 1.0, 2.0, 3.0])
        np.testing.assert_allclose(eval_bspline_1d(0, 2, x), [0.0, 0.5, 0.5, 0.0], atol=1e-15)

    def test_order_zero_is_half_open_indicator(self):
        x = np.array([-1e-12, 0.0, 0.5, 1.0 - 1e-12, 1.0])
        np.testing.assert_array_equal(eval_bspline_1d(0, 0, x), [0, 1, 1, 1, 0])

    @pytest.mark.parametrize("p", [1, 2, 3, 4])
    @pytest.mark.parametrize("h", [1.0, 0.3])
    def test_matches_scipy(self, p, h):
        x = np.linspace(-0.5 * h, (p + 1.5) * h, 301)
        ref = np.nan_to_num(scipy_bspline(0, p, h)(x))
        np.testing.assert_allclose(eval_bspline_1d(0, p, x, h), ref, atol=1e-13)
        for k in range(1, p):
            refk = np.nan_to_num(scipy_bspline(0, p, h).derivative(k)(x))
            np.testing.assert_allclose(eval_bspline_1d_deriv(0, p, x, k, h), refk,
                                       atol=1e-11 * h**-k)

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_partition_of_unity(self, p):
        x = np.linspace(0.0, 5.0, 401)
        total = sum(eval_bspline_1d(i, p, x, 0.5) for i in range(-p - 1, 12))
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_knot_continuity(self, p):
        eps = 1e-11
        for knot in range(p + 2):
            for k in range(p):
                left = eval_bspline_1d_deriv(0, p, knot - eps, k)
                right = eval_bspline_1d_deriv(0, p, knot + eps, k)
                assert abs(left - right) < 1e-9

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_derivative_against_finite_differences(self, p):
        h, d = 0.2, 1e-6
        x = np.linspace(0.013, (p + 1) * h - 0.013, 37)
        x = x[np.abs(x / h - np.round(x / h)) > 1e-4]
        fd = (eval_bspline_1d(0, p, x + d, h) - eval_bspline_1d(0, p, x - d, h)) / (2 * d)
        exact = eval_bspline_1d_deriv(0, p, x, 1, h)
        assert np.max(np.abs(fd - exact)) <= 1e-6 * np.max(np.abs(exact))

    def test_translation_invariance(self):
        x = np.linspace(0, 3, 50)
        np.testing.assert_allclose(eval_bspline_1d(2, 2, x + 2.0), eval_bspline_1d(0, 2, x))

    def test_pieces_rows_sum_to_one(self):
        for p in range(6):
            t = np.linspace(0, 1, 7)
            np.testing.assert_allclose(local_basis_1d(p, t).sum(axis=1), 1.0, atol=1e-13)

    def test_derivative_beyond_order_vanishes(self):
        np.testing.assert_array_equal(bspline_pieces(2, 3), np.zeros((3, 3)))

    @pytest.mark.parametrize("bad", [(-1, 0), (2, 3), (2, -1)])
    def test_invalid_orders(self, bad):
        p, k = bad
        with pytest.raises(InvalidArgumentError):
            eval_bspline_1d_deriv(0, p, 0.5, k)

    def test_negative_order_rejected(self):
        with pytest.raises(InvalidArgumentError):
            eval_bspline_1d(0, -1, 0.5)

    def test_knot_grid(self):
        g = UniformKnotGrid1D(0.25, -2, 4)
        assert g.node(3) == 0.75
        assert 4 in g and 5 not in g
        assert len(g.nodes) == 7
        with pytest.raises(InvalidArgumentError):
            UniformKnotGrid1D(0.0, 0, 1)
        with pytest.raises(InvalidArgumentError):
            UniformKnotGrid1D(0.1, 3, 1)


@settings(max_examples=60, deadline=None)
@given(p=st.integers(1, 5), x=st.floats(-10, 10, allow_nan=False),
       h=st.floats(0.01, 2.0))
def test_partition_of_unity_property(p, x, h):
    j = int(np.floor(x / h))
    total = sum(eval_bspline_1d(i, p, x, h) for i in range(j - p, j + 1))
    assert total == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(p=st.integers(1, 4), x=st.floats(0.0, 5.0), i=st.integers(0, 3))
def test_values_nonnegative_and_bounded(p, x, i):
    v = eval_bspline_1d(i, p, x)
    assert -1e-15 <= v <= 1.0 + 1e-15


class TestTensor:
    def test_product_structure(self):
        b = TensorBSplineBasis(2, 0.5)
        pt = np.array([[0.7, 0.3]])
        v, g, H = b.evaluate((1, 0), pt)
        vx = eval_bspline_1d(1, 2, 0.7, 0.5)
        vy = eval_bspline_1d(0, 2, 0.3, 0.5)
        assert v[0] == pytest.approx(vx * vy)
        assert g[0, 0] == pytest.approx(eval_bspline_1d_deriv(1, 2, 0.7, 1, 0.5) * vy)
        assert H[0, 0, 1] == H[0, 1, 0]

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_partition_of_unity_2d(self, p):
        h = 0.25
        b = TensorBSplineBasis(p, h)
        rng = np.random.default_rng(p)
        pts = rng.uniform(0, 1, (20, 2))
        total = np.zeros(len(pts))
        for i in range(-p - 1, 6):
            for j in range(-p - 1, 6):
                total += b.evaluate((i, j), pts)[0]
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    @pytest.mark.parametrize("p", [2, 3])
    def test_gradient_and_hessian_fd(self, p):
        b = TensorBSplineBasis(p, 0.3)
        pt = np.array([0.41, 0.53])
        v, g, H = eval_tensor(b, (0, 0), pt)
        d = 1e-6
        for a in range(2):
            e = np.zeros(2)
            e[a] = d
            vp = eval_tensor(b, (0, 0), pt + e)
            vm = eval_tensor(b, (0, 0), pt - e)
            assert (vp[0] - vm[0]) / (2 * d) == pytest.approx(g[a], rel=1e-6)
            np.testing.assert_allclose((vp[1] - vm[1]) / (2 * d), H[a], rtol=1e-5, atol=1e-6)

    def test_support_box(self):
        b = TensorBSplineBasis(2, 0.5)
        np.testing.assert_allclose(support_box(b, (1, -1)), [[0.5, 2.0], [-0.5, 1.0]])

    def test_unknown_index(self):
        b = TensorBSplineBasis(2, 0.5, index_set=[(0, 0)])
        with pytest.raises(UnknownBasisError):
            b.evaluate((1, 0), [[0.1, 0.1]])
        with pytest.raises(UnknownBasisError):
            b.support_box((0, 0, 0))

    def test_one_dimensional_tensor(self):
        b = TensorBSplineBasis(2, 1.0, dim=1)
        v, g, H = b.evaluate((0,), [[1.5]])
        assert v[0] == pytest.approx(0.75)
        assert g.shape == (1, 1) and H.shape == (1, 1, 1)

    @pytest.mark.parametrize("kwargs", [dict(p=-1, h=1.0), dict(p=2, h=0.0), dict(p=2, h=1.0, dim=3)])
    def test_invalid_construction(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            TensorBSplineBasis(**kwargs)

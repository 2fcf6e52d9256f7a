import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hurst_sense.fbm_kernel import (HurstParam, QuadratureSpec, SingularPointError, c1, c2,
                                    c_norm, c_norm_integral, cell_average_kernel, dc_norm,
                                    dkernel, dkernel_l2, dkernel_l2_bound, dq_l2_error, kernel,
                                    kernel_l2, tail_bound)

H_GRID = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


class TestHurstParam:
    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.5])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(ValueError):
            HurstParam(bad)

    def test_markov_flag(self):
        assert HurstParam(0.5).is_markov
        assert not HurstParam(0.5000001).is_markov

    def test_accepted_by_functions(self):
        assert c_norm(HurstParam(0.3)) == c_norm(0.3)


class TestQuadratureSpec:
    @pytest.mark.parametrize("kw", [dict(rel_tol=0), dict(abs_tol=-1), dict(s_cut=0),
                                    dict(max_subdivisions=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            QuadratureSpec(**kw)


class TestNormalisingConstant:
    def test_half_is_one(self):
        assert abs(c_norm(0.5) - 1.0) < 1e-12

    @pytest.mark.parametrize("h", [0.3, 0.7])
    def test_closed_form_matches_integral(self, h):
        assert abs(c_norm(h) - c_norm_integral(h)) < 1e-8

    @pytest.mark.parametrize("h", [0.4, 0.5, 0.6])
    def test_derivative_matches_finite_difference(self, h):
        e = 1e-5
        fd = (c_norm(h + e) - c_norm(h - e)) / (2 * e)
        assert abs(dc_norm(h) - fd) < 1e-6

    def test_derivative_at_half(self):
        assert abs(dc_norm(0.5) - 1.0) < 1e-6

    @given(st.floats(0.02, 0.98))
    @settings(max_examples=40, deadline=None)
    def test_derivative_property(self, h):
        e = 1e-6
        fd = (c_norm(h + e) - c_norm(h - e)) / (2 * e)
        assert abs(dc_norm(h) - fd) < 1e-5 * max(1.0, abs(fd))


class TestKernel:
    def test_indicator_at_half(self):
        assert kernel(0.5, 1.0, 0.5) == 1.0
        assert kernel(0.5, 1.0, -2.0) == 0.0

    @pytest.mark.parametrize("h", [0.2, 0.5, 0.8])
    def test_vanishes_right_of_t(self, h):
        assert kernel(h, 1.0, 1.5) == 0.0

    def test_zero_time(self):
        assert np.all(kernel(0.3, 0.0, np.array([-3.0, -0.1, 0.2])) == 0.0)

    def test_vectorised(self):
        s = np.linspace(-3, 0.9, 7)
        v = kernel(0.7, 1.0, s)
        assert v.shape == s.shape
        assert all(v[i] == kernel(0.7, 1.0, s[i]) for i in range(len(s)))


class TestKernelDerivative:
    def test_values_at_half(self):
        assert abs(dkernel(0.5, 1.0, 0.5) - (1 + math.log(0.5))) < 1e-9
        assert abs(dkernel(0.5, 1.0, -1.0) - math.log(2.0)) < 1e-9
        assert dkernel(0.3, 1.0, 2.0) == 0.0

    @pytest.mark.parametrize("s", [0.0, 1.0])
    def test_singular_points(self, s):
        with pytest.raises(SingularPointError):
            dkernel(0.4, 1.0, s)

    @given(st.floats(0.05, 0.95), st.floats(0.1, 3.0), st.floats(-5.0, 3.0))
    @settings(max_examples=80, deadline=None)
    def test_matches_finite_difference(self, h, t, s):
        if min(abs(s), abs(s - t)) < 1e-3:
            return
        e = 1e-6
        fd = (kernel(min(h + e, 0.999999), t, s) - kernel(h - e, t, s)) / (2 * e)
        assert abs(dkernel(h, t, s) - fd) < 1e-5 * max(1.0, abs(fd))


class TestNormalisationIntegrals:
    def test_c1_at_zero(self):
        assert abs(c1(0.0) - 1.0) < 1e-12

    @pytest.mark.parametrize("a", [-0.2, 0.0, 0.2])
    def test_c1_times_c_squared(self, a):
        assert abs(c1(a) * c_norm(a + 0.5) ** 2 - 1.0) < 1e-8

    def test_c2_at_zero_two_ways(self):
        # int_0^inf ln^2(1 + 1/s) ds = pi^2/3 and int_0^1 ln^2(1 - s) ds = 2
        assert abs(c2(0.0) - (2 + math.pi ** 2 / 3)) < 1e-6
        fine = QuadratureSpec(rel_tol=1e-12, s_cut=400.0, max_subdivisions=1000)
        assert abs(c2(0.0, fine) - c2(0.0)) < 1e-6

    @pytest.mark.parametrize("a", [-0.5, 0.5, 0.7])
    def test_domain(self, a):
        with pytest.raises(ValueError):
            c1(a)
        with pytest.raises(ValueError):
            c2(a)


class TestKernelL2:
    def test_examples(self):
        assert abs(kernel_l2(0.7, 1.0) - 1.0) < 1e-8
        assert abs(kernel_l2(0.3, 2.0) - 2 ** 0.6) < 1e-6
        assert abs(kernel_l2(0.5, 3.0) - 3.0) < 1e-12

    @pytest.mark.parametrize("h", H_GRID)
    def test_normalisation_grid(self, h):
        for t in (0.5, 1.0, 2.0):
            assert abs(kernel_l2(h, t) - t ** (2 * h)) < 1e-6
            a = h - 0.5
            assert abs(t ** (2 * a + 1) * c1(a) * c_norm(h) ** 2 - t ** (2 * h)) < 1e-6

    def test_tail_bound_small_and_zero_at_half(self):
        assert tail_bound(0.5, 1.0) == 0.0
        assert 0 < tail_bound(0.9, 1.0) < 1.0


class TestDerivativeL2:
    @pytest.mark.parametrize("h,t", [(0.3, 0.5), (0.5, 1.0), (0.7, 2.0)])
    def test_finite_and_bounded(self, h, t):
        v = dkernel_l2(h, t)
        assert np.isfinite(v) and v > 0
        assert v <= dkernel_l2_bound(h, t) * (1 + 1e-8)

    def test_half_decreasing_ladder(self):
        vals = [dq_l2_error(0.5, 1.0, e) for e in (0.08, 0.04, 0.02)]
        assert vals[0] > vals[1] > vals[2] > 0

    def test_small_time_bound(self):
        # c t^{2H - 2 delta}(1 + ln^2 t) with delta = 0.1, c fitted at t = 1
        c = dq_l2_error(0.5, 1.0, 0.04)
        t = 0.5
        assert dq_l2_error(0.5, t, 0.04) <= 2 * c * t ** (1.0 - 0.2) * (1 + math.log(t) ** 2)

    def test_rough_case_positive(self):
        v = dq_l2_error(0.3, 1.0, 0.02)
        assert np.isfinite(v) and v > 0

    def test_eps_domain(self):
        with pytest.raises(ValueError):
            dq_l2_error(0.95, 1.0, 0.08)


class TestCellAverages:
    @pytest.mark.parametrize("h", [0.3, 0.5, 0.8])
    def test_matches_quadrature(self, h):
        from scipy import integrate
        edges = np.array([-3.0, -1.0, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0])
        t = np.array([0.0, 0.5, 1.0])
        w = cell_average_kernel(h, t, edges)
        assert np.all(w[0] == 0)
        for i, ti in enumerate(t[1:], 1):
            for j in range(len(edges) - 1):
                lo, hi = edges[j], edges[j + 1]
                pts = [p for p in (0.0, ti) if lo < p < hi]
                v, _ = integrate.quad(lambda s: kernel(h, ti, s), lo, hi, points=pts or None,
                                      limit=200)
                assert abs(w[i, j] - v / (hi - lo)) < 1e-7

    def test_derivative_is_h_derivative(self):
        edges = np.array([-5.0, -1.0, -0.1, 0.0, 0.5, 1.0])
        t = np.array([0.0, 0.5, 1.0])
        e = 1e-6
        fd = (cell_average_kernel(0.4 + e, t, edges) - cell_average_kernel(0.4 - e, t, edges)) / (2 * e)
        d = cell_average_kernel(0.4, t, edges, derivative=True)
        assert np.allclose(d, fd, atol=1e-5)

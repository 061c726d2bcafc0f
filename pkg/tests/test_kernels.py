import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from conftest import brute_kernel, brute_loo, brute_nw
from dualscore.errors import InvalidInputError
from dualscore.kernels import Kernel, kernel_eval, nw_estimate, nw_estimate_many, nw_residuals_loo

KERNELS = [Kernel.EPANECHNIKOV, Kernel.GAUSSIAN]
finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


class TestKernelEval:
    def test_epanechnikov_center(self):
        assert kernel_eval(Kernel.EPANECHNIKOV, 0.0) == 0.75

    def test_epanechnikov_boundary(self):
        assert kernel_eval(Kernel.EPANECHNIKOV, 1.0) == 0.0

    def test_gaussian_center(self):
        assert kernel_eval(Kernel.GAUSSIAN, 0.0) == pytest.approx(0.3989422804, abs=1e-10)

    def test_parse_by_name(self):
        assert Kernel.parse("Gaussian") is Kernel.GAUSSIAN
        assert kernel_eval("epanechnikov", 0.5) == pytest.approx(0.5625)

    @pytest.mark.parametrize("t", [np.nan, np.inf, -np.inf])
    def test_non_finite_rejected(self, t):
        with pytest.raises(InvalidInputError):
            kernel_eval(Kernel.GAUSSIAN, t)

    @pytest.mark.parametrize("t", [1.0001, 2.0, -3.5, 1e9])
    def test_epanechnikov_outside_support(self, t):
        assert kernel_eval(Kernel.EPANECHNIKOV, t) == 0.0

    @pytest.mark.parametrize("kernel", KERNELS)
    def test_moments(self, kernel):
        lim = 1.0 if kernel is Kernel.EPANECHNIKOV else 40.0
        f = lambda t: kernel_eval(kernel, t)  # noqa: E731
        m0 = integrate.quad(f, -lim, lim, points=[0.0])[0]
        m1 = integrate.quad(lambda t: t * f(t), -lim, lim, points=[0.0])[0]
        m2 = integrate.quad(lambda t: t * t * f(t), -lim, lim, points=[0.0])[0]
        assert m0 == pytest.approx(1.0, abs=1e-10)
        assert abs(m1) < 1e-12
        assert 0 < m2 < np.inf

    @pytest.mark.parametrize("kernel", KERNELS)
    @given(t=finite)
    def test_nonnegative_and_symmetric(self, kernel, t):
        assert kernel_eval(kernel, t) >= 0
        assert kernel_eval(kernel, t) == kernel_eval(kernel, -t)

    @pytest.mark.parametrize("kernel", KERNELS)
    def test_matches_closed_form(self, kernel):
        ts = np.linspace(-3, 3, 61)
        got = kernel_eval(kernel, ts)
        want = [brute_kernel(kernel.value, t) for t in ts]
        np.testing.assert_allclose(got, want, rtol=1e-15, atol=0)


class TestNWEstimate:
    def test_single_point(self):
        assert nw_estimate([0.3], [[5.0]], 0.3, 0.01, Kernel.EPANECHNIKOV) == pytest.approx([5.0])

    def test_symmetric_pair(self):
        out = nw_estimate([-1.0, 1.0], [[0.0], [2.0]], 0.0, 1.0, Kernel.GAUSSIAN)
        np.testing.assert_allclose(out, [1.0], rtol=1e-15)

    def test_three_point_oracle(self):
        z, t = [0.0, 0.5, 2.0], [[1.0], [3.0], [10.0]]
        want = brute_nw(z, t, 0.25, 1.0, "epanechnikov")
        np.testing.assert_allclose(nw_estimate(z, t, 0.25, 1.0, Kernel.EPANECHNIKOV), want, rtol=1e-12)
        # both inside points get weight 0.703125, the far one none
        assert want[0] == pytest.approx(2.0, rel=1e-15)

    def test_empty_input(self):
        with pytest.raises(InvalidInputError):
            nw_estimate([], [], 0.0, 1.0)

    @pytest.mark.parametrize("h", [0.0, -1.0, np.nan])
    def test_bad_bandwidth(self, h):
        with pytest.raises(InvalidInputError):
            nw_estimate([0.0, 1.0], [1.0, 2.0], 0.5, h)

    def test_empty_window_falls_back_to_mean(self):
        out, n_empty = nw_estimate_many([0.0, 1.0], [2.0, 4.0], [10.0], 0.1, return_fallbacks=True)
        assert n_empty == 1
        assert out[0] == 3.0

    @pytest.mark.parametrize("kernel", KERNELS)
    def test_random_oracle(self, kernel):
        rng = np.random.default_rng(4)
        z = rng.normal(size=40)
        t = rng.normal(size=(40, 3))
        q = rng.normal(size=15)
        got = nw_estimate_many(z, t, q, 0.7, kernel)
        for k in range(q.size):
            want = brute_nw(z, t, q[k], 0.7, kernel.value)
            if want is not None:
                np.testing.assert_allclose(got[k], want, rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("kernel", KERNELS)
    def test_huge_bandwidth_is_plain_mean(self, kernel):
        rng = np.random.default_rng(1)
        z, t = rng.random(30), rng.normal(size=(30, 2))
        np.testing.assert_allclose(nw_estimate(z, t, 0.3, 1e6, kernel), t.mean(axis=0), atol=1e-6)

    @settings(max_examples=60, deadline=None)
    @given(
        z=arrays(float, st.integers(1, 25), elements=finite),
        q=finite,
        h=st.floats(0.05, 5.0),
        kernel=st.sampled_from(KERNELS),
        seed=st.integers(0, 2**16),
    )
    def test_weights_and_range(self, z, q, h, kernel, seed):
        t = np.random.default_rng(seed).normal(size=(z.size, 2))
        w = np.array([brute_kernel(kernel.value, (zi - q) / h) for zi in z])
        est = nw_estimate(z, t, q, h, kernel)
        if w.sum() > 0:
            weights = w / w.sum()
            assert np.all(weights >= 0) and weights.sum() == pytest.approx(1.0)
            used = t[w > 0]
            assert np.all(est >= used.min(axis=0) - 1e-12)
            assert np.all(est <= used.max(axis=0) + 1e-12)
            np.testing.assert_allclose(est, weights @ t, rtol=1e-10, atol=1e-12)


class TestLOOResiduals:
    @pytest.mark.parametrize("kernel", KERNELS)
    def test_two_coincident_points(self, kernel):
        out = nw_residuals_loo([0.0, 0.0], [[1.0], [3.0]], 0.5, kernel)
        np.testing.assert_array_equal(out, [[-2.0], [2.0]])

    def test_needs_two_points(self):
        with pytest.raises(InvalidInputError):
            nw_residuals_loo([0.0], [1.0], 1.0)

    @pytest.mark.parametrize("kernel", KERNELS)
    def test_three_point_oracle(self, kernel):
        z = [0.1, -0.4, 0.35]
        t = [[1.5, -2.0], [0.25, 4.0], [3.0, 0.5]]
        np.testing.assert_allclose(nw_residuals_loo(z, t, 0.8, kernel), brute_loo(z, t, 0.8, kernel.value),
                                   rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("kernel", KERNELS)
    @pytest.mark.parametrize("h", [0.05, 0.3, 2.0])
    def test_random_oracle(self, kernel, h):
        rng = np.random.default_rng(7)
        z = rng.normal(size=50)
        t = rng.normal(size=(50, 2))
        np.testing.assert_allclose(nw_residuals_loo(z, t, h, kernel), brute_loo(z, t, h, kernel.value),
                                   rtol=1e-12, atol=1e-13)

    @pytest.mark.parametrize("kernel", KERNELS)
    def test_constant_targets(self, kernel):
        z = np.linspace(0, 1, 12)
        out = nw_residuals_loo(z, np.full(12, 4.2), 0.5, kernel)
        assert np.all(out == 0.0)

    def test_isolated_point_uses_loo_mean(self):
        out, n_empty = nw_residuals_loo([0.0, 0.01, 5.0], [1.0, 2.0, 9.0], 0.1, return_fallbacks=True)
        assert n_empty == 1
        assert out[2] == 9.0 - 1.5

    @settings(max_examples=40, deadline=None)
    @given(
        z=arrays(float, st.integers(2, 20), elements=finite),
        i=st.integers(0, 19),
        bump=st.floats(-100, 100),
        kernel=st.sampled_from(KERNELS),
    )
    def test_own_target_does_not_enter_own_mean(self, z, i, bump, kernel):
        i %= z.size
        t = np.cos(np.arange(z.size, dtype=float))
        before = t[i] - nw_residuals_loo(z, t, 0.5, kernel)[i]
        t2 = t.copy()
        t2[i] += bump
        after = t2[i] - nw_residuals_loo(z, t2, 0.5, kernel)[i]
        assert after == pytest.approx(before, abs=1e-9)

    @pytest.mark.parametrize("n", [10, 40, 500, 3000])
    def test_fast_path_agrees_with_direct(self, n):
        rng = np.random.default_rng(n)
        z = rng.normal(size=n)
        t = rng.normal(size=(n, 4))
        fast = nw_residuals_loo(z, t, 0.15, Kernel.EPANECHNIKOV, fast=True)
        direct = nw_residuals_loo(z, t, 0.15, Kernel.EPANECHNIKOV)
        np.testing.assert_allclose(fast, direct, rtol=1e-8, atol=1e-9)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abfrac.ab_operators import TimeGrid, TimeSeries, l_operator
from abfrac.exceptions import ConfigError, DomainError
from abfrac.kernels import FractionalOrder, SpatialKernelSpec
from abfrac.nonlocal_space import (
    ExtremalConstants,
    FarField,
    SampledField,
    SpaceGrid,
    discrete_symbol,
    fractional_laplacian,
    hat_tail,
    hat_weights,
    laplacian_matrix,
    pucci_minus,
    pucci_plus,
    pucci_time_minus,
    pucci_time_plus,
    second_difference,
)

SIGMAS = [0.5, 1.0, 1.5, 1.9]
# J |x|^(1/2) at x = 1, sigma = 1: mpmath quadrature of the singular integral
SQRT_ORACLE = 0.5


def gaussian_oracle(sigma):
    """``J exp(-x^2)`` at 0 from the Fourier symbol."""
    return -(2.0**sigma) * math.gamma((sigma + 1) / 2) / math.sqrt(math.pi)


def bump_field(grid, rng):
    x = grid.nodes
    c, w, a = rng.uniform(-1, 1), rng.uniform(0.5, 1.5), rng.uniform(-2, 2)
    return a * np.exp(-((x - c) ** 2) / w**2) * np.cos(rng.uniform(0, 3) * x)


class TestGrid:
    def test_nodes(self):
        g = SpaceGrid(2.0, 9)
        assert g.spacing == 0.5
        assert np.all(g.nodes == -g.nodes[::-1])
        assert g.nodes[4] == 0.0

    @pytest.mark.parametrize("n", [0, 4, 2.5])
    def test_rejects(self, n):
        with pytest.raises(DomainError):
            SpaceGrid(1.0, n)

    def test_far_field_parse(self):
        assert SpaceGrid(1.0, 5, "power_growth:0.3").far_field == FarField("power_growth", growth=0.3)
        assert FarField.parse("constant:2").value == 2.0
        with pytest.raises(ConfigError):
            FarField("reflecting")

    def test_constants(self):
        with pytest.raises(ConfigError):
            ExtremalConstants(2.0, 1.0)


class TestSecondDifference:
    def test_affine(self):
        g = SpaceGrid(2.0, 41, FarField("power_growth", value=3.0, growth=1.0))
        u = SampledField(g, 3 * g.nodes + 1)
        for h in (0.1, 0.35, 1.0):
            assert second_difference(u, 0.5, h) == pytest.approx(0.0, abs=1e-13)

    def test_quadratic(self):
        g = SpaceGrid(2.0, 41, FarField("power_growth", value=1.0, growth=2.0))
        u = SampledField(g, g.nodes**2)
        for h in (0.1, 0.37, 3.0):
            assert second_difference(u, 0.5, h) == pytest.approx(2 * h * h, rel=1e-12)

    def test_cos(self):
        assert second_difference(np.cos, 0.0, math.pi) == pytest.approx(-4.0, abs=1e-15)

    def test_leaves_grid_without_model(self):
        g = SpaceGrid(1.0, 11, None)
        u = SampledField(g, np.ones(11))
        assert second_difference(u, 0.0, 0.5) == 0.0
        with pytest.raises(DomainError):
            second_difference(u, 0.0, 2.0)


class TestFractionalLaplacian:
    @pytest.mark.parametrize("sigma", SIGMAS)
    def test_constant(self, sigma):
        g = SpaceGrid(3.0, 61, FarField("constant"))
        assert fractional_laplacian(SampledField(g, np.full(61, 2.5)), SpatialKernelSpec(sigma), 0.4) == 0.0

    @pytest.mark.parametrize("sigma", SIGMAS)
    def test_gaussian_closed_form(self, sigma):
        v = fractional_laplacian(lambda x: np.exp(-(x**2)), SpatialKernelSpec(sigma), 0.0)
        assert v == pytest.approx(gaussian_oracle(sigma), rel=1e-8)

    @pytest.mark.parametrize("sigma", SIGMAS)
    def test_gaussian_sampled(self, sigma):
        g = SpaceGrid(8.0, 321)
        v = fractional_laplacian(SampledField(g, np.exp(-g.nodes**2)), SpatialKernelSpec(sigma), 0.0, quad_tol=1e-8)
        assert v == pytest.approx(gaussian_oracle(sigma), abs=1e-6)

    def test_gaussian_dense_trapezoid(self):
        # brute force on the same sampled field: trapezoid with 2e6 panels
        sigma = 1.0
        g = SpaceGrid(8.0, 161)
        u = SampledField(g, np.exp(-g.nodes**2))
        spec = SpatialKernelSpec(sigma)
        x0 = 0.3
        h = np.linspace(0.0, 40.0, 2_000_001)[1:]
        d = u(x0 + h) + u(x0 - h) - 2 * u(x0)
        f = d * h ** (-1 - sigma)
        near = u.second_derivative(x0) * h[0] ** (2 - sigma) / (2 - sigma)
        trap = (h[1] - h[0]) * (f.sum() - 0.5 * f[0] - 0.5 * f[-1]) + near
        tail = -2 * u(x0) * 40.0 ** (-sigma) / sigma
        oracle = 2 * spec.normalization * (trap + tail)
        assert fractional_laplacian(u, spec, x0) == pytest.approx(oracle, abs=1e-6)

    @pytest.mark.parametrize("sigma", SIGMAS)
    def test_periodic_cos(self, sigma):
        g = SpaceGrid(math.pi, 129, FarField("periodic"))
        u = SampledField(g, np.cos(g.nodes))
        assert fractional_laplacian(u, SpatialKernelSpec(sigma), 0.0) == pytest.approx(-1.0, abs=1e-7)

    def test_power_growth(self):
        spec = SpatialKernelSpec(1.0)
        v = fractional_laplacian(lambda y: np.sqrt(np.abs(y)), spec, 1.0, quad_tol=1e-6)
        assert v == pytest.approx(SQRT_ORACLE, rel=1e-5)
        g = SpaceGrid(4.0, 257, FarField("power_growth", value=1.0, growth=0.5))
        u = SampledField(g, np.sqrt(np.abs(g.nodes)))
        # the spline rounds off the cusp at 0, one unit away
        assert fractional_laplacian(u, spec, 1.0, quad_tol=1e-6) == pytest.approx(SQRT_ORACLE, abs=1e-3)

    def test_growth_too_fast(self):
        g = SpaceGrid(4.0, 65, FarField("power_growth", growth=1.2))
        with pytest.raises(DomainError):
            fractional_laplacian(SampledField(g, np.abs(g.nodes) ** 1.2), SpatialKernelSpec(1.0), 0.0)

    def test_scaling(self):
        sigma, r = 1.3, 2.0
        spec = SpatialKernelSpec(sigma)
        base = fractional_laplacian(lambda x: np.exp(-(x**2)), spec, 0.0)
        scaled = fractional_laplacian(lambda x: np.exp(-((r * x) ** 2)), spec, 0.0, resolution=1 / 64)
        assert scaled == pytest.approx(r**sigma * base, rel=1e-6)

    def test_outside_grid(self):
        g = SpaceGrid(1.0, 21)
        with pytest.raises(DomainError):
            fractional_laplacian(SampledField(g, np.zeros(21)), SpatialKernelSpec(1.0), 2.0)


class TestPucci:
    K = ExtremalConstants(0.5, 2.0)

    def test_constant(self):
        g = SpaceGrid(2.0, 41, FarField("constant"))
        u = SampledField(g, np.full(41, -1.0))
        assert pucci_plus(u, 0.0, self.K, 1.0) == 0.0
        assert pucci_minus(u, 0.0, self.K, 1.0) == 0.0

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), sigma=st.sampled_from([0.5, 1.0, 1.5]), x=st.sampled_from([0.0, 0.5, -1.25]))
    def test_duality(self, seed, sigma, x):
        g = SpaceGrid(3.0, 97)
        f = bump_field(g, np.random.default_rng(seed))
        plus_neg = pucci_plus(SampledField(g, -f), x, self.K, sigma)
        minus = pucci_minus(SampledField(g, f), x, self.K, sigma)
        assert abs(plus_neg + minus) <= 1e-12 * max(1.0, abs(minus))

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), sigma=st.sampled_from([0.5, 1.0, 1.5]))
    def test_ordering(self, seed, sigma):
        g = SpaceGrid(3.0, 97)
        u = SampledField(g, bump_field(g, np.random.default_rng(seed)))
        spec = SpatialKernelSpec(sigma, lambda_=0.5, Lambda=2.0, normalization=1.2)
        # J with C in [lambda, Lambda] against the unit measure
        j = fractional_laplacian(u, spec, 0.25)
        lo = pucci_minus(u, 0.25, self.K, sigma)
        hi = pucci_plus(u, 0.25, self.K, sigma)
        assert lo - 1e-10 <= j <= hi + 1e-10

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 1.5])
    def test_collapse(self, sigma):
        g = SpaceGrid(3.0, 97)
        u = SampledField(g, bump_field(g, np.random.default_rng(5)))
        one = ExtremalConstants(1.0, 1.0)
        lin = fractional_laplacian(u, SpatialKernelSpec(sigma, normalization=1.0), 0.1)
        assert pucci_plus(u, 0.1, one, sigma) == pytest.approx(lin, abs=1e-8)
        assert pucci_minus(u, 0.1, one, sigma) == pucci_plus(u, 0.1, one, sigma)

    def test_measure_exponent(self):
        g = SpaceGrid(3.0, 97)
        u = SampledField(g, np.exp(-g.nodes**2))
        a = pucci_plus(u, 0.0, self.K, 0.6, measure_exponent="2sigma")
        b = pucci_plus(u, 0.0, self.K, 1.2)
        assert a == pytest.approx(b, rel=1e-12)
        with pytest.raises(DomainError):
            pucci_plus(u, 0.0, self.K, 1.0, measure_exponent="2sigma")
        with pytest.raises(ConfigError):
            pucci_plus(u, 0.0, self.K, 1.0, measure_exponent="3sigma")


class TestTimePucci:
    K = ExtremalConstants(0.5, 2.0)
    ORDER = FractionalOrder(0.5)

    def test_constant(self):
        g = TimeGrid(0.0, 1.0, 16)
        u = TimeSeries(g, np.full(17, 3.0), history=3.0)
        assert pucci_time_plus(u, self.ORDER, 0.7, self.K) == 0.0
        assert pucci_time_minus(u, self.ORDER, 0.7, self.K) == 0.0

    def test_nondecreasing(self):
        g = TimeGrid(0.0, 1.0, 32)
        u = TimeSeries(g, g.nodes.copy(), history=0.0)
        lu = l_operator(u, self.ORDER, 0.8)
        assert pucci_time_plus(u, self.ORDER, 0.8, self.K) == pytest.approx(2.0 * lu, rel=1e-12)
        assert pucci_time_minus(u, self.ORDER, 0.8, self.K) == pytest.approx(0.5 * lu, rel=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_duality(self, seed):
        g = TimeGrid(0.0, 1.0, 32)
        v = np.random.default_rng(seed).normal(size=33)
        t = 0.7
        plus_neg = pucci_time_plus(TimeSeries(g, -v, history=-v[0]), self.ORDER, t, self.K)
        minus = pucci_time_minus(TimeSeries(g, v, history=v[0]), self.ORDER, t, self.K)
        assert abs(plus_neg + minus) <= 1e-12 * max(1.0, abs(minus))

    def test_collapse(self):
        g = TimeGrid(0.0, 1.0, 32)
        v = np.random.default_rng(1).normal(size=33)
        u = TimeSeries(g, v, history=v[0])
        one = ExtremalConstants(1.0, 1.0)
        assert pucci_time_plus(u, self.ORDER, 0.7, one) == pytest.approx(l_operator(u, self.ORDER, 0.7), abs=1e-8)

    def test_whole_line_callable(self):
        f = lambda s: np.exp(np.minimum(s, 0.0))
        lu = l_operator(f, self.ORDER, 0.0)
        assert pucci_time_plus(f, self.ORDER, 0.0, self.K) == pytest.approx(2.0 * lu, rel=1e-10)


class TestLattice:
    @pytest.mark.parametrize("sigma", [0.3, 1.0, 1.7])
    def test_tail_consistency(self, sigma):
        w = hat_weights(sigma, 40)
        tails = hat_tail(sigma, np.arange(40))
        assert np.allclose(tails[:-1] - tails[1:], w[:-1], rtol=1e-12, atol=0)
        assert np.all(w > 0)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 1.5])
    def test_second_order(self, sigma):
        spec = SpatialKernelSpec(sigma)
        errs = []
        for n in (129, 257, 513):
            g = SpaceGrid(8.0, n)
            A, b = laplacian_matrix(g, spec)
            errs.append(abs((A @ np.exp(-g.nodes**2) + b)[n // 2] - gaussian_oracle(sigma)))
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates > 1.5)

    @pytest.mark.parametrize("kind", ["zero", "constant", "power_growth:0.4"])
    def test_m_matrix_structure(self, kind):
        A, _ = laplacian_matrix(SpaceGrid(2.0, 33, kind), SpatialKernelSpec(1.0))
        off = A - np.diag(np.diag(A))
        assert np.all(off >= 0)
        assert np.all(np.diag(A) < 0)

    def test_constant_far_field_rows(self):
        A, b = laplacian_matrix(SpaceGrid(2.0, 33, "constant"), SpatialKernelSpec(1.4))
        assert np.max(np.abs(A.sum(axis=1))) <= 1e-12 * np.max(np.abs(A))
        assert np.all(b == 0)

    def test_explicit_constant(self):
        g = SpaceGrid(2.0, 33, FarField("constant", value=1.0))
        A, b = laplacian_matrix(g, SpatialKernelSpec(1.0))
        assert np.allclose(A @ np.ones(33) + b, 0.0, atol=1e-12)

    def test_power_growth_matches_pointwise(self):
        g = SpaceGrid(4.0, 257, FarField("power_growth", value=1.0, growth=0.5))
        A, b = laplacian_matrix(g, SpatialKernelSpec(1.0))
        v = A @ np.sqrt(np.abs(g.nodes)) + b
        i = int(np.searchsorted(g.nodes, 2.0))
        assert v[i] == pytest.approx(SQRT_ORACLE / math.sqrt(2.0), abs=5e-3)

    def test_periodic_rejected(self):
        with pytest.raises(ConfigError):
            laplacian_matrix(SpaceGrid(1.0, 9, "periodic"), SpatialKernelSpec(1.0))

    def test_symbol_low_modes(self):
        xi = np.array([0.5, 1.0, 2.0])
        s = discrete_symbol(1.95, xi, 0.01)
        assert np.all(np.abs(-s / xi**1.95 - 1) <= 0.05)
        assert np.all(np.abs(-s / xi**2 - 1) <= 0.05)

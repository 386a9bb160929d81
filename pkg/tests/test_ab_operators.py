import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from abfrac.ab_operators import (
    TimeGrid,
    TimeSeries,
    ab_caputo_form,
    ab_derivative,
    ab_integral,
    discrete_l,
    discrete_l_all,
    graded_integral,
    l_operator,
    lattice_weights,
)
from abfrac.exceptions import DataError, DomainError
from abfrac.kernels import FractionalOrder, ml_kernel, ml_relaxation

HALF = FractionalOrder(0.5)

# 40-digit values: nu E_{1/2,2}(-1) and 2 nu t^2 E_{1/4,3}(c t^(1/4)) at t = 1/2
DERIV_LINEAR = 0.8696311318343497233
DERIV_QUADRATIC_QUARTER = 0.22360915289486815311
STEP_TAIL = 0.81831607883528154579


def lin(s):
    return np.asarray(s, dtype=float)


def sq(s):
    return np.asarray(s, dtype=float) ** 2


class TestTimeGrid:
    def test_nodes(self):
        g = TimeGrid(-2.0, 0.0, 7)
        assert g.tau == pytest.approx(2 / 7)
        assert g.nodes[0] == -2.0 and g.nodes[-1] == 0.0
        np.testing.assert_allclose(g.nodes, -2 + g.tau * np.arange(8), atol=1e-15)

    @pytest.mark.parametrize("args", [(1.0, 1.0, 4), (0.0, 1.0, 0), (0.0, 1.0, 2.5), (0.0, math.inf, 3)])
    def test_invalid(self, args):
        with pytest.raises(DomainError):
            TimeGrid(*args)


class TestTimeSeries:
    def test_history_and_interpolation(self):
        g = TimeGrid(0.0, 1.0, 4)
        ts = TimeSeries(g, g.nodes**2, history=-1.0)
        assert ts(-0.5) == -1.0
        assert ts(0.5) == pytest.approx(0.25)
        with pytest.raises(DataError):
            ts(1.5)

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            TimeSeries(TimeGrid(0.0, 1.0, 4), np.zeros(3))

    def test_nonfinite(self):
        with pytest.raises(DataError):
            TimeSeries(TimeGrid(0.0, 1.0, 2), [0.0, np.nan, 1.0])


class TestGradedIntegral:
    @pytest.mark.parametrize("p", [-0.9, -0.5, 0.0, 0.3])
    def test_power_weight(self, p):
        v, e = graded_integral(lambda s: np.ones_like(s), 0.0, 2.0, p)
        assert v == pytest.approx(2 ** (p + 1) / (p + 1), rel=1e-13)
        assert e < 1e-12

    def test_breaks(self):
        v, _ = graded_integral(lambda s: np.abs(s - 0.3), 0.0, 1.0, 0.0, breaks=[0.3])
        assert v == pytest.approx(0.5 * (0.09 + 0.49), rel=1e-13)


class TestDerivative:
    def test_constant(self):
        assert ab_derivative(lambda s: 5.0 + 0 * s, HALF, 0.0, 1.0) == 0.0

    def test_linear(self):
        got = ab_derivative(lin, HALF, 0.0, 1.0, du=lambda s: np.ones_like(s))
        assert got == pytest.approx(DERIV_LINEAR, abs=1e-12)

    def test_linear_finite_difference(self):
        assert ab_derivative(lin, HALF, 0.0, 1.0) == pytest.approx(DERIV_LINEAR, abs=1e-9)

    def test_classical_limit(self):
        got = ab_derivative(np.sin, FractionalOrder(0.999), 0.0, 1.0, du=np.cos)
        assert abs(got - math.cos(1.0)) <= 0.02 * math.cos(1.0)

    def test_time_order(self):
        with pytest.raises(DomainError):
            ab_derivative(lin, HALF, 1.0, 1.0)


class TestCaputoForm:
    def test_constant(self):
        assert ab_caputo_form(lambda s: 3.0 + 0 * s, HALF, 0.0, 1.0) == 0.0

    def test_agrees_with_derivative(self):
        a = ab_caputo_form(lin, HALF, 0.0, 1.0)
        b = ab_derivative(lin, HALF, 0.0, 1.0, du=lambda s: np.ones_like(s))
        assert abs(a - b) <= 1e-8

    def test_quadratic_quarter(self):
        got = ab_caputo_form(sq, FractionalOrder(0.25), 0.0, 0.5)
        assert got == pytest.approx(DERIV_QUADRATIC_QUARTER, abs=1e-10)


class TestHistoryForm:
    def test_constant(self):
        assert l_operator(lambda s: 2.0 + 0 * s, HALF, 1.0, a=0.0) == 0.0

    def test_linear_matches_caputo(self):
        got = l_operator(lambda s: np.maximum(s, 0.0), HALF, 1.0, breaks=[0.0])
        assert abs(got - ab_caputo_form(lin, HALF, 0.0, 1.0)) <= 1e-8

    def test_step_history(self):
        # u = 0 before 0 and 1 after: only the tail survives
        got = l_operator(lambda s: np.ones_like(s), HALF, 0.5, a=0.0, history=0.0)
        assert got == pytest.approx(STEP_TAIL, rel=1e-12)
        tail, _ = integrate.quad(lambda g: ml_kernel(HALF, g), 0.5, np.inf, limit=200)
        assert HALF.c_alpha * tail == pytest.approx(STEP_TAIL, rel=1e-8)

    def test_callable_history_matches_constant(self):
        a = l_operator(np.sin, HALF, 0.7, a=0.0, history=0.3)
        b = l_operator(np.sin, HALF, 0.7, a=0.0, history=lambda s: 0.3 + 0 * s)
        assert a == pytest.approx(b, abs=1e-11)

    def test_whole_line(self):
        a = l_operator(lambda s: np.where(s > 0, s, 0.0), HALF, 1.0, breaks=[0.0])
        b = l_operator(lin, HALF, 1.0, a=0.0)
        assert a == pytest.approx(b, abs=1e-10)

    def test_series_input(self):
        g = TimeGrid(0.0, 1.0, 64)
        ts = TimeSeries(g, g.nodes)
        assert l_operator(ts, HALF, 1.0) == pytest.approx(DERIV_LINEAR, abs=1e-9)

    @pytest.mark.parametrize("t0", [0.3, 0.8])
    def test_maximum_gives_nonnegative(self, t0):
        peak = lambda s: 1.0 / (1.0 + (np.asarray(s) - t0) ** 2)
        assert l_operator(peak, HALF, t0, a=0.0) >= 0.0
        assert l_operator(peak, FractionalOrder(0.2), t0) >= 0.0


@pytest.mark.parametrize("u,du", [(np.sin, np.cos), (sq, lambda s: 2 * np.asarray(s)), (lambda s: s**3 - s, lambda s: 3 * s**2 - 1)])
@pytest.mark.parametrize("alpha", [0.3, 0.7])
def test_representation_equivalence(u, du, alpha):
    order = FractionalOrder(alpha)
    d = ab_derivative(u, order, 0.0, 0.9, quad_tol=1e-9, du=du)
    c = ab_caputo_form(u, order, 0.0, 0.9, quad_tol=1e-9)
    h = l_operator(u, order, 0.9, quad_tol=1e-9, a=0.0)
    assert abs(d - c) <= 1e-6 and abs(c - h) <= 1e-6


class TestIntegral:
    def test_at_start(self):
        assert ab_integral(np.cos, HALF, 0.0, 0.0) == pytest.approx(0.5 / HALF.b_alpha)

    def test_constant_one(self):
        # (1 - a)/B + t^a / (B Gamma(a)) at t = 1
        expected = 0.5 / HALF.b_alpha + 1.0 / (HALF.b_alpha * math.gamma(0.5))
        assert ab_integral(lambda s: np.ones_like(s), HALF, 0.0, 1.0) == pytest.approx(expected, rel=1e-13)

    @pytest.mark.slow
    @pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
    def test_inverts_derivative(self, t):
        def d(y):
            return np.array([ab_derivative(np.sin, HALF, 0.0, v, du=np.cos) if v > 0 else 0.0 for v in np.atleast_1d(y)])

        assert ab_integral(d, HALF, 0.0, t, quad_tol=1e-8) == pytest.approx(math.sin(t), abs=1e-6)


class TestDiscrete:
    def test_constant(self):
        ts = TimeSeries(TimeGrid(0.0, 1.0, 16), np.full(17, 4.0))
        assert all(discrete_l(ts, HALF, k) == 0.0 for k in range(17))

    def test_first_step_literal(self):
        g = TimeGrid(0.0, 1.0, 8)
        ts = TimeSeries(g, np.arange(9.0) ** 2)
        tau = g.tau
        expected = tau**0.5 * HALF.c_alpha * ml_kernel(HALF, tau) / tau ** (-0.5) * 1.0
        assert discrete_l(ts, HALF, 1, include_history=False) == pytest.approx(expected, rel=1e-14)

    def test_history_tail_added(self):
        g = TimeGrid(0.0, 1.0, 8)
        ts = TimeSeries(g, np.arange(9.0))
        _, tails = lattice_weights(HALF, g.tau, 8)
        diff = discrete_l(ts, HALF, 3) - discrete_l(ts, HALF, 3, include_history=False)
        assert diff == pytest.approx(tails[3] * 3.0, rel=1e-14)

    def test_tail_closure(self):
        # total lattice weight tends to the continuum integral as tau -> 0
        w, tails = lattice_weights(HALF, 1e-3, 10)
        assert tails[0] > 0 and np.all(np.diff(tails) < 0)
        assert tails[0] == pytest.approx(np.sum(w) + tails[10], rel=1e-14)

    def test_index_range(self):
        ts = TimeSeries(TimeGrid(0.0, 1.0, 4), np.zeros(5))
        with pytest.raises(IndexError):
            discrete_l(ts, HALF, 5)

    def test_vector_matches_scalar(self):
        g = TimeGrid(0.0, 2.0, 40)
        ts = TimeSeries(g, np.sin(3 * g.nodes), history=0.2)
        allk = discrete_l_all(ts, HALF)
        np.testing.assert_allclose(allk, [discrete_l(ts, HALF, k) for k in range(41)], rtol=1e-12, atol=1e-14)

    def test_converges_to_continuous(self):
        exact = l_operator(lin, HALF, 1.0, a=0.0)
        gaps = []
        for kappa in (256, 512, 1024):
            g = TimeGrid(0.0, 1.0, kappa)
            gaps.append(abs(discrete_l(TimeSeries(g, g.nodes), HALF, kappa) - exact))
        assert gaps[1] <= 2e-2
        assert gaps[2] < gaps[1] < gaps[0]
        order = math.log2(gaps[1] / gaps[2])
        assert order > 0.5

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), lam=st.floats(-3, 3))
    def test_linearity(self, seed, lam):
        rng = np.random.default_rng(seed)
        g = TimeGrid(0.0, 1.0, 20)
        u, v = rng.normal(size=21), rng.normal(size=21)
        lhs = discrete_l_all(TimeSeries(g, u + lam * v), HALF)
        rhs = discrete_l_all(TimeSeries(g, u), HALF) + lam * discrete_l_all(TimeSeries(g, v), HALF)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.max(np.abs(rhs)))


def test_continuous_linearity():
    f, g = np.sin, (lambda s: np.exp(-s))
    comb = lambda s: f(s) - 2.5 * g(s)
    for op in (lambda u: ab_caputo_form(u, HALF, 0.0, 0.8), lambda u: l_operator(u, HALF, 0.8, a=0.0), lambda u: ab_integral(u, HALF, 0.0, 0.8)):
        lhs, rhs = op(comb), op(f) - 2.5 * op(g)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)


def test_relaxation_derivative_identity():
    # d/dg E_a(c g^a) = c g^(a-1) E_{a,a}(c g^a)
    g = np.linspace(0.1, 3, 12)
    h = 1e-6
    fd = (ml_relaxation(HALF, g + h) - ml_relaxation(HALF, g - h)) / (2 * h)
    np.testing.assert_allclose(fd, HALF.c * ml_kernel(HALF, g), rtol=1e-7)

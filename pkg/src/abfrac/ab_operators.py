"""Atangana-Baleanu derivative and integral: continuous and discrete forms.

Continuous operators integrate on a mesh graded geometrically toward the
evaluation time ``t``.  Each panel ``[t - 2d, t - d]`` sits at a distance
comparable to its width from the weak singularity, so fixed Gauss-Legendre
rules converge geometrically on it; the last panel touching ``t`` uses a
Gauss-Jacobi rule carrying the ``(t - s)**p`` weight.  The error estimate is
the difference between two rule orders.

The history convention is ``u(s) = u_hist`` for ``s < a``; by default
``u_hist = u(a)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator

from .exceptions import AccuracyError, DataError, DomainError
from .kernels import FractionalOrder, as_order, ml_kernel, ml_relaxation

GRADING_LEVELS = 52
RULE_HIGH = 20
RULE_LOW = 14


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = a + k tau`` with ``tau = (b - a) / kappa``."""

    a: float
    b: float
    kappa: int

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.b > self.a):
            raise DomainError(f"need finite a < b, got a={self.a}, b={self.b}")
        if int(self.kappa) != self.kappa or self.kappa < 1:
            raise DomainError(f"kappa must be a positive integer, got {self.kappa}")
        object.__setattr__(self, "kappa", int(self.kappa))

    @property
    def tau(self) -> float:
        return (self.b - self.a) / self.kappa

    @property
    def nodes(self) -> np.ndarray:
        t = self.a + self.tau * np.arange(self.kappa + 1)
        t[-1] = self.b
        return t


@dataclass
class TimeSeries:
    """Samples of ``u`` on a :class:`TimeGrid`.

    ``history`` is the value used for ``t < a`` (defaults to ``values[0]``).
    ``evaluator`` optionally supplies an exact dense representation (used by
    closed-form solvers); otherwise a monotone cubic interpolant is used.
    ``breaks`` lists the points where the dense representation is not smooth
    (only meaningful together with ``evaluator``).  ``info`` carries solver
    metadata.
    """

    grid: TimeGrid
    values: np.ndarray
    history: float | None = None
    evaluator: Callable | None = field(default=None, repr=False)
    breaks: tuple = ()
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.kappa + 1,):
            raise DataError(f"expected {self.grid.kappa + 1} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("time series contains non-finite values")
        self.values = v
        if self.history is None:
            self.history = float(v[0])
        self._interp = None

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    def interpolant(self) -> PchipInterpolator:
        if self._interp is None:
            try:
                self._interp = PchipInterpolator(self.nodes, self.values, extrapolate=False)
            except ValueError as exc:
                raise DataError(f"cannot interpolate series: {exc}") from exc
        return self._interp

    def with_values(self, values) -> "TimeSeries":
        """Copy with new samples; the dense evaluator is dropped."""
        return TimeSeries(self.grid, np.array(values, dtype=float), self.history)

    def __call__(self, t):
        tt = np.asarray(t, dtype=float)
        g = self.grid
        tol = 1e-12 * max(1.0, abs(g.b))
        if np.any(tt > g.b + tol):
            raise DataError(f"series evaluated beyond its end b={g.b}")
        inside = np.clip(tt, g.a, g.b)
        if self.evaluator is not None:
            out = np.asarray(self.evaluator(inside), dtype=float)
        else:
            out = self.interpolant()(inside)
        out = np.where(tt < g.a, self.history, out)
        return float(out) if out.ndim == 0 else out

    def derivative(self, t):
        tt = np.asarray(t, dtype=float)
        d = self.interpolant().derivative()(np.clip(tt, self.grid.a, self.grid.b))
        d = np.where(tt < self.grid.a, 0.0, d)
        return float(d) if d.ndim == 0 else d


def _vectorized(u: Callable) -> Callable:
    if isinstance(u, TimeSeries):
        return u
    try:
        probe = np.asarray(u(np.array([0.25, 0.5])), dtype=float)
        if probe.shape == (2,):
            return lambda s: np.asarray(u(s), dtype=float)
    except Exception:
        pass
    vec = np.vectorize(lambda s: float(u(s)), otypes=[float])
    return vec


@lru_cache(maxsize=None)
def _legendre(n):
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=None)
def _jacobi(n, p):
    return special.roots_jacobi(n, 0.0, p)


def graded_integral(f: Callable, lo: float, hi: float, p: float = 0.0, breaks=(), levels: int = GRADING_LEVELS):
    """``int_lo^hi f(s) (hi - s)**p ds`` for vectorized ``f``; returns ``(value, error)``.

    ``f`` may be weakly singular like ``(hi - s)**q`` with ``q > -1`` only through
    the explicit weight; ``breaks`` lists interior points where ``f`` is not smooth.
    """
    length = hi - lo
    if length <= 0.0:
        return 0.0, 0.0
    # work with distances to hi so the weight is evaluated without cancellation
    dist = length * 0.5 ** np.arange(1, levels + 1)
    inner = dist[-1]
    pts = [dist, [length]]
    br = np.asarray([hi - b for b in breaks if lo < b < hi], dtype=float)
    br = br[br > inner]
    if br.size:
        pts.append(br)
    edges = np.unique(np.concatenate(pts))
    near, far = edges[:-1], edges[1:]
    mid, half = 0.5 * (near + far), 0.5 * (far - near)
    results = []
    for n in (RULE_HIGH, RULE_LOW):
        x, w = _legendre(n)
        tau = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        vals = f(hi - tau) * tau**p
        body = float(np.sum(vals.reshape(len(mid), n) @ w * half))
        xj, wj = _jacobi(n, p)
        tau = 0.5 * inner * (1.0 + xj)
        tail = (0.5 * inner) ** (p + 1.0) * float(np.dot(wj, f(hi - tau)))
        results.append(body + tail)
    return results[0], abs(results[0] - results[1])


def _check(value, err, tol, what):
    if not math.isfinite(value) or err > max(tol, 1e-12 * abs(value)):
        raise AccuracyError(f"{what}: estimated error {err:.3g} exceeds tolerance {tol:.3g}", estimate=value, error=err)
    return value


def _breaks_of(u, extra=(), t=None):
    br = list(extra)
    if isinstance(u, TimeSeries):
        if u.evaluator is None:
            br.extend(u.nodes[1:-1].tolist())
        else:
            br.extend(u.breaks)
            # closed forms behave like (s - b)^alpha just after the start and every break
            if t is not None:
                for b in {u.grid.a, *u.breaks}:
                    if u.grid.a <= b < t:
                        br.extend((b + (t - b) * 0.5 ** np.arange(1, 45)).tolist())
    return br


def _derivative_of(u, du):
    if du is not None:
        return _vectorized(du)
    if isinstance(u, TimeSeries):
        return u.derivative
    uv = _vectorized(u)

    def central(s):
        h = 1e-5 * (1.0 + np.abs(s))
        # fourth-order central difference
        return (8 * (uv(s + h) - uv(s - h)) - (uv(s + 2 * h) - uv(s - 2 * h))) / (12 * h)

    return central


def ab_derivative(u, order, a: float, t: float, quad_tol: float = 1e-10, du=None, breaks=()) -> float:
    """``nu_alpha int_a^t E_alpha(c (t - s)^alpha) u'(s) ds``.

    ``du`` supplies ``u'``; without it a TimeSeries is differentiated through its
    interpolant and a callable by a fourth-order central difference.
    """
    order = as_order(order)
    if not t > a:
        raise DomainError(f"need t > a, got a={a}, t={t}")
    dv = _derivative_of(u, du)
    f = lambda s: ml_relaxation(order, t - s) * dv(s)
    v, e = graded_integral(f, a, t, 0.0, _breaks_of(u, breaks))
    return order.nu_alpha * _check(v, e, quad_tol / order.nu_alpha, "ab_derivative")


def ab_caputo_form(u, order, a: float, t: float, quad_tol: float = 1e-10, breaks=()) -> float:
    """``nu E_alpha(c (t-a)^alpha) (u(t) - u(a)) + c_alpha int_a^t (t-s)^(alpha-1) E_{alpha,alpha}(...) (u(t) - u(s)) ds``."""
    order = as_order(order)
    if not t > a:
        raise DomainError(f"need t > a, got a={a}, t={t}")
    uv = _vectorized(u)
    ut = float(uv(np.array([t]))[0])
    ua = float(uv(np.array([a]))[0])
    boundary = order.nu_alpha * ml_relaxation(order, t - a) * (ut - ua)
    v, e = _memory_integral(uv, order, a, t, ut, _breaks_of(u, breaks, t))
    return boundary + order.c_alpha * _check(v, e, quad_tol / order.c_alpha, "ab_caputo_form")


def _memory_integral(uv, order, lo, t, ut, breaks):
    a1 = order.alpha
    # E_{a,a}(c tau^a) is the smooth factor; the weight (t-s)^(a-1) is explicit
    from .special_functions import negative_axis_table

    table = negative_axis_table(a1, a1)
    f = lambda s: table(-order.c * (t - s) ** a1) * (ut - uv(s))
    return graded_integral(f, lo, t, a1 - 1.0, breaks)


def l_operator(u, order, t: float, quad_tol: float = 1e-10, a: float | None = None, history=None, breaks=()) -> float:
    """History form ``c_alpha int_{-inf}^t (u(t) - u(s)) T(t, s) ds``.

    Parameters
    ----------
    u : TimeSeries or callable
        Sampled or analytic function.  A TimeSeries supplies its own start and
        history value.
    a : float, optional
        Start of the explicit integration window for callables.  Without it,
        ``u`` is taken as defined on the whole past and integrated to ``-inf``.
    history : float or callable, optional
        Values for ``s < a``; a constant (default ``u(a)``) is integrated in
        closed form, a callable numerically.
    """
    order = as_order(order)
    uv = _vectorized(u)
    if isinstance(u, TimeSeries):
        a = u.grid.a if a is None else a
        history = u.history if history is None else history
    ut = float(uv(np.array([t]))[0])
    if a is None:
        return order.c_alpha * _check(*_past_integral(uv, order, t, ut, 0.0, breaks), quad_tol / order.c_alpha, "l_operator")
    if t < a:
        raise DomainError(f"t={t} precedes the start a={a}")
    if t > a:
        v, e = _memory_integral(uv, order, a, t, ut, _breaks_of(u, breaks, t))
        body = order.c_alpha * _check(v, e, quad_tol / order.c_alpha, "l_operator")
    else:
        body = 0.0
    if history is None:
        history = float(uv(np.array([a]))[0])
    if callable(history):
        hv = _vectorized(history)
        v, e = _past_integral(hv, order, t, ut, t - a, breaks)
        return body + order.c_alpha * _check(v, e, quad_tol / order.c_alpha, "l_operator history")
    # int_{t-a}^inf T = -E_alpha(c (t-a)^alpha) / c
    return body + order.nu_alpha * ml_relaxation(order, t - a) * (ut - float(history))


def _past_integral(hv, order, t, ut, start_gap, breaks):
    """``int_{start_gap}^inf (ut - h(t - g)) T(g) dg`` on doubling panels."""
    a1 = order.alpha
    total, err = 0.0, 0.0
    gap_breaks = sorted(t - b for b in breaks if t - b > start_gap)
    if start_gap == 0.0:
        # near field [0, 1] with the weak singularity
        from .special_functions import negative_axis_table

        table = negative_axis_table(a1, a1)
        f = lambda s: table(-order.c * (t - s) ** a1) * (ut - hv(s))
        v, e = graded_integral(f, t - 1.0, t, a1 - 1.0, [t - g for g in gap_breaks if g < 1.0])
        total, err = v, e
        lo = 1.0
    else:
        lo = start_gap
    x, w = _legendre(RULE_HIGH)
    xl, wl = _legendre(RULE_LOW)
    prev = None
    est_prev = None
    rest, drift = 0.0, math.inf
    # stop well before the kernel underflows; the tail is then a clean power law
    while lo < 1e80:
        hi = 2.0 * lo
        cuts = [lo] + [g for g in gap_breaks if lo < g < hi] + [hi]
        v_hi = v_lo = 0.0
        for c0, c1 in zip(cuts[:-1], cuts[1:]):
            m, h = 0.5 * (c0 + c1), 0.5 * (c1 - c0)
            g = m + h * x
            v_hi += h * float(np.dot(w, (ut - hv(t - g)) * ml_kernel(order, g)))
            g = m + h * xl
            v_lo += h * float(np.dot(wl, (ut - hv(t - g)) * ml_kernel(order, g)))
        if not math.isfinite(v_hi):
            raise AccuracyError("history integral diverges: the past values grow too fast", estimate=total, error=math.inf)
        total += v_hi
        err += abs(v_hi - v_lo)
        if prev is not None:
            if v_hi == 0.0 and prev == 0.0:
                break
            # geometric extrapolation of the remaining doubling panels
            r = abs(v_hi / prev) if prev != 0.0 else 1.0
            rest = v_hi * r / (1.0 - r) if r < 1.0 else math.inf
            if abs(rest) < 1e-16 * max(1.0, abs(total)):
                err += abs(rest)
                break
            est = total + rest
            if est_prev is not None and math.isfinite(est):
                drift = abs(est - est_prev)
            est_prev = est
        prev = v_hi
        lo = hi
    else:
        # slowly decaying tail: close it by the geometric extrapolation
        if not (math.isfinite(rest) and math.isfinite(drift)):
            raise AccuracyError("history integral does not converge", estimate=total, error=math.inf)
        total += rest
        err += drift
    return total, err


def ab_integral(u, order, a: float, t: float, quad_tol: float = 1e-10, breaks=()) -> float:
    """``(1-alpha)/B u(t) + alpha/(B Gamma(alpha)) int_a^t u(y) (t-y)^(alpha-1) dy``."""
    order = as_order(order)
    if t < a:
        raise DomainError(f"need t >= a, got a={a}, t={t}")
    uv = _vectorized(u)
    ut = float(uv(np.array([t]))[0])
    first = (1.0 - order.alpha) / order.b_alpha * ut
    if t == a:
        return first
    v, e = graded_integral(uv, a, t, order.alpha - 1.0, _breaks_of(u, breaks))
    scale = order.alpha / (order.b_alpha * math.gamma(order.alpha))
    return first + scale * _check(v, e, quad_tol / scale, "ab_integral")


@lru_cache(maxsize=32)
def _lattice(alpha: float, tau: float, n: int, pad: int = 4096):
    """Weights ``tau^a c_a w_m`` for m = 1..n and tail sums ``tau^a c_a sum_{m>k} w_m``.

    ``w_m = m^(a-1) E_{a,a}(c tau^a m^a)``; the lattice sum beyond ``n + pad`` is
    closed by the exact integral of the kernel from ``n + pad + 1/2``.
    """
    order = FractionalOrder(alpha)
    m = np.arange(1, n + pad + 1, dtype=float)
    # tau^a c_a w_m = tau c_a T(tau m)
    weights = tau * order.c_alpha * ml_kernel(order, tau * m)
    closure = order.nu_alpha * ml_relaxation(order, tau * (n + pad + 0.5))
    # tails[k] = sum_{m > k} weights[m-1] + closure, for k = 0..n
    rev = np.cumsum(weights[::-1])[::-1]
    tails = np.append(rev, 0.0)[: n + 1] + closure
    tails = tails.copy()
    tails.setflags(write=False)
    w = weights[:n].copy()
    w.setflags(write=False)
    return w, tails


def lattice_weights(order, tau: float, n: int):
    """Public accessor for ``(weights[1..n], tails[0..n])`` of the discrete operator."""
    order = as_order(order)
    return _lattice(order.alpha, float(tau), int(n))


def discrete_l(series: TimeSeries, order, k: int, include_history: bool = True) -> float:
    """Discrete history operator at node ``k``.

    ``tau^a c_a sum_{i<k} E_{a,a}(c tau^a (k-i)^a) (u_k - u_i) / (k-i)^(1-a)``.
    Nodes ``i < 0`` carry the history value; their contribution is
    ``(u_k - u_hist) * tail_k``.  With ``include_history=False`` the sum stops
    at ``i = 0``.  Sums are correctly rounded (``math.fsum``), so the result
    does not depend on summation order.
    """
    order = as_order(order)
    n = series.grid.kappa
    if int(k) != k or not 0 <= k <= n:
        raise IndexError(f"k must lie in [0, {n}], got {k}")
    k = int(k)
    w, tails = lattice_weights(order, series.grid.tau, n)
    u = series.values
    terms = [w[k - i - 1] * (u[k] - u[i]) for i in range(k - 1, -1, -1)]
    if include_history:
        terms.append(tails[k] * (u[k] - series.history))
    return math.fsum(terms)


def discrete_l_all(series: TimeSeries, order, include_history: bool = True) -> np.ndarray:
    """:func:`discrete_l` at every node (vectorized, not correctly rounded)."""
    order = as_order(order)
    n = series.grid.kappa
    w, tails = lattice_weights(order, series.grid.tau, n)
    u = series.values
    out = np.zeros(n + 1)
    for k in range(1, n + 1):
        out[k] = np.dot(w[:k], u[k] - u[k - 1 :: -1])
    if include_history:
        out += tails * (u - series.history)
    return out

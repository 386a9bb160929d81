"""Fractional ODE ``L u = -c1 u + c0 h`` with history ``u(s) = u0`` for ``s < start``.

Three solvers are available for ``c1 > 0``:

``corrected_form``
    Closed form obtained by inverting the Laplace-domain solution,
    ``u = zeta E_a(-gamma t^a) u0 + zeta (1-a) c0/B h(t)
    + a zeta^2 c0/B int (t-s)^(a-1) E_{a,a}(-gamma (t-s)^a) h(s) ds``.
``paper_form``
    Alternative closed form carrying an extra ``gamma^(-2a)`` convolution
    term.  Its residual is large; it stays available as a cross-check.
``convolution``
    Implicit time stepping of the discrete history operator.

:func:`solve_general` with ``method="auto"`` runs all three and keeps the one
with the smallest residual; the residual of every candidate is stored in
``TimeSeries.info``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .ab_operators import TimeGrid, TimeSeries, graded_integral, l_operator, lattice_weights
from .exceptions import DataError, DomainError, WrongSolverError
from .kernels import FractionalOrder, as_order
from .special_functions import MLParams, mittag_leffler, negative_axis_table

log = logging.getLogger(__name__)

METHODS = ("corrected_form", "paper_form", "convolution")


class PiecewiseConstant:
    """``h(s) = value_j`` on ``[lo_j, hi_j)``, ``default`` elsewhere."""

    def __init__(self, pieces, default: float = 0.0):
        self.pieces = [(float(lo), float(hi), float(v)) for lo, hi, v in pieces]
        for lo, hi, _ in self.pieces:
            if not hi > lo:
                raise DomainError(f"empty piece [{lo}, {hi})")
        self.default = float(default)

    @classmethod
    def constant(cls, value):
        return cls([(-math.inf, math.inf, value)])

    @classmethod
    def indicator(cls, lo, hi, height=1.0):
        return cls([(lo, hi, height)])

    @property
    def breaks(self):
        return sorted({x for lo, hi, _ in self.pieces for x in (lo, hi) if math.isfinite(x)})

    def __call__(self, s):
        ss = np.asarray(s, dtype=float)
        out = np.full(ss.shape, self.default)
        for lo, hi, v in self.pieces:
            out = np.where((ss >= lo) & (ss < hi), v, out)
        return float(out) if out.ndim == 0 else out

    def integral(self, lo, hi):
        covered = sum(max(0.0, min(b, hi) - max(a, lo)) for a, b, _ in self.pieces)
        total = self.default * (hi - lo - covered)
        for a, b, v in self.pieces:
            lo2, hi2 = max(a, lo), min(b, hi)
            if hi2 > lo2:
                total += v * (hi2 - lo2)
        return total


@dataclass(frozen=True)
class FodeProblem:
    order: FractionalOrder
    c0: float
    c1: float
    h: Callable
    u0: float = 0.0
    start: float = 0.0
    end: float = 1.0
    h_breaks: tuple = field(default=())

    def __post_init__(self):
        if not isinstance(self.order, FractionalOrder):
            object.__setattr__(self, "order", as_order(self.order))
        if not (self.c0 >= 0 and self.c1 >= 0):
            raise DomainError(f"need c0 >= 0 and c1 >= 0, got c0={self.c0}, c1={self.c1}")
        if not self.end > self.start:
            raise DomainError(f"need start < end, got [{self.start}, {self.end}]")
        if isinstance(self.h, (int, float)):
            object.__setattr__(self, "h", PiecewiseConstant.constant(self.h))
        if isinstance(self.h, PiecewiseConstant) and not self.h_breaks:
            object.__setattr__(self, "h_breaks", tuple(self.h.breaks))

    @property
    def denominator(self) -> float:
        return self.order.b_alpha + (1.0 - self.order.alpha) * self.c1

    @property
    def gamma(self) -> float:
        return self.order.alpha * self.c1 / self.denominator

    @property
    def zeta(self) -> float:
        return self.order.b_alpha / self.denominator

    def h_values(self, t):
        return np.asarray(self.h(np.asarray(t, dtype=float)), dtype=float)


def _ml_convolution(p: FodeProblem, rate: float, t) -> np.ndarray:
    """``int_start^t (t-s)^(a-1) E_{a,a}(-rate (t-s)^a) h(s) ds`` for an array of ``t``."""
    a = p.order.alpha
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(tt)
    if isinstance(p.h, PiecewiseConstant):
        # antiderivative in the gap x = t - s: x^a E_{a,a+1}(-rate x^a)
        if rate == 0.0:
            prim = lambda x: x**a / math.gamma(a + 1.0)
        else:
            table = negative_axis_table(a, a + 1.0)
            prim = lambda x: x**a * table(rate * x**a)
        for lo, hi, v in p.h.pieces:
            if v == 0.0:
                continue
            s1 = max(lo, p.start)
            s2 = np.minimum(hi, tt)
            live = s2 > s1
            if np.any(live):
                out[live] += v * (prim(tt[live] - s1) - prim(tt[live] - s2[live]))
        return out
    if rate == 0.0:
        table = None
    else:
        table = negative_axis_table(a, a)
    for i, ti in enumerate(tt):
        if ti <= p.start:
            continue
        if table is None:
            f = lambda s: p.h_values(s) / math.gamma(a)
        else:
            f = lambda s, ti=ti: p.h_values(s) * table(rate * (ti - s) ** a)
        out[i], _ = graded_integral(f, p.start, ti, a - 1.0, p.h_breaks)
    return out


def _relaxation(p: FodeProblem, rate: float, t) -> np.ndarray:
    """``E_a(-rate (t - start)^a)``."""
    table = negative_axis_table(p.order.alpha, 1.0)
    return table(rate * np.maximum(np.asarray(t, dtype=float) - p.start, 0.0) ** p.order.alpha)


def _series_from(p: FodeProblem, grid: TimeGrid, dense: Callable, method: str) -> TimeSeries:
    if abs(grid.a - p.start) > 1e-12 * max(1.0, abs(p.start)):
        raise DomainError(f"grid starts at {grid.a} but the problem starts at {p.start}")

    def evaluator(t):
        out = dense(np.atleast_1d(np.asarray(t, dtype=float)))
        return out if np.ndim(t) else float(out[0])

    values = evaluator(grid.nodes)
    if not isinstance(p.h, PiecewiseConstant):
        # each dense evaluation costs a quadrature; fall back to interpolation
        return TimeSeries(grid, values, history=p.u0, info={"method": method})
    return TimeSeries(grid, values, history=p.u0, evaluator=evaluator, breaks=tuple(p.h_breaks), info={"method": method})


def solve_c1_zero(p: FodeProblem, grid: TimeGrid) -> TimeSeries:
    """``u = u0 + (1-a) c0/B h(t) + a c0/(B Gamma(a)) int_start^t h(s) (t-s)^(a-1) ds``."""
    if p.c1 != 0:
        raise WrongSolverError("solve_c1_zero requires c1 = 0; use solve_general")
    o = p.order
    k1 = (1.0 - o.alpha) * p.c0 / o.b_alpha
    k2 = o.alpha * p.c0 / o.b_alpha

    def dense(t):
        # the rate-0 convolution already carries the 1/Gamma(a)
        return p.u0 + k1 * p.h_values(t) + k2 * _ml_convolution(p, 0.0, t)

    return _series_from(p, grid, dense, "c1_zero")


def _corrected(p: FodeProblem, grid: TimeGrid) -> TimeSeries:
    o, g, z = p.order, p.gamma, p.zeta
    k1 = z * (1.0 - o.alpha) * p.c0 / o.b_alpha
    k2 = o.alpha * z * z * p.c0 / o.b_alpha

    def dense(t):
        return z * _relaxation(p, g, t) * p.u0 + k1 * p.h_values(t) + k2 * _ml_convolution(p, g, t)

    return _series_from(p, grid, dense, "corrected_form")


def _paper(p: FodeProblem, grid: TimeGrid) -> TimeSeries:
    o, g, z = p.order, p.gamma, p.zeta
    a = o.alpha
    k = a * p.c0 * z / o.b_alpha
    g2 = g ** (-2.0 * a)
    extra = (1.0 - a) / a * g2

    def dense(t):
        conv = _ml_convolution(p, g, t) + extra * _ml_convolution(p, g2, t)
        return z * _relaxation(p, g, t) * p.u0 + k * conv

    return _series_from(p, grid, dense, "paper_form")


def _convolution(p: FodeProblem, grid: TimeGrid) -> TimeSeries:
    """Implicit stepping of ``discrete_l(u)_k = -c1 u_k + c0 h_k``."""
    n = grid.kappa
    w, tails = lattice_weights(p.order, grid.tau, n)
    h = p.h_values(grid.nodes)
    u = np.empty(n + 1)
    for k in range(n + 1):
        diag = tails[k] + (np.sum(w[:k]) if k else 0.0) + p.c1
        rhs = tails[k] * p.u0 + p.c0 * h[k]
        if k:
            rhs += np.dot(w[:k], u[k - 1 :: -1])
        u[k] = rhs / diag
    return TimeSeries(grid, u, history=p.u0, info={"method": "convolution"})


def fode_residual(u: TimeSeries, p: FodeProblem, quad_tol: float = 1e-9, nodes=None) -> np.ndarray:
    """``r_k = L u(t_k) + c1 u(t_k) - c0 h(t_k)`` with the history value ``p.u0``.

    ``u`` is evaluated through its dense evaluator when present, otherwise
    through a monotone cubic interpolant.  ``nodes`` restricts the check to a
    subset of node indices.
    """
    if u.grid.kappa < 1:
        raise DataError("series too short for a residual")
    if u.history != p.u0:
        u = TimeSeries(u.grid, u.values, history=p.u0, evaluator=u.evaluator, breaks=u.breaks, info=u.info)
    t = u.grid.nodes
    idx = range(len(t)) if nodes is None else nodes
    h = p.h_values(t)
    res = []
    for k in idx:
        lu = l_operator(u, p.order, float(t[k]), quad_tol=quad_tol, breaks=p.h_breaks)
        res.append(lu + p.c1 * u.values[k] - p.c0 * h[k])
    return np.asarray(res)


def solve_general(p: FodeProblem, grid: TimeGrid, method: str = "auto", quad_tol: float = 1e-9, tol: float = 1e-4) -> TimeSeries:
    """Solve for ``c1 > 0``.

    ``method`` is one of ``corrected_form``, ``paper_form``, ``convolution`` or
    ``auto``.  In ``auto`` mode every candidate's residual is measured on up
    to 33 nodes and the smallest wins; a candidate whose residual exceeds
    ``tol`` is logged.
    """
    if not p.c1 > 0:
        raise WrongSolverError("solve_general requires c1 > 0; use solve_c1_zero")
    builders = {"corrected_form": _corrected, "paper_form": _paper, "convolution": _convolution}
    if method != "auto":
        if method not in builders:
            raise DomainError(f"unknown method {method!r}; expected auto or one of {METHODS}")
        return builders[method](p, grid)
    stride = max(1, grid.kappa // 32)
    sub = list(range(0, grid.kappa + 1, stride))
    candidates = {}
    for name in METHODS:
        series = builders[name](p, grid)
        r = fode_residual(series, p, quad_tol=quad_tol, nodes=sub)
        candidates[name] = (float(np.max(np.abs(r))), series)
    best = min(candidates, key=lambda k: candidates[k][0])
    residuals = {k: v[0] for k, v in candidates.items()}
    for name, r in residuals.items():
        if r > tol:
            log.info("solver %s residual %.3g exceeds %.1g (best: %s, %.3g)", name, r, tol, best, residuals[best])
    chosen = candidates[best][1]
    chosen.info.update({"method": best, "residuals": residuals})
    return chosen


def corollary_floor(order, c0: float, c1: float, mu: float) -> float:
    """``(a/2) E_{a,a}(-2 c1) c0 mu``."""
    order = as_order(order)
    if not (c0 > 0 and c1 > 0):
        raise DomainError(f"need c0 > 0 and c1 > 0, got c0={c0}, c1={c1}")
    if mu < 0:
        raise DomainError(f"need mu >= 0, got {mu}")
    a = order.alpha
    return 0.5 * a * float(mittag_leffler(MLParams(a, a), -2.0 * c1)) * c0 * mu


class FloorCheck(NamedTuple):
    floor: float
    minimum: float
    holds: bool


def corollary_check(order, c0: float, c1: float, mu: float, h=None, kappa: int = 128) -> FloorCheck:
    """Solve with ``g(-2) = 0`` on ``[-2, 0]`` and compare ``min_{[-1,0]} g`` with the floor.

    ``h`` defaults to ``mu`` times the indicator of ``[-2, -1]``.
    """
    order = as_order(order)
    floor = corollary_floor(order, c0, c1, mu)
    if h is None:
        h = PiecewiseConstant.indicator(-2.0, -1.0, mu)
    if isinstance(h, PiecewiseConstant) and h.integral(-2.0, -1.0) < mu * (1 - 1e-12):
        raise DomainError("forcing does not satisfy int_{-2}^{-1} h >= mu")
    p = FodeProblem(order, c0, c1, h, u0=0.0, start=-2.0, end=0.0)
    grid = TimeGrid(-2.0, 0.0, kappa)
    g = _corrected(p, grid)
    t = grid.nodes
    tail = t >= -1.0
    minimum = float(np.min(g.values[tail]))
    return FloorCheck(floor, minimum, bool(minimum >= floor))


def barrier_radius(order, sigma: float) -> float:
    return min(0.25, 4.0 ** (-as_order(order).alpha / (2.0 * sigma)))


def barrier_eval(t, nu: float, r: float):
    """``max(2 |r t|^nu - 1, 0)``."""
    out = np.maximum(2.0 * np.abs(r * np.asarray(t, dtype=float)) ** nu - 1.0, 0.0)
    return float(out) if np.ndim(out) == 0 else out


class BarrierBound(NamedTuple):
    lower: float
    value: float
    holds: bool
    d_emp: float


def barrier_l_bound(order, nu: float, sigma: float, t1: float, quad_tol: float = 1e-8, grid=None) -> BarrierBound:
    """``L rho(t1)`` for the barrier with ``r = min(1/4, 4^(-a/(2 sigma)))``.

    ``d_emp = -min L rho`` over ``grid`` (default: 41 points in ``[-4, 0]``
    plus ``t1``); ``lower = -d_emp``.
    """
    order = as_order(order)
    if not 0 < nu < order.alpha:
        raise DomainError(f"need 0 < nu < alpha, got nu={nu}, alpha={order.alpha}")
    if t1 > 0:
        raise DomainError(f"need t1 <= 0, got {t1}")
    r = barrier_radius(order, sigma)
    kink = -(0.5 ** (1.0 / nu)) / r
    rho = lambda s: barrier_eval(s, nu, r)

    def lrho(t):
        return l_operator(rho, order, t, quad_tol=quad_tol, breaks=[kink])

    pts = np.linspace(-4.0, 0.0, 41) if grid is None else np.asarray(grid, dtype=float)
    values = [lrho(float(t)) for t in pts]
    value = lrho(float(t1))
    d_emp = -min([*values, value])
    holds = bool(value <= quad_tol and value >= -d_emp)
    return BarrierBound(-d_emp, value, holds, d_emp)

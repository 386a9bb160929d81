"""Second differences, the 1-D fractional Laplacian and Pucci extremal operators.

The spatial operator is ``J u(x) = int delta_h u(x) K(h) dh`` with
``delta_h u(x) = u(x+h) + u(x-h) - 2u(x)`` and ``K(h) = C |h|^(-1-sigma)``.
With the calibrated ``C`` this equals ``-(-Delta)^(sigma/2) u``, so ``J`` is
nonpositive at a maximum.

Fields are sampled on a symmetric grid and extended beyond it by an explicit
far-field model.  Pointwise evaluation interpolates with a quintic spline; the
solver uses the matrix from :func:`laplacian_matrix`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import interpolate, optimize, special

from .ab_operators import TimeSeries, _legendre, _vectorized, l_operator
from .exceptions import AccuracyError, ConfigError, DomainError
from .kernels import SpatialKernelSpec, as_order, fractional_laplacian_constant

FAR_FIELD_KINDS = ("zero", "constant", "power_growth", "periodic")
NEAR_FIELD_CELLS = 3
MEASURE_EXPONENTS = ("sigma", "2sigma")
# quintic: the near field needs u'' to O(dx^4)
SPLINE_DEGREE = 5


@dataclass(frozen=True)
class FarField:
    """Values of a sampled field for ``|x| > L``.

    ``zero``
        ``u = 0``.
    ``constant``
        ``u = value`` on both sides, or the boundary value of each side when
        ``value`` is None.
    ``power_growth``
        ``u(x) = u(+-L) (|x| / L)^growth``, or ``value |x|^growth``.
    ``periodic``
        Period ``2L``; the end values must agree.
    """

    kind: str = "zero"
    value: float | None = None
    growth: float = 0.0

    def __post_init__(self):
        if self.kind not in FAR_FIELD_KINDS:
            raise ConfigError(f"unknown far-field model {self.kind!r}; expected one of {FAR_FIELD_KINDS}")
        if self.kind == "power_growth" and not self.growth > 0:
            raise ConfigError(f"power_growth needs a positive growth exponent, got {self.growth}")

    @classmethod
    def parse(cls, text: str) -> "FarField":
        """``zero``, ``constant``, ``constant:V``, ``power_growth:NU``, ``periodic``."""
        kind, _, arg = str(text).partition(":")
        if kind == "power_growth":
            return cls(kind, growth=float(arg))
        if kind == "constant" and arg:
            return cls(kind, value=float(arg))
        return cls(kind)


@dataclass(frozen=True)
class SpaceGrid:
    half_width: float
    n_points: int
    far_field: FarField | None = FarField()

    def __post_init__(self):
        if not (math.isfinite(self.half_width) and self.half_width > 0):
            raise DomainError(f"half_width must be positive, got {self.half_width}")
        if int(self.n_points) != self.n_points or self.n_points < 1 or self.n_points % 2 == 0:
            raise DomainError(f"n_points must be a positive odd integer, got {self.n_points}")
        object.__setattr__(self, "n_points", int(self.n_points))
        if isinstance(self.far_field, str):
            object.__setattr__(self, "far_field", FarField.parse(self.far_field))

    @property
    def spacing(self) -> float:
        if self.n_points == 1:
            return 2.0 * self.half_width
        return 2.0 * self.half_width / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        if self.n_points == 1:
            return np.zeros(1)
        x = np.linspace(-self.half_width, self.half_width, self.n_points)
        # exact symmetry about 0
        return 0.5 * (x - x[::-1])


@dataclass(frozen=True)
class ExtremalConstants:
    lambda_: float
    Lambda: float

    def __post_init__(self):
        if not (0 < self.lambda_ <= self.Lambda < math.inf):
            raise ConfigError(f"need 0 < lambda <= Lambda, got {self.lambda_}, {self.Lambda}")

    def weigh(self, d, plus: bool = True):
        """``Lambda d_+ - lambda d_-`` (plus) or ``lambda d_+ - Lambda d_-`` (minus)."""
        hi, lo = (self.Lambda, self.lambda_) if plus else (self.lambda_, self.Lambda)
        d = np.asarray(d, dtype=float)
        return hi * np.maximum(d, 0.0) - lo * np.maximum(-d, 0.0)


class SampledField:
    """Grid values with a quintic-spline interpolant and the grid's far-field model."""

    def __init__(self, grid: SpaceGrid, values):
        v = np.asarray(values, dtype=float)
        if v.shape != (grid.n_points,):
            raise DomainError(f"expected {grid.n_points} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        self.grid, self.values = grid, v
        # interpolate deviations from the centre value so constants stay exact
        self._offset = float(v[grid.n_points // 2])
        dev = v - self._offset
        ff = grid.far_field
        if grid.n_points < 7:
            self._spline = None
        elif ff is not None and ff.kind == "periodic":
            if abs(v[0] - v[-1]) > 1e-12 * max(1.0, np.max(np.abs(v))):
                raise DomainError("a periodic field needs equal end values")
            dev[-1] = dev[0]
            self._spline = interpolate.make_interp_spline(grid.nodes, dev, k=SPLINE_DEGREE, bc_type="periodic")
        else:
            self._spline = interpolate.make_interp_spline(grid.nodes, dev, k=SPLINE_DEGREE)

    @property
    def far_field(self):
        return self.grid.far_field

    def _inside(self, y):
        if self._spline is None:
            return np.interp(y, self.grid.nodes, self.values)
        return self._offset + self._spline(y)

    def outside_value(self, y):
        """Far-field value at points with ``|y| > L``."""
        ff, L = self.far_field, self.grid.half_width
        y = np.asarray(y, dtype=float)
        if ff is None:
            raise DomainError("the field has no far-field model and the stencil leaves the grid")
        if ff.kind == "zero":
            return np.zeros_like(y)
        side = np.where(y > 0, self.values[-1], self.values[0])
        if ff.kind == "constant":
            return np.full_like(y, ff.value) if ff.value is not None else side
        if ff.kind == "power_growth":
            if ff.value is not None:
                return ff.value * np.abs(y) ** ff.growth
            return side * (np.abs(y) / L) ** ff.growth
        period = 2.0 * L
        return self._inside((y + L) % period - L)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        L = self.grid.half_width
        # a hair of slack so that x +- h landing on +-L stays inside
        tol = 1e-12 * L
        inside = np.abs(y) <= L + tol
        out = np.empty(y.shape)
        if np.any(inside):
            out[inside] = self._inside(np.clip(y[inside], -L, L))
        if np.any(~inside):
            out[~inside] = self.outside_value(y[~inside])
        return float(out) if out.ndim == 0 else out

    def second_derivative(self, x: float) -> float:
        if self._spline is None:
            return 0.0
        return float(self._spline(x, nu=2))


def second_difference(u, x: float, h: float) -> float:
    """``delta_h u(x) = u(x+h) + u(x-h) - 2 u(x)``."""
    f = u if isinstance(u, SampledField) else _vectorized(u)
    pts = np.array([x + h, x - h, x], dtype=float)
    vals = np.asarray(f(pts), dtype=float)
    return float(vals[0] + vals[1] - 2.0 * vals[2])


# ---------------------------------------------------------------------------
# quadrature of int_0^inf P(delta_h u(x)) h^(-1-s) dh


def _cells(g, edges, split: Callable | None = None, n_hi: int = 10, n_lo: int = 7):
    """Composite Gauss-Legendre over consecutive ``edges``; returns (value, err).

    With ``split`` (a signed function of ``h``) cells in which it changes sign
    are cut at the root, so that a kink of ``g`` sits on a cell edge.
    """
    e = np.unique(np.asarray(edges, dtype=float))
    if e.size < 2:
        return 0.0, 0.0
    if split is not None:
        e = _cut_at_roots(split, e)
    a, b = e[:-1], e[1:]
    m, r = 0.5 * (a + b), 0.5 * (b - a)
    out = []
    for n in (n_hi, n_lo):
        x, w = _legendre(n)
        h = m[:, None] + r[:, None] * x[None, :]
        vals = np.asarray(g(h.ravel()), dtype=float).reshape(h.shape)
        out.append(float(np.sum(r * (vals @ w))))
    if not math.isfinite(out[0]):
        raise AccuracyError("non-finite integrand in the spatial quadrature", estimate=out[0], error=math.inf)
    return out[0], abs(out[0] - out[1])


def _cut_at_roots(d, edges, probes: int = 8):
    t = np.linspace(0.0, 1.0, probes + 1)
    a, b = edges[:-1], edges[1:]
    pts = a[:, None] + (b - a)[:, None] * t[None, :]
    vals = np.asarray(d(pts.ravel()), dtype=float).reshape(pts.shape)
    cuts = []
    for i, j in zip(*np.nonzero(vals[:, :-1] * vals[:, 1:] < 0)):
        cuts.append(optimize.brentq(d, pts[i, j], pts[i, j + 1], xtol=1e-15, rtol=1e-15))
    return np.unique(np.concatenate([edges, cuts])) if cuts else edges


def _geometric(lo: float, hi: float) -> np.ndarray:
    """Edges ``hi 2^-k`` down to (and including) ``lo``."""
    k = max(1, math.ceil(math.log2(hi / lo)))
    return np.concatenate([[lo], hi * 0.5 ** np.arange(k - 1, -1, -1)])


def _doubling_tail(g, start: float, tol: float, what: str, cells: int = 8, max_doublings: int = 400):
    """``int_start^inf g`` on doubling panels closed by geometric extrapolation."""
    total, err = 0.0, 0.0
    prev = est_prev = None
    lo = start
    for _ in range(max_doublings):
        v, e = _cells(g, np.linspace(lo, 2.0 * lo, cells + 1))
        total += v
        err += e
        if prev is not None:
            if v == 0.0 and prev == 0.0:
                return total, err
            r = abs(v / prev) if prev != 0.0 else 1.0
            rest = v * r / (1.0 - r) if r < 1.0 else math.inf
            est = total + rest
            if est_prev is not None and math.isfinite(est) and abs(est - est_prev) <= 1e-3 * tol:
                return est, err + abs(est - est_prev)
            est_prev = est
        prev = v
        lo *= 2.0
    raise AccuracyError(f"{what}: far-field integral did not settle", estimate=total, error=math.inf)


class _Layout:
    """Near-field radius and knots, mid-field cell edges and the tail closure."""

    def __init__(self, h0, h_lo, near_knots, mid_edges, tail):
        self.h0, self.h_lo, self.mid_edges, self.tail = h0, h_lo, mid_edges, tail
        self.near_knots = np.asarray([k for k in near_knots if h_lo < k < h0], dtype=float)

    def near_edges(self):
        first = self.near_knots.min() if self.near_knots.size else self.h0
        return np.concatenate([_geometric(self.h_lo, first), self.near_knots, [self.h0]])


def _no_far_field(g_delta, P):
    raise DomainError("the field has no far-field model and the stencil leaves the grid")


def _sampled_layout(u: SampledField, x: float, s: float, tol: float, what: str):
    grid, ff = u.grid, u.far_field
    L, dx = grid.half_width, grid.spacing
    if abs(x) > L * (1 + 1e-12):
        raise DomainError(f"x={x} lies outside the grid [-{L}, {L}]")
    nodes = grid.nodes
    h0, h_lo = NEAR_FIELD_CELLS * dx, 1e-2 * dx
    if ff is not None and ff.kind == "periodic":
        period = 2.0 * L
        knots = np.concatenate([(nodes - x) % period, (x - nodes) % period, [0.0, period]])
        knots = np.unique(knots[(knots >= 0) & (knots <= period)])
        mid = np.concatenate([[h0], knots[(knots > h0) & (knots < period)], [period]])

        def tail(g_delta, P):
            # all later periods at once: Hurwitz zeta weights on one period
            w = lambda sh: P(g_delta(sh)) * period ** (-1.0 - s) * special.zeta(1.0 + s, 1.0 + sh / period)
            return _cells(w, knots, split=None if P is _linear else g_delta)

        return _Layout(h0, h_lo, knots, mid, tail)
    far = max(L - x, L + x)
    knots = np.unique(np.concatenate([np.abs(nodes - x), [L - x, L + x]]))
    mid = np.concatenate([[h0], knots[(knots > h0) & (knots < far)], [far]]) if far > h0 else np.array([])
    start = max(far, h0)
    if ff is None:
        return _Layout(h0, h_lo, knots, mid, _no_far_field)
    if ff.kind in ("zero", "constant"):
        def tail(g_delta, P):
            # x + h and x - h both lie outside: delta is constant
            d_inf = float(P(g_delta(np.array([start + far + 1.0])))[0])
            return d_inf * start ** (-s) / s, 0.0

        if far < h0:
            raise DomainError("grid too coarse: fewer than three cells on either side")
        return _Layout(h0, h_lo, knots, mid, tail)
    if ff.growth >= s:
        raise DomainError(f"far-field growth {ff.growth} >= {s}: the integral diverges")

    def tail(g_delta, P):
        g = lambda h: P(g_delta(h)) * h ** (-1.0 - s)
        return _doubling_tail(g, start, tol, what)

    return _Layout(h0, h_lo, knots, mid, tail)


def _callable_layout(resolution: float, s: float, tol: float, what: str, reach: float):
    h0 = NEAR_FIELD_CELLS * resolution
    mid = np.arange(h0, reach + 0.5 * resolution, resolution)

    def tail(g_delta, P):
        g = lambda h: P(g_delta(h)) * h ** (-1.0 - s)
        return _doubling_tail(g, mid[-1], tol, what, cells=16)

    return _Layout(h0, 1e-2 * resolution, resolution * np.arange(1, NEAR_FIELD_CELLS), mid, tail)


def _linear(d):
    return np.asarray(d, dtype=float)


def _fd_second_derivative(f, x, step):
    """Richardson-extrapolated central second difference."""
    pts = np.array([x - 2 * step, x - step, x, x + step, x + 2 * step])
    v = np.asarray(f(pts), dtype=float)
    d1 = (v[1] + v[3] - 2 * v[2]) / step**2
    d2 = (v[0] + v[4] - 2 * v[2]) / (4 * step**2)
    return (4.0 * d1 - d2) / 3.0


def _second_difference_integral(u, x, s, P, tol, what, d2u=None, resolution=None, reach=8.0):
    """``2 int_0^inf P(delta_h u(x)) h^(-1-s) dh`` for ``0 < s < 2``.

    ``P`` is positively homogeneous, so the Taylor term ``P(u'' h^2)`` equals
    ``h^2 P(u'')`` and the near field is compensated in closed form.
    """
    if not 0.0 < s < 2.0:
        raise DomainError(f"measure exponent must lie in (0, 2), got {s}")
    x = float(x)
    if isinstance(u, SampledField):
        f = u
        lay = _sampled_layout(u, x, s, tol, what)
        d2 = u.second_derivative(x) if d2u is None else float(d2u)
    else:
        f = _vectorized(u)
        res = 1.0 / 32.0 if resolution is None else float(resolution)
        lay = _callable_layout(res, s, tol, what, max(reach, 4 * NEAR_FIELD_CELLS * res))
        d2 = _fd_second_derivative(f, x, 1e-2) if d2u is None else float(d2u)
    ux = float(np.asarray(f(np.array([x])))[0])

    def delta(h):
        h = np.asarray(h, dtype=float)
        return f(x + h) + f(x - h) - 2.0 * ux

    split = None if P is _linear else delta
    p_d2 = float(P(np.array([d2]))[0])
    near = p_d2 * lay.h0 ** (2.0 - s) / (2.0 - s)
    comp = lambda h: (P(delta(h)) - p_d2 * h * h) * h ** (-1.0 - s)
    v1, e1 = _cells(comp, lay.near_edges(), split=split)
    g = lambda h: P(delta(h)) * h ** (-1.0 - s)
    v2, e2 = _cells(g, lay.mid_edges, split=split)
    v3, e3 = lay.tail(delta, P)
    total = 2.0 * (near + v1 + v2 + v3)
    err = 2.0 * (e1 + e2 + e3)
    # rounding in delta near h_lo sets a floor on what the estimate can mean
    floor = 1e-13 * max(abs(total), abs(ux) * lay.h_lo ** (-s))
    if not math.isfinite(total) or err > max(tol, floor):
        raise AccuracyError(f"{what}: estimated error {err:.3g} exceeds tolerance {tol:.3g}", estimate=total, error=err)
    return total


def _measure_exponent(sigma: float, measure_exponent: str) -> float:
    if measure_exponent not in MEASURE_EXPONENTS:
        raise ConfigError(f"measure_exponent must be one of {MEASURE_EXPONENTS}, got {measure_exponent!r}")
    return sigma if measure_exponent == "sigma" else 2.0 * sigma


def fractional_laplacian(u, spec: SpatialKernelSpec, x: float, quad_tol: float = 1e-10, d2u=None, resolution=None) -> float:
    """``J u(x) = int delta_h u(x) C |h|^(-1-sigma) dh`` in one dimension.

    ``u`` is a :class:`SampledField` (spline inside the grid, far-field model
    outside) or a callable on the whole line.  A callable must be bounded and
    settle at infinity; ``resolution`` sets its quadrature cell size and
    ``d2u`` may supply ``u''(x)`` instead of a finite-difference estimate.
    """
    if spec.dim != 1:
        raise ConfigError("fractional_laplacian is implemented for dim = 1")
    v = _second_difference_integral(u, x, spec.sigma, _linear, quad_tol / spec.normalization, "fractional_laplacian", d2u, resolution)
    return spec.normalization * v


def _pucci(u, x, constants, sigma, quad_tol, measure_exponent, plus, d2u=None, resolution=None):
    s = _measure_exponent(sigma, measure_exponent)
    P = lambda d: constants.weigh(d, plus)
    name = "pucci_plus" if plus else "pucci_minus"
    return _second_difference_integral(u, x, s, P, quad_tol, name, d2u, resolution)


def pucci_plus(u, x: float, constants: ExtremalConstants, sigma: float, quad_tol: float = 1e-10, measure_exponent: str = "sigma", **kw) -> float:
    """``int (Lambda (delta_h u)_+ - lambda (delta_h u)_-) |h|^(-1-s) dh`` with ``s`` from ``measure_exponent``."""
    return _pucci(u, x, constants, sigma, quad_tol, measure_exponent, True, **kw)


def pucci_minus(u, x: float, constants: ExtremalConstants, sigma: float, quad_tol: float = 1e-10, measure_exponent: str = "sigma", **kw) -> float:
    """``int (lambda (delta_h u)_+ - Lambda (delta_h u)_-) |h|^(-1-s) dh``."""
    return _pucci(u, x, constants, sigma, quad_tol, measure_exponent, False, **kw)


# ---------------------------------------------------------------------------
# time extremal operators


def _crossings(u: TimeSeries, level: float, t: float):
    """Points in ``(a, t)`` where the series interpolant crosses ``level``."""
    nodes, vals = u.grid.nodes, u.values
    f = u.interpolant() if u.evaluator is None else _vectorized(u.evaluator)
    out = []
    for j in np.nonzero((vals[:-1] - level) * (vals[1:] - level) < 0)[0]:
        lo, hi = nodes[j], min(nodes[j + 1], t)
        if hi <= lo:
            continue
        flo, fhi = float(f(lo)) - level, float(f(hi)) - level
        if flo * fhi < 0:
            out.append(optimize.brentq(lambda s: float(f(s)) - level, lo, hi, xtol=1e-15))
    return out


def _pucci_time(u, order, t, constants, quad_tol, plus):
    order = as_order(order)
    P = lambda d: constants.weigh(d, plus)
    if not isinstance(u, TimeSeries):
        uv = _vectorized(u)
        ut = float(uv(np.array([t]))[0])
        # ut - v(s) = P(ut - u(s)), and L v carries the weights
        v = lambda s: ut - P(ut - uv(s))
        return l_operator(v, order, t, quad_tol=quad_tol)
    ut = float(u(t))
    base = u.interpolant() if u.evaluator is None else _vectorized(u.evaluator)

    def v_eval(s):
        return ut - P(ut - np.asarray(base(s), dtype=float))

    hist = u.history
    if callable(hist):
        hv = _vectorized(hist)
        hist_v = lambda s: ut - P(ut - hv(s))
    else:
        hist_v = float(ut - P(ut - float(hist)))
    breaks = list(u.breaks) + _crossings(u, ut, t)
    if u.evaluator is None:
        breaks += u.grid.nodes[1:-1].tolist()
    vs = TimeSeries(u.grid, v_eval(u.grid.nodes), history=hist_v, evaluator=v_eval, breaks=tuple(sorted(breaks)))
    return l_operator(vs, order, t, quad_tol=quad_tol)


def pucci_time_plus(u, order, t: float, constants: ExtremalConstants, quad_tol: float = 1e-8) -> float:
    """``c_alpha int_{-inf}^t [Lambda (u(t)-u(s))_+ - lambda (u(t)-u(s))_-] T(t, s) ds``.

    The history convention of :func:`l_operator` applies.
    """
    return _pucci_time(u, order, t, constants, quad_tol, True)


def pucci_time_minus(u, order, t: float, constants: ExtremalConstants, quad_tol: float = 1e-8) -> float:
    """As :func:`pucci_time_plus` with ``lambda`` and ``Lambda`` swapped."""
    return _pucci_time(u, order, t, constants, quad_tol, False)


# ---------------------------------------------------------------------------
# lattice operator


SERIES_FROM = 8
SERIES_TERMS = 12


def _hat_moment(sigma, m):
    """``int phi_m(h) h^(1-sigma) dh`` for the unit hat ``phi_m`` centred at ``m >= 1``."""
    p = 2.0 - sigma

    def j0(a, b):
        return (b**p - a**p) / p

    def j1(a, b):
        return (b ** (p + 1) - a ** (p + 1)) / (p + 1)

    return (j1(m - 1.0, m) - (m - 1.0) * j0(m - 1.0, m)) + ((m + 1.0) * j0(m, m + 1.0) - j1(m, m + 1.0))


def _moment_series(sigma):
    """``c_k`` with ``W_m = sum_k c_k m^(-1-sigma-2k)`` for ``m >= 2``.

    From ``int_{-1}^{1} (1-|t|) (m+t)^p dt`` expanded in ``t/m``.
    """
    k = 2 * np.arange(SERIES_TERMS)
    return special.binom(1.0 - sigma, k) * 2.0 / ((k + 1.0) * (k + 2.0))


def hat_weights(sigma: float, m_max: int) -> np.ndarray:
    """Unit-spacing weights ``W_m``, ``m = 1..m_max``, of the lattice operator.

    ``delta_h u / h^2`` is interpolated by hats on ``h = m dx`` (its value at
    ``h = 0`` by the centred second difference), so
    ``W_m = int phi_m(h) h^(1-sigma) dh / m^2`` with the half hat at ``h = 0``
    folded into ``W_1``.
    """
    m = np.arange(1, m_max + 1, dtype=float)
    w = np.empty(m_max)
    small = m < SERIES_FROM
    w[small] = _hat_moment(sigma, m[small]) / m[small] ** 2
    big = m[~small]
    if big.size:
        c = _moment_series(sigma)
        powers = big[:, None] ** (-1.0 - sigma - 2.0 * np.arange(SERIES_TERMS))[None, :]
        w[~small] = powers @ c
    w[0] += 1.0 / (2.0 - sigma) - 1.0 / (3.0 - sigma)
    return w


def _zeta_tail(sigma, M):
    """``sum_{m > M} W_m`` for ``M >= SERIES_FROM - 1``."""
    c = _moment_series(sigma)
    k = np.arange(SERIES_TERMS)
    return float(np.dot(c, special.zeta(1.0 + sigma + 2.0 * k, M + 1.0)))


def hat_tail(sigma: float, M) -> np.ndarray:
    """``sum_{m > M} W_m`` for integer ``M >= 0`` (scalar or array)."""
    Ms = np.atleast_1d(np.asarray(M, dtype=int))
    head = hat_weights(sigma, SERIES_FROM - 1)
    total = math.fsum(head) + _zeta_tail(sigma, SERIES_FROM - 1)
    out = np.empty(Ms.shape)
    for i, Mi in enumerate(Ms):
        if Mi >= SERIES_FROM - 1:
            out[i] = _zeta_tail(sigma, float(Mi))
        else:
            out[i] = total - math.fsum(head[:Mi])
    return out if np.ndim(M) else float(out[0])


def laplacian_matrix(grid: SpaceGrid, spec: SpatialKernelSpec):
    """``(A, b)`` with ``J_h u = A u + b`` on the grid nodes.

    The weights are those of :func:`hat_weights`, scaled by ``2 C dx^-sigma``;
    the scheme is second order in ``dx``.  Exterior nodes take far-field values; ``b`` holds
    the part that does not depend on ``u`` (an explicit constant far field).
    ``A`` has nonnegative off-diagonal entries and nonpositive row sums.
    """
    n, sigma = grid.n_points, spec.sigma
    ff = grid.far_field
    if ff is None:
        raise ConfigError("laplacian_matrix needs a far-field model")
    if ff.kind == "periodic":
        raise ConfigError("the periodic far field is available for pointwise evaluation only")
    if ff.kind == "power_growth" and ff.growth >= sigma:
        raise DomainError(f"far-field growth {ff.growth} >= sigma = {sigma}: the operator diverges")
    scale = 2.0 * spec.normalization * grid.spacing ** (-sigma)
    A = np.zeros((n, n))
    b = np.zeros(n)
    if n == 1 and ff.kind == "zero":
        A[0, 0] = -scale * 2.0 * hat_tail(sigma, 0)
        return A, b
    w = hat_weights(sigma, max(n - 1, 1))
    idx = np.arange(n)
    for m in range(1, n):
        A[idx[:-m], idx[:-m] + m] = scale * w[m - 1]
        A[idx[m:], idx[m:] - m] = scale * w[m - 1]
    A[idx, idx] = -scale * 2.0 * hat_tail(sigma, 0)
    right_in = n - 1 - idx
    left_in = idx
    if ff.kind == "constant":
        ext_r, ext_l = scale * hat_tail(sigma, right_in), scale * hat_tail(sigma, left_in)
        if ff.value is None:
            A[idx, n - 1] += ext_r
            A[idx, 0] += ext_l
        else:
            b += (ext_r + ext_l) * ff.value
    elif ff.kind == "power_growth":
        L, dx = grid.half_width, grid.spacing
        x = grid.nodes
        for i in range(n):
            for side, m_in, col in ((1.0, right_in[i], n - 1), (-1.0, left_in[i], 0)):
                # |x_i + side m dx| = dx (m + side x_i / dx) beyond the grid
                c = scale * dx**ff.growth * _growth_sum(sigma, ff.growth, int(m_in), side * x[i] / dx)
                if ff.value is None:
                    A[i, col] += c * L ** (-ff.growth)
                else:
                    b[i] += c * ff.value
    return A, b


def _growth_sum(sigma, nu, M, q, terms: int = 20000):
    """``sum_{m > M} W_m (m + q)^nu`` (exterior node ``m`` sits at ``dx (m + q)``)."""
    m = np.arange(M + 1, M + 1 + terms, dtype=float)
    w = hat_weights(sigma, M + terms)[M:]
    head = math.fsum(w * (m + q) ** nu)
    # beyond: W_m (m+q)^nu = sum_k c_k m^(-1-sigma-2k) sum_j binom(nu, j) q^j m^(nu-j)
    c = _moment_series(sigma)[:4]
    j = np.arange(16)
    bq = special.binom(nu, j) * q**j
    start = M + terms + 1.0
    tail = sum(ck * float(np.dot(bq, special.zeta(1.0 + sigma + 2.0 * k - nu + j, start))) for k, ck in enumerate(c))
    return head + tail


def discrete_symbol(sigma: float, xi, spacing: float, normalization: float | None = None, terms: int = 200000):
    """Value of the lattice operator on ``exp(i xi x)`` (real and <= 0) on the infinite grid."""
    C = fractional_laplacian_constant(sigma) if normalization is None else normalization
    w = hat_weights(sigma, terms)
    m = np.arange(1, terms + 1, dtype=float)
    theta = np.atleast_1d(np.asarray(xi, dtype=float)) * spacing
    s = np.array([np.dot(w, 2.0 * np.cos(m * th) - 2.0) for th in theta])
    # summation by parts makes the cosine remainder O(terms^(-1-sigma) / theta)
    s -= 2.0 * hat_tail(sigma, terms)
    out = 2.0 * C * spacing ** (-sigma) * s
    return out if np.ndim(xi) else float(out[0])

"""Two-parameter Mittag-Leffler function on the real line.

``E_{a,b}(z) = sum_k z**k / Gamma(a*k + b)`` is evaluated by one of four
routes, picked per argument from a-priori error estimates:

``series``
    Truncated Taylor series in double precision.  Accepted when the
    cancellation estimate ``eps * sum|t_k|`` is below the target.
``asymptotic``
    Algebraic expansion ``-sum_{m>=1} z**-m / Gamma(b - a*m)`` for large
    negative arguments.  Accepted when the smallest term plus the
    exponentially small remainder is below the target.
``integral``
    Real Hankel-contour representation on the negative axis for ``0 < a < 1``.
``series_mp``
    Taylor series in extended precision (mpmath); used when the double series
    cancels too much and no other route applies (``a`` close to or above 1).

The pole convention for ``1/Gamma`` at non-positive integers is zero, as
returned by :func:`scipy.special.rgamma`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import mpmath
import numpy as np
from numpy.polynomial import chebyshev
from scipy import integrate, special

from .exceptions import AccuracyError, DomainError, MLOverflowError

EPS = np.finfo(float).eps
#: Relative accuracy every route must certify before its value is returned.
TARGET_RTOL = 1e-14
#: Nominal radius below which the Taylor series is tried first.
SERIES_RADIUS = 15.0
#: Largest ``|z|**(1/alpha)`` the extended-precision series will attempt.
MP_SERIES_LIMIT = 5000.0
_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class MLParams:
    """Orders ``(alpha, beta)`` of ``E_{alpha,beta}``."""

    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v) and v > 0):
                raise DomainError(f"Mittag-Leffler {name} must be a finite positive real, got {v!r}")


class MLResult(NamedTuple):
    value: float
    method: str
    est_error: float


def _series(alpha, beta, z):
    """Double precision Taylor sum; returns (value, est_abs_error, max_log_term)."""
    if z == 0.0:
        return float(special.rgamma(beta)), 0.0, 0.0
    lz = math.log(abs(z))
    big = abs(z) ** (1.0 / alpha) if lz / alpha < 700 else math.inf
    if not math.isfinite(big):
        raise MLOverflowError(
            f"|z|**(1/alpha) overflows for alpha={alpha}, z={z}", threshold=_LOG_MAX**alpha
        )
    n_terms = int(min(2_000_000, 3.0 * big / alpha + 4.0 * abs(beta) / alpha + 60))
    k = np.arange(n_terms, dtype=float)
    logt = k * lz - special.gammaln(alpha * k + beta)
    peak = float(np.max(logt))
    if peak > _LOG_MAX - 5 and z < 0:
        return math.nan, math.inf, peak
    if peak > _LOG_MAX - 5:
        raise MLOverflowError(
            f"E_{{{alpha},{beta}}}({z}) exceeds the double range "
            f"(overflow threshold z ~ {_LOG_MAX**alpha:.6g})",
            threshold=_LOG_MAX**alpha,
        )
    mag = np.exp(logt)
    if z < 0:
        terms = np.where(k % 2 == 0, mag, -mag)
    else:
        terms = mag
    value = math.fsum(terms)
    tail = float(mag[-1])
    err = 4.0 * EPS * float(np.sum(mag)) + tail
    return value, err, peak


def _asymptotic(alpha, beta, x, max_terms=80):
    """Algebraic expansion of ``E_{alpha,beta}(-x)`` with an error estimate."""
    # |1/Gamma(y)| <= Gamma(1-y)/pi for y < 0 bounds the terms by a smooth
    # envelope; truncating at its minimum avoids being fooled by terms that
    # happen to sit near a pole of Gamma
    lx = math.log(x)
    total = 0.0
    prev_env = math.inf
    err = math.inf
    for m in range(1, max_terms + 1):
        t = (-1) ** (m + 1) * x ** (-m) * float(special.rgamma(beta - alpha * m))
        y = beta - alpha * m
        env = math.exp(special.gammaln(1.0 - y) - m * lx) / math.pi if y <= 0 else abs(t)
        if y <= 0 and env > prev_env:
            err = env
            break
        total += t
        prev_env = env
        err = env
    if 2.0 / 3.0 < alpha < 1.0 or alpha == 1.0:
        # exponentially small contribution from the branch points z**(1/alpha)
        expo = x ** (1.0 / alpha) * math.cos(math.pi / alpha)
        err += x ** ((1.0 - beta) / alpha) * math.exp(min(expo, 700.0)) / alpha
    return total, err


def _asymptotic_terms(alpha, beta, x, max_terms=80):
    """Number of terms the envelope rule of :func:`_asymptotic` keeps at ``x``."""
    lx = math.log(x)
    prev_env = math.inf
    for m in range(1, max_terms + 1):
        y = beta - alpha * m
        env = math.exp(special.gammaln(1.0 - y) - m * lx) / math.pi if y <= 0 else abs(x ** (-m) * float(special.rgamma(y)))
        if y <= 0 and env > prev_env:
            return m - 1
        prev_env = env
    return max_terms


def _hankel(alpha, beta, x):
    """Hankel-contour integral for ``E_{alpha,beta}(-x)``, ``0<alpha<1``, ``x>0``."""
    if beta > 1.0:
        # the contour weight u**((1-beta)/alpha) is only integrable for beta < 1 + alpha
        inner, err = _hankel(alpha, beta - alpha, x)
        return (inner - float(special.rgamma(beta - alpha))) / (-x), err / x
    sb = math.sin(math.pi * beta)
    sba = math.sin(math.pi * (beta - alpha))
    ca = math.cos(math.pi * alpha)
    sa = math.sin(math.pi * alpha)
    inv = 1.0 / alpha
    power = (1.0 - beta) / alpha

    # variable u = r**alpha; the weight u**power is handled by QAWS near 0
    def g(u):
        return math.exp(-(u**inv)) * (u * sb + x * sba) / ((u + x * ca) ** 2 + (x * sa) ** 2) * inv

    def f(u):
        return g(u) * u**power

    top = 750.0**alpha
    peak = max(-x * ca, 0.0)
    width = x * sa
    first = min(0.5 * peak, 1.0) if peak > 0 else min(1.0, max(width, 1e-3))
    first = min(first, 0.5 * top)
    cuts = {first, top}
    for p in (peak, peak - width, peak + width, peak - 4 * width, peak + 4 * width,
              peak + 16 * width, 1.0, 10.0**alpha, 40.0**alpha):
        if first < p < top:
            cuts.add(p)
    cuts = sorted(cuts)
    with warnings.catch_warnings():
        # roundoff warnings near full precision are expected; err carries the estimate
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        total, err = integrate.quad(g, 0.0, first, weight="alg", wvar=(power, 0.0),
                                    epsabs=0.0, epsrel=2e-14, limit=200)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            v, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=2e-14, limit=200)
            total += v
            err += e
    return total / math.pi, err / math.pi + 4 * EPS * abs(total / math.pi)


def _series_mp(alpha, beta, z):
    lz = math.log(abs(z))
    big = abs(z) ** (1.0 / alpha)
    n_terms = int(3.0 * big / alpha + 4.0 * beta / alpha + 60)
    k = np.arange(n_terms, dtype=float)
    peak = float(np.max(k * lz - special.gammaln(alpha * k + beta)))
    # the sum cancels down to about exp(-big) when alpha is near 1
    dps = int((max(peak, 0.0) + big) / math.log(10) + 25)
    with mpmath.workdps(dps):
        zz, aa, bb = mpmath.mpf(z), mpmath.mpf(alpha), mpmath.mpf(beta)
        total = mpmath.mpf(0)
        term = mpmath.mpf(1)
        for j in range(n_terms):
            t = term * mpmath.rgamma(aa * j + bb)
            total += t
            term *= zz
        last = abs(t)
        value = float(total)
        err = float(last) + 2 * EPS * abs(value)
    return value, err


def evaluate(params: MLParams, z: float) -> MLResult:
    """Evaluate ``E_{alpha,beta}(z)`` and report the route and error estimate."""
    alpha, beta = float(params.alpha), float(params.beta)
    z = float(z)
    if not math.isfinite(z):
        raise DomainError(f"argument must be finite, got {z}")
    if z == 0.0:
        return MLResult(float(special.rgamma(beta)), "exact", 0.0)
    if alpha == 1.0 and beta == 1.0:
        return MLResult(math.exp(z), "exp", EPS * math.exp(z))
    if z > 0:
        v, e, _ = _series(alpha, beta, z)
        return MLResult(v, "series", e)

    x = -z
    # beyond x**(1/alpha) ~ 40 the alternating sum loses every digit
    if x <= SERIES_RADIUS and x ** (1.0 / alpha) <= 40.0:
        v, e, _ = _series(alpha, beta, z)
        if e <= TARGET_RTOL * abs(v):
            return MLResult(v, "series", e)
    if alpha <= 1.0 and x >= 1.0:
        v, e = _asymptotic(alpha, beta, x)
        if e <= 0.2 * TARGET_RTOL * abs(v):
            return MLResult(v, "asymptotic", e)
    if alpha >= 0.99 and x ** (1.0 / alpha) <= MP_SERIES_LIMIT:
        v, e = _series_mp(alpha, beta, z)
        return MLResult(v, "series_mp", e)
    if alpha < 1.0:
        v, e = _hankel(alpha, beta, x)
        return MLResult(v, "integral", e)
    raise AccuracyError(
        f"no accurate route for E_{{{alpha},{beta}}}({z})", estimate=float("nan"), error=float("inf")
    )


def mittag_leffler(params: MLParams, z):
    """Two-parameter Mittag-Leffler function ``E_{alpha,beta}(z)`` for real ``z``.

    Parameters
    ----------
    params : MLParams
        Orders ``alpha > 0`` and ``beta > 0``.
    z : float or array_like
        Real argument(s).

    Returns
    -------
    float or ndarray
        Same shape as ``z``.

    Raises
    ------
    DomainError
        Invalid orders or non-finite argument.
    MLOverflowError
        The value exceeds the double range (positive ``z``); the exception
        carries the overflow threshold.
    """
    if not isinstance(params, MLParams):
        params = MLParams(*params)
    if np.ndim(z) == 0:
        return evaluate(params, z).value
    zz = np.asarray(z, dtype=float)
    out = np.empty_like(zz)
    for idx, v in np.ndenumerate(zz):
        out[idx] = evaluate(params, v).value
    return out


def ml_one_param(alpha, z):
    """``E_alpha(z) = E_{alpha,1}(z)``."""
    return mittag_leffler(MLParams(alpha, 1.0), z)


def asymptotic_onset(params: MLParams, x_max=1e4):
    """Smallest ``x`` (on a geometric grid) where the asymptotic route is accepted."""
    alpha, beta = float(params.alpha), float(params.beta)
    for x in np.geomspace(1.0, x_max, 400):
        v, e = _asymptotic(alpha, beta, x)
        if v != 0.0 and e <= 0.2 * TARGET_RTOL * abs(v):
            return float(x)
    return math.inf


class NegativeAxisML:
    """Piecewise Chebyshev table for ``x -> E_{alpha,beta}(-x)`` on ``x >= 0``.

    Built for repeated kernel evaluation inside quadratures.  Panels are
    ``[0, 1/2], [1/2, 1], [1, 2], ...`` up to the onset of the asymptotic
    route; beyond that the expansion is summed directly.  The absolute error
    is below ``1e-14 / Gamma(beta)``-scale everywhere (checked against
    :func:`evaluate` in the test-suite).
    """

    def __init__(self, alpha, beta, max_degree=256):
        self.params = MLParams(alpha, beta)
        self.alpha, self.beta = float(alpha), float(beta)
        onset = asymptotic_onset(self.params, x_max=2.0**16) if alpha < 1 else math.inf
        top = 2.0 ** math.ceil(math.log2(max(onset, 1.0))) if math.isfinite(onset) else 2.0**12
        self.edges = np.concatenate([[0.0], 2.0 ** np.arange(-1, int(math.log2(top)) + 1)])
        self.x_table_max = float(self.edges[-1])
        self.asymptotic_tail = math.isfinite(onset)
        scale = abs(float(special.rgamma(beta))) or 1.0
        if self.asymptotic_tail:
            n_terms = _asymptotic_terms(self.alpha, self.beta, self.x_table_max)
            m = np.arange(1, n_terms + 1)
            self._asym_coef = (-1.0) ** (m + 1) * special.rgamma(self.beta - self.alpha * m)
        self.panels = []
        for lo, hi in zip(self.edges[:-1], self.edges[1:]):
            self.panels.append(self._fit(lo, hi, scale, max_degree))

    def _direct(self, x):
        return np.array([evaluate(self.params, -v).value for v in np.atleast_1d(x)])

    def _fit(self, lo, hi, scale, max_degree):
        deg = 24
        while True:
            nodes = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
            vals = self._direct(0.5 * (hi - lo) * (nodes + 1.0) + lo)
            coef = chebyshev.chebfit(nodes, vals, deg)
            if np.max(np.abs(coef[-3:])) <= 1e-16 * scale or deg >= max_degree:
                return coef
            deg *= 2

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        flat = np.atleast_1d(xa).ravel()
        out = np.empty_like(flat)
        if np.any(flat < 0) or not np.all(np.isfinite(flat)):
            raise DomainError("table argument must be finite and non-negative")
        idx = np.searchsorted(self.edges, flat, side="right") - 1
        for p, coef in enumerate(self.panels):
            sel = idx == p
            if np.any(sel):
                lo, hi = self.edges[p], self.edges[p + 1]
                out[sel] = chebyshev.chebval((2.0 * flat[sel] - lo - hi) / (hi - lo), coef)
        far = flat >= self.x_table_max
        if np.any(far):
            if self.asymptotic_tail:
                # fixed truncation from the table edge; its error only shrinks with x
                y = 1.0 / flat[far]
                out[far] = y * np.polyval(self._asym_coef[::-1], y)
            else:
                out[far] = self._direct(flat[far])
        if xa.ndim == 0:
            return float(out[0])
        return out.reshape(xa.shape)


@lru_cache(maxsize=64)
def negative_axis_table(alpha: float, beta: float) -> NegativeAxisML:
    """Cached :class:`NegativeAxisML` for ``(alpha, beta)``."""
    return NegativeAxisML(float(alpha), float(beta))

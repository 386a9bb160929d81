"""Time and space kernels with their envelope and symmetry verifiers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, NamedTuple

import numpy as np
from scipy import integrate, special

from .exceptions import ConfigError, DomainError, OutOfWindowError, SingularityError
from .special_functions import negative_axis_table

ML_KERNEL = "mittag_leffler_kernel"
CAPUTO_KERNEL = "caputo_power_kernel"
KERNEL_KINDS = (ML_KERNEL, CAPUTO_KERNEL)
KIND_ALIASES = {"ml": ML_KERNEL, "caputo": CAPUTO_KERNEL, ML_KERNEL: ML_KERNEL, CAPUTO_KERNEL: CAPUTO_KERNEL}

SIGMA0 = 0.1
DEFAULT_HORIZON = 4.0


@dataclass(frozen=True)
class FractionalOrder:
    """Order ``alpha`` in (0, 1) and the constants derived from it.

    ``b_alpha = 1 - alpha + alpha / Gamma(alpha)``, ``c = -alpha / (1 - alpha)``,
    ``nu_alpha = b_alpha / (1 - alpha)`` and ``c_alpha = -c * nu_alpha``.
    """

    alpha: float
    b_alpha: float = field(init=False)
    c: float = field(init=False)
    nu_alpha: float = field(init=False)
    c_alpha: float = field(init=False)

    def __post_init__(self):
        a = self.alpha
        if not (isinstance(a, (int, float, np.floating)) and 0.0 < a < 1.0):
            raise DomainError(f"fractional order must lie in (0, 1), got {a!r}")
        a = float(a)
        object.__setattr__(self, "alpha", a)
        b = 1.0 - a + a / math.gamma(a)
        c = -a / (1.0 - a)
        nu = b / (1.0 - a)
        object.__setattr__(self, "b_alpha", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "nu_alpha", nu)
        object.__setattr__(self, "c_alpha", -c * nu)


def as_order(order) -> FractionalOrder:
    return order if isinstance(order, FractionalOrder) else FractionalOrder(float(order))


def ml_kernel(order: FractionalOrder, gap):
    """``gap**(alpha-1) * E_{alpha,alpha}(c * gap**alpha)`` for ``gap > 0`` (vectorized)."""
    a = order.alpha
    g = np.asarray(gap, dtype=float)
    table = negative_axis_table(a, a)
    out = g ** (a - 1.0) * table(-order.c * g**a)
    return float(out) if np.ndim(out) == 0 else out


def ml_relaxation(order: FractionalOrder, gap):
    """``E_alpha(c * gap**alpha)`` for ``gap >= 0`` (vectorized)."""
    table = negative_axis_table(order.alpha, 1.0)
    g = np.asarray(gap, dtype=float)
    out = table(-order.c * g**order.alpha)
    return float(out) if np.ndim(out) == 0 else out


def caputo_kernel(order: FractionalOrder, gap):
    g = np.asarray(gap, dtype=float)
    out = g ** (order.alpha - 1.0) / math.gamma(order.alpha)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TimeKernelSpec:
    order: FractionalOrder
    horizon: float = DEFAULT_HORIZON
    kind: str = ML_KERNEL

    def __post_init__(self):
        if not isinstance(self.order, FractionalOrder):
            object.__setattr__(self, "order", as_order(self.order))
        if self.kind not in KIND_ALIASES:
            raise ConfigError(f"unknown time kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        object.__setattr__(self, "kind", KIND_ALIASES[self.kind])
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigError(f"horizon must be positive and finite, got {self.horizon}")

    def profile(self, gap):
        """Kernel as a function of the gap ``t - s`` (no window checks)."""
        if self.kind == ML_KERNEL:
            return ml_kernel(self.order, gap)
        return caputo_kernel(self.order, gap)


def time_kernel_eval(spec: TimeKernelSpec, t: float, s: float) -> float:
    """Kernel value ``T(t, s)``; depends on ``t - s`` only."""
    gap = float(t) - float(s)
    if not gap > 0.0:
        raise DomainError(f"time kernel needs s < t, got t={t}, s={s}")
    if gap > spec.horizon * (1.0 + 1e-12):
        raise OutOfWindowError(f"gap t - s = {gap} exceeds the horizon {spec.horizon}")
    return spec.profile(gap)


class EnvelopeReport(NamedTuple):
    lambda_emp: float
    Lambda_emp: float
    holds: bool
    grid: list


def verify_time_kernel_envelope(spec: TimeKernelSpec, n_samples: int, min_gap_fraction: float = 1e-6) -> EnvelopeReport:
    """Empirical constants in ``lam*(-c) g^(a-1)/Gamma(a+1) <= T <= Lam*(-c) g^(a-1)/Gamma(a+1)``.

    The gaps form a log-spaced grid from ``min_gap_fraction * horizon`` to the
    horizon.  With ``n_samples == 2`` only the two end points are used.
    """
    if int(n_samples) != n_samples or n_samples < 2:
        raise DomainError(f"n_samples must be an integer >= 2, got {n_samples}")
    order = spec.order
    gaps = np.geomspace(min_gap_fraction * spec.horizon, spec.horizon, int(n_samples))
    values = np.array([time_kernel_eval(spec, g, 0.0) for g in gaps])
    rho = values * math.gamma(order.alpha + 1.0) / gaps ** (order.alpha - 1.0)
    lam = float(np.min(rho) / -order.c)
    Lam = float(np.max(rho) / -order.c)
    holds = bool(0.0 < lam <= Lam < math.inf)
    return EnvelopeReport(lam, Lam, holds, gaps.tolist())


def verify_time_symmetry(
    spec: TimeKernelSpec,
    samples: Iterable[tuple[float, float]],
    evaluator: Callable[[TimeKernelSpec, float, float], float] | None = None,
) -> bool:
    """Check ``T(t, t - s) == T(t + s, t)`` on every ``(t, s)`` sample."""
    ev = evaluator or time_kernel_eval
    for t, s in samples:
        lhs = ev(spec, t, t - s)
        rhs = ev(spec, t + s, t)
        if abs(lhs - rhs) > 1e-14 * (1.0 + abs(lhs)):
            return False
    return True


def _one_minus_cos_integral(sigma: float) -> float:
    """``I(sigma) = int_0^inf (1 - cos h) h^(-1-sigma) dh`` by quadrature."""

    def near(h):
        # (1 - cos h)/h^2 written without cancellation
        return 0.5 * np.sinc(h / (2 * np.pi)) ** 2

    head, _ = integrate.quad(near, 0.0, 1.0, weight="alg", wvar=(1.0 - sigma, 0.0), epsabs=0.0, epsrel=1e-13)
    power_tail = 1.0 / sigma
    cos_tail, _ = integrate.quad(lambda h: h ** (-1.0 - sigma), 1.0, np.inf, weight="cos", wvar=1.0)
    return head + power_tail - cos_tail


@lru_cache(maxsize=256)
def fractional_laplacian_constant(sigma: float, dim: int = 1) -> float:
    """Normalization making ``int delta_h u(x) C|h|^(-1-sigma) dh`` equal ``-(-Delta)^(sigma/2) u``.

    Calibrated on the symbol: for ``u = sin(xi x)`` the integral equals
    ``-4 C I(sigma) |xi|^sigma u``, hence ``C = 1 / (4 I(sigma))``.
    """
    if dim != 1:
        raise ConfigError("the calibrated normalization is available for dim = 1 only")
    if not 0.0 < sigma < 2.0:
        raise DomainError(f"sigma must lie in (0, 2), got {sigma}")
    return 1.0 / (4.0 * _one_minus_cos_integral(float(sigma)))


@dataclass(frozen=True)
class SpatialKernelSpec:
    """Pure power kernel ``C |h|^(-n-sigma)`` with ellipticity bounds ``lambda_ <= C <= Lambda``.

    ``normalization`` defaults to the calibrated fractional-Laplacian constant;
    ``lambda_`` and ``Lambda`` default to the normalization itself.
    """

    sigma: float
    dim: int = 1
    lambda_: float | None = None
    Lambda: float | None = None
    normalization: float | None = None
    sigma0: float = SIGMA0

    def __post_init__(self):
        if not 0.0 < self.sigma0 < 2.0:
            raise ConfigError(f"sigma0 must lie in (0, 2), got {self.sigma0}")
        if not (self.sigma0 < self.sigma < 2.0):
            raise DomainError(f"sigma must lie in ({self.sigma0}, 2), got {self.sigma}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError(f"dim must be a positive integer, got {self.dim}")
        norm = self.normalization
        if norm is None:
            norm = fractional_laplacian_constant(self.sigma, 1) if self.dim == 1 else 1.0
        lam = norm if self.lambda_ is None else self.lambda_
        Lam = norm if self.Lambda is None else self.Lambda
        if not (0 < lam <= Lam):
            raise ConfigError(f"need 0 < lambda <= Lambda, got {lam}, {Lam}")
        if not (lam <= norm <= Lam):
            raise ConfigError(f"normalization {norm} violates lambda <= C <= Lambda = [{lam}, {Lam}]")
        object.__setattr__(self, "normalization", float(norm))
        object.__setattr__(self, "lambda_", float(lam))
        object.__setattr__(self, "Lambda", float(Lam))


def spatial_kernel_eval(spec: SpatialKernelSpec, h) -> float:
    """``C(n, sigma) |h|^(-n-sigma)``; ``h`` is a scalar (n = 1) or a vector of length n."""
    hv = np.atleast_1d(np.asarray(h, dtype=float))
    if hv.shape != (spec.dim,):
        raise DomainError(f"h must have length {spec.dim}, got shape {hv.shape}")
    r = float(np.linalg.norm(hv))
    if r == 0.0:
        raise SingularityError("spatial kernel is singular at h = 0")
    return spec.normalization * r ** (-spec.dim - spec.sigma)


def verify_spatial_sandwich(spec: SpatialKernelSpec, hs) -> bool:
    """``lambda/|h|^(n+s) <= K(h) <= Lambda/|h|^(n+s)`` and evenness on the samples."""
    for h in hs:
        hv = np.atleast_1d(np.asarray(h, dtype=float))
        k = spatial_kernel_eval(spec, hv)
        if k != spatial_kernel_eval(spec, -hv):
            return False
        base = float(np.linalg.norm(hv)) ** (-spec.dim - spec.sigma)
        if not (spec.lambda_ * base * (1 - 1e-15) <= k <= spec.Lambda * base * (1 + 1e-15)):
            return False
    return True


def standard_constant_oracle(sigma: float) -> float:
    """Closed form of the same normalization, for cross-checking the quadrature."""
    if sigma == 1.0:
        return 1.0 / (2.0 * math.pi)
    return 1.0 / (-4.0 * special.gamma(-sigma) * math.cos(math.pi * sigma / 2.0))

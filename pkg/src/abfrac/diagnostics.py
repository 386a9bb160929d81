"""Empirical regularity measurements on computed space-time fields."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator

from .ab_operators import TimeGrid
from .exceptions import ConfigError, DomainError, ResolutionError
from .nonlocal_space import SpaceGrid
from .parabolic_solver import SolverConfig, SpaceTimeField, solve

MIN_NODES = 3
PAIR_NODE_LIMIT = 10_000


@dataclass(frozen=True)
class ParabolicCylinder:
    """``B_r(x0) x [t0 - r^(2 sigma / alpha), t0]``."""

    center: tuple
    radius: float
    sigma: float
    alpha: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"radius must be positive, got {self.radius}")
        if not (0 < self.alpha < 1 and 0 < self.sigma < 2):
            raise DomainError(f"orders out of range: alpha={self.alpha}, sigma={self.sigma}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def time_depth(self) -> float:
        return self.radius ** (2.0 * self.sigma / self.alpha)

    def masks(self, tnodes, xnodes):
        x0, t0 = self.center
        # closed region, widened by a few ulps so nodes on the rim count
        ex = 4 * np.finfo(float).eps * max(1.0, abs(x0) + self.radius)
        et = 4 * np.finfo(float).eps * max(1.0, abs(t0) + self.time_depth)
        in_x = np.abs(np.asarray(xnodes) - x0) <= self.radius + ex
        in_t = (np.asarray(tnodes) <= t0 + et) & (np.asarray(tnodes) >= t0 - self.time_depth - et)
        return in_t, in_x


def _block(u: SpaceTimeField, cyl: ParabolicCylinder):
    in_t, in_x = cyl.masks(u.tgrid.nodes[: u.values.shape[0]], u.xgrid.nodes)
    if not in_t.any() or not in_x.any():
        raise DomainError(f"cylinder of radius {cyl.radius} at {cyl.center} contains no grid node")
    return u.values[np.ix_(in_t, in_x)], int(in_t.sum()), int(in_x.sum())


def oscillation(u: SpaceTimeField, cyl: ParabolicCylinder) -> float:
    """``max - min`` of the field over the nodes inside the cylinder."""
    block, _, _ = _block(u, cyl)
    return float(block.max() - block.min())


class OscillationReport(NamedTuple):
    radii: np.ndarray
    oscillations: np.ndarray
    fitted_kappa: float
    bound_ok: np.ndarray


def oscillation_decay(u: SpaceTimeField, r: float, depth: int, center=None, sigma: float = 1.0, alpha: float = 0.5) -> OscillationReport:
    """Oscillations over ``Q_{r^k}``, ``k = 0..depth``, and the fitted decay exponent.

    ``fitted_kappa`` is the least-squares slope of ``log osc_k`` against
    ``k log r`` over the cylinders with positive oscillation; it is ``nan``
    when fewer than two qualify.  ``bound_ok[k]`` tests ``osc_k <= 2 r^(kappa k)``
    at the fitted exponent.  ``center`` defaults to ``(0, last time)``.
    """
    if not 0 < r < 1:
        raise DomainError(f"r must lie in (0, 1), got {r}")
    if int(depth) != depth or depth < 2:
        raise DomainError(f"depth must be an integer >= 2, got {depth}")
    if center is None:
        center = (0.0, float(u.tgrid.nodes[u.values.shape[0] - 1]))
    radii = r ** np.arange(depth + 1, dtype=float)
    osc = np.empty(depth + 1)
    for k, rk in enumerate(radii):
        block, nt, nx = _block(u, ParabolicCylinder(center, rk, sigma, alpha))
        if min(nt, nx) < MIN_NODES:
            raise ResolutionError(f"cylinder k={k} (radius {rk:.3g}) holds {nt} time and {nx} space nodes; need {MIN_NODES}")
        osc[k] = block.max() - block.min()
    k = np.arange(depth + 1)
    pos = osc > 0
    if pos.sum() >= 2:
        slope, _ = np.polyfit(k[pos] * math.log(r), np.log(osc[pos]), 1)
        kappa = float(slope)
        bound = osc <= 2.0 * r ** (kappa * k) * (1 + 1e-12)
    else:
        kappa = float("nan")
        bound = osc <= 2.0
    return OscillationReport(radii, osc, kappa, bound)


def _region_masks(u: SpaceTimeField, region):
    t = u.tgrid.nodes[: u.values.shape[0]]
    x = u.xgrid.nodes
    if region is None:
        return np.ones(t.size, bool), np.ones(x.size, bool)
    if isinstance(region, ParabolicCylinder):
        return region.masks(t, x)
    x_lo, x_hi, t_lo, t_hi = region
    return (t >= t_lo) & (t <= t_hi), (x >= x_lo) & (x <= x_hi)


def holder_seminorm(u: SpaceTimeField, kappa: float, alpha: float, sigma: float, region=None) -> float:
    """``sup |u(x,t) - u(y,s)| / (|x-y|^kappa + |t-s|^(kappa alpha / (2 sigma)))`` over node pairs.

    ``region`` is ``None`` (whole field), a :class:`ParabolicCylinder` or a box
    ``(x_lo, x_hi, t_lo, t_hi)``.  Above ``PAIR_NODE_LIMIT`` nodes, every
    ``s``-th node is kept in both directions, with the smallest ``s`` that
    meets the limit, counting from the first node of the region.
    """
    if not 0 < kappa <= 1:
        raise DomainError(f"kappa must lie in (0, 1], got {kappa}")
    in_t, in_x = _region_masks(u, region)
    ti, xi = np.flatnonzero(in_t), np.flatnonzero(in_x)
    if ti.size * xi.size < 2:
        raise DomainError("region holds fewer than two nodes")
    stride = 1
    while math.ceil(ti.size / stride) * math.ceil(xi.size / stride) > PAIR_NODE_LIMIT:
        stride += 1
    ti, xi = ti[::stride], xi[::stride]
    t = u.tgrid.nodes[ti]
    x = u.xgrid.nodes[xi]
    T, X = np.meshgrid(t, x, indexing="ij")
    T, X, V = T.ravel(), X.ravel(), u.values[np.ix_(ti, xi)].ravel()
    gamma = kappa * alpha / (2.0 * sigma)
    best = 0.0
    for i in range(V.size - 1):
        den = np.abs(X[i + 1 :] - X[i]) ** kappa + np.abs(T[i + 1 :] - T[i]) ** gamma
        best = max(best, float(np.max(np.abs(V[i + 1 :] - V[i]) / den)))
    return best


class PointEstimateReport(NamedTuple):
    theta_emp: float
    passed: bool
    mu_emp: float
    dip_half_width: float
    depth: float
    forcing_sup: float


def _hypothesis_measure(u: SpaceTimeField) -> float:
    t, x = u.tgrid.nodes, u.xgrid.nodes
    block = u.values[np.ix_((t >= -2) & (t <= -1), np.abs(x) <= 1)]
    return float(np.sum(block <= 0.0)) * u.tgrid.tau * u.xgrid.spacing


def point_estimate_scenario(cfg: SolverConfig, mu: float, level: float = 1.0, depth: float = 8.0,
                            kappa: int = 64, n_points: int = 129, half_width: float = 4.0) -> PointEstimateReport:
    """Run the dip scenario on ``[-2, 0]`` and measure ``theta = 1 - max_{B_1 x [-1, 0]} u``.

    The initial row is ``level`` with a centred dip of value ``level - depth``.
    The far field is the constant ``level``.  The dip is the narrowest
    symmetric set of nodes that gives ``|{u <= 0} cap B_1 x [-2, -1]| >= mu``.
    By comparison a wider dip only lowers the solution, so the search
    bisects.  ``mu = 0`` gives no dip.
    """
    if level > 1:
        raise ConfigError(f"the scenario needs data <= 1, got level {level}")
    if not 0 <= mu <= 2:
        raise ConfigError(f"mu must lie in [0, 2], got {mu}")
    tg = TimeGrid(-2.0, 0.0, kappa)
    xg = SpaceGrid(half_width, n_points, f"constant:{level!r}")
    x, dx = xg.nodes, xg.spacing
    forcing = max(float(np.max(np.abs(cfg.source_row(float(t), k, x)))) for k, t in enumerate(tg.nodes))

    def run(j):
        u0 = np.full(x.shape, float(level))
        if j >= 0:
            u0[np.abs(x) <= j * dx * (1 + 1e-12)] -= depth
        return solve(u0, cfg, tg, xg)

    if mu == 0:
        j, field = -1, run(-1)
    else:
        lo, hi = -1, int(1.0 / dx + 1e-9)
        field = run(hi)
        if _hypothesis_measure(field) < mu:
            raise ConfigError(f"a dip of depth {depth} over all of B_1 gives measure {_hypothesis_measure(field):.3g} < mu = {mu}")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _hypothesis_measure(run(mid)) >= mu:
                hi = mid
            else:
                lo = mid
        j, field = hi, run(hi)
    t = tg.nodes
    late = field.values[np.ix_(t >= -1.0, np.abs(x) <= 1.0)]
    theta = float(1.0 - late.max())
    return PointEstimateReport(theta, theta > 0, _hypothesis_measure(field), max(j, 0) * dx, depth, forcing)


class OscillationDecay(BaseEstimator):
    """Estimator wrapper: ``fit(field)`` stores ``report_`` and ``kappa_``."""

    def __init__(self, r=0.5, depth=3, center=None, sigma=1.0, alpha=0.5):
        self.r = r
        self.depth = depth
        self.center = center
        self.sigma = sigma
        self.alpha = alpha

    def fit(self, field: SpaceTimeField, y=None):
        self.report_ = oscillation_decay(field, self.r, self.depth, self.center, self.sigma, self.alpha)
        self.kappa_ = self.report_.fitted_kappa
        return self

    def transform(self, field: SpaceTimeField):
        return oscillation_decay(field, self.r, self.depth, self.center, self.sigma, self.alpha).oscillations

"""Implicit stepping for ``L u - J u = g`` on a space-time lattice.

Each step solves ``(W I - A) u_k = sum_m w_m u_{k-m} + tail_k u_0 + g_k + b``.
Here ``w_m`` are the lattice weights of the discrete history operator,
``tail_k`` is the weight of the history before ``a``, and ``W`` is the total
weight.  ``J_h u = A u + b`` is the lattice fractional Laplacian of
:func:`abfrac.nonlocal_space.laplacian_matrix`.

``W`` does not depend on ``k``, so the matrix is factorized once.  It is an
M-matrix, and this is checked when the matrix is assembled.  The scheme is
therefore monotone: ordered data give ordered solutions, and with ``g = 0`` the
maximum cannot grow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator

from .ab_operators import TimeGrid, TimeSeries, discrete_l, l_operator, lattice_weights
from .exceptions import ConfigError, DataError, PreconditionError, SolverError
from .kernels import FractionalOrder, SpatialKernelSpec, as_order, ml_kernel, ml_relaxation
from .nonlocal_space import FarField, SpaceGrid, laplacian_matrix

REFINEMENT_STEPS = 3


@dataclass
class SpaceTimeField:
    """Values ``u(t_k, x_j)`` with rows indexed by time.

    Before ``a`` the field equals row 0.  ``info`` holds the solver diagnostics.
    """

    tgrid: TimeGrid
    xgrid: SpaceGrid
    values: np.ndarray
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        shape = (self.tgrid.kappa + 1, self.xgrid.n_points)
        if v.ndim == 1 and self.tgrid.kappa == 0:
            v = v[None, :]
        if v.shape[1:] != shape[1:] or v.shape[0] > shape[0] or v.shape[0] < 1:
            raise DataError(f"field shape {v.shape} does not fit the grids {shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("field contains non-finite values")
        self.values = v

    @property
    def complete(self) -> bool:
        return self.values.shape[0] == self.tgrid.kappa + 1

    @property
    def far_field(self) -> FarField | None:
        return self.xgrid.far_field

    def row(self, k: int) -> np.ndarray:
        return self.values[k]

    def series(self, j: int) -> TimeSeries:
        """Time trace at the spatial node ``j``."""
        return TimeSeries(self.tgrid, self.values[:, j])


@dataclass(frozen=True)
class SolverConfig:
    """Order, spatial kernel and source of a run.

    ``source`` is a callable ``g(t, x)`` (vectorized in ``x``), a constant, or
    an array of shape ``(kappa + 1, N)``.  ``max_history`` caps the exact memory
    at that many steps; older weights are lumped onto the oldest kept row.
    """

    order: FractionalOrder
    spatial: SpatialKernelSpec
    source: Callable | float | np.ndarray = 0.0
    linear_solver_tol: float = 1e-12
    max_history: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "order", as_order(self.order))
        if not (self.linear_solver_tol > 0):
            raise ConfigError(f"linear_solver_tol must be positive, got {self.linear_solver_tol}")
        if self.max_history is not None and (int(self.max_history) != self.max_history or self.max_history < 1):
            raise ConfigError(f"max_history must be a positive integer, got {self.max_history}")

    def source_row(self, t: float, k: int, x: np.ndarray) -> np.ndarray:
        g = self.source
        if callable(g):
            out = np.broadcast_to(np.asarray(g(t, x), dtype=float), x.shape)
        elif np.ndim(g) == 0:
            out = np.full(x.shape, float(g))
        else:
            arr = np.asarray(g, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != x.size or k >= arr.shape[0]:
                raise DataError(f"sampled source of shape {arr.shape} does not cover row {k} of {x.size} nodes")
            out = arr[k]
        if not np.all(np.isfinite(out)):
            raise DataError(f"source is not finite at t={t}")
        return np.array(out, dtype=float)


class _System:
    """Assembled and factorized step matrix for one (config, grids) pair."""

    def __init__(self, cfg: SolverConfig, tgrid: TimeGrid, xgrid: SpaceGrid):
        self.w, self.tails = lattice_weights(cfg.order, tgrid.tau, tgrid.kappa)
        self.W = float(self.tails[0])
        if not self.W > 0:
            raise ConfigError(f"total memory weight {self.W} is not positive")
        n = xgrid.n_points
        if n == 1:
            # a single node carries no spatial coupling
            self.A, self.b = np.zeros((1, 1)), np.zeros(1)
        else:
            self.A, self.b = laplacian_matrix(xgrid, cfg.spatial)
        self.M = self.W * np.eye(n) - self.A
        _assert_m_matrix(self.M)
        self.lu = linalg.lu_factor(self.M)

    def apply_j(self, u):
        return self.A @ u + self.b


def _assert_m_matrix(M, slack=1e-12):
    off = M - np.diag(np.diag(M))
    scale = np.max(np.abs(M))
    if np.any(off > slack * scale):
        raise ConfigError("step matrix has a positive off-diagonal entry")
    if np.any(np.diag(M) <= 0) or np.any(M.sum(axis=1) < -slack * scale):
        raise ConfigError("step matrix is not diagonally dominant")


def _history_sum(sysm: _System, values: np.ndarray, k: int, max_history: int | None) -> np.ndarray:
    w = sysm.w
    rows = values[k - 1 :: -1] if k > 0 else values[:0]
    if max_history is None or k <= max_history:
        return w[:k] @ rows
    kept = w[:max_history] @ rows[:max_history]
    lumped = float(np.sum(w[max_history:k]))
    return kept + lumped * values[k - max_history - 1]


def step(state: SpaceTimeField, cfg: SolverConfig, k: int, system: _System | None = None) -> SpaceTimeField:
    """Compute row ``k`` from rows ``0..k-1`` and append it to ``state``."""
    if state.values.shape[0] != k or k < 1 or k > state.tgrid.kappa:
        raise DataError(f"step {k} needs exactly rows 0..{k - 1}, have {state.values.shape[0]}")
    sysm = system or _System(cfg, state.tgrid, state.xgrid)
    u = state.values
    t = float(state.tgrid.nodes[k])
    rhs = _history_sum(sysm, u, k, cfg.max_history) + sysm.tails[k] * u[0] + cfg.source_row(t, k, state.xgrid.nodes) + sysm.b
    row = linalg.lu_solve(sysm.lu, rhs)
    scale = max(float(np.max(np.abs(rhs))), np.finfo(float).tiny)
    rel, refinements = float(np.max(np.abs(sysm.M @ row - rhs))) / scale, 0
    while rel > cfg.linear_solver_tol and refinements < REFINEMENT_STEPS:
        row = row + linalg.lu_solve(sysm.lu, rhs - sysm.M @ row)
        rel = float(np.max(np.abs(sysm.M @ row - rhs))) / scale
        refinements += 1
    if not (rel <= cfg.linear_solver_tol):
        raise SolverError(f"step {k}: linear residual {rel:.3e} above tolerance {cfg.linear_solver_tol:.1e}", residual=rel)
    diag = state.info.setdefault("steps", [])
    diag.append({"k": k, "W": sysm.W, "refinements": refinements, "residual": rel})
    state.values = np.vstack([u, row])
    return state


def _initial_row(u0, xgrid: SpaceGrid) -> np.ndarray:
    x = xgrid.nodes
    if callable(u0):
        row = np.broadcast_to(np.asarray(u0(x), dtype=float), x.shape)
    else:
        row = np.broadcast_to(np.asarray(u0, dtype=float), x.shape)
    return np.array(row, dtype=float)


def solve(u0, cfg: SolverConfig, tgrid: TimeGrid, xgrid: SpaceGrid) -> SpaceTimeField:
    """Run :func:`step` for ``k = 1..kappa``.

    ``u0`` is an array over the spatial nodes, a constant, or a callable of
    ``x``.  ``TimeGrid`` needs ``kappa >= 1``; use :func:`initial_field` for
    the trivial run.
    """
    state = SpaceTimeField(tgrid, xgrid, _initial_row(u0, xgrid)[None, :])
    sysm = _System(cfg, tgrid, xgrid)
    state.info.update({"W": sysm.W, "far_field": xgrid.far_field, "steps": []})
    for k in range(1, tgrid.kappa + 1):
        step(state, cfg, k, sysm)
    return state


def initial_field(u0, tgrid: TimeGrid, xgrid: SpaceGrid) -> SpaceTimeField:
    """The field holding only the initial row (no steps taken)."""
    return SpaceTimeField(tgrid, xgrid, _initial_row(u0, xgrid)[None, :])


def implicit_euler_reference(u0, spatial: SpatialKernelSpec, tgrid: TimeGrid, xgrid: SpaceGrid, source=0.0) -> SpaceTimeField:
    """Classical backward Euler for ``u_t - J u = g`` on the same lattice."""
    A, b = laplacian_matrix(xgrid, spatial) if xgrid.n_points > 1 else (np.zeros((1, 1)), np.zeros(1))
    tau = tgrid.tau
    lu = linalg.lu_factor(np.eye(xgrid.n_points) / tau - A)
    cfg = SolverConfig(FractionalOrder(0.5), spatial, source)
    rows = [_initial_row(u0, xgrid)]
    t = tgrid.nodes
    for k in range(1, tgrid.kappa + 1):
        rows.append(linalg.lu_solve(lu, rows[-1] / tau + cfg.source_row(float(t[k]), k, xgrid.nodes) + b))
    return SpaceTimeField(tgrid, xgrid, np.array(rows))


def strong_residual(u: SpaceTimeField, cfg: SolverConfig) -> np.ndarray:
    """Per-row max norm of ``L_h u_k - J_h u_k - g_k`` for ``k = 1..kappa`` (exact memory)."""
    if not u.complete:
        raise DataError("strong residual needs a complete field")
    exact = SolverConfig(cfg.order, cfg.spatial, cfg.source, cfg.linear_solver_tol)
    sysm = _System(exact, u.tgrid, u.xgrid)
    U, x, t = u.values, u.xgrid.nodes, u.tgrid.nodes
    out = np.zeros(u.tgrid.kappa)
    for k in range(1, u.tgrid.kappa + 1):
        lk = sysm.W * U[k] - _history_sum(sysm, U, k, None) - sysm.tails[k] * U[0]
        out[k - 1] = np.max(np.abs(lk - sysm.apply_j(U[k]) - exact.source_row(float(t[k]), k, x)))
    return out


class WeakResidual(NamedTuple):
    """Terms of the discrete weak form; ``total`` is their signed sum."""

    total: float
    time_form: float
    space_form: float
    boundary_history: float
    adjoint: float
    source: float


@dataclass(frozen=True)
class TensorTest:
    """Test function ``theta(t, x) = time(t) * space(x)``."""

    time: Callable
    space: Callable

    def sample(self, tgrid: TimeGrid, xgrid: SpaceGrid) -> np.ndarray:
        tt = np.asarray([self.time(float(t)) for t in tgrid.nodes], dtype=float)
        return np.outer(tt, np.asarray(self.space(xgrid.nodes), dtype=float))


def _test_samples(test, tgrid: TimeGrid, xgrid: SpaceGrid):
    """``(theta, time trace, space profile)``; the last two are None for sampled tests."""
    if isinstance(test, TensorTest):
        tt = np.asarray([test.time(float(t)) for t in tgrid.nodes], dtype=float)
        xx = np.asarray(test.space(xgrid.nodes), dtype=float)
        return np.outer(tt, xx), tt, xx
    theta = np.asarray(test, dtype=float)
    if np.ndim(test) == 0:
        theta = np.full((tgrid.kappa + 1, xgrid.n_points), float(test))
    if theta.shape != (tgrid.kappa + 1, xgrid.n_points):
        raise DataError(f"test field of shape {theta.shape} does not fit the grids")
    return theta, None, None


def _adjoint_rows(test, order: FractionalOrder, tgrid: TimeGrid, theta, space, quad_tol: float) -> np.ndarray:
    """History-free operator ``c_a int_a^t (theta(t) - theta(s)) T ds`` at every node."""
    t = tgrid.nodes
    if isinstance(test, TensorTest):
        # a history equal to theta(t) switches the part before a off
        lt = [0.0] + [
            l_operator(test.time, order, float(tk), quad_tol=quad_tol, a=tgrid.a, history=float(test.time(float(tk))))
            for tk in t[1:]
        ]
        return np.outer(lt, space)
    w, _ = lattice_weights(order, tgrid.tau, tgrid.kappa)
    out = np.zeros_like(theta)
    for k in range(1, tgrid.kappa + 1):
        out[k] = w[:k] @ (theta[k] - theta[k - 1 :: -1])
    return out


def weak_residual(u: SpaceTimeField, test, cfg: SolverConfig, quad_tol: float = 1e-9) -> WeakResidual:
    """Discrete weak form of ``L u - J u = g`` tested against ``theta``.

    With ``S_k`` the lattice memory weight up to lag ``k``, the time operator
    satisfies the summation-by-parts identity

        sum_k theta_k L u_k = sum_{i<k} w_{k-i} (u_k - u_i)(theta_k - theta_i)
                              + sum_k u_k theta_k (S_k - S_{kappa-k})
                              + sum_k tail_k (u_k - u_0) theta_k
                              - sum_k u_k L_a theta_k.

    The boundary weight ``S_k - S_{kappa-k}`` and the history weight are
    replaced by their exact integrals
    ``nu (E_a(c (b-t)^a) - E_a(c (t-a)^a))`` and ``nu E_a(c (t-a)^a)``.  For a
    :class:`TensorTest` the history-free operator ``L_a theta`` is the
    continuous one.  The residual of a computed solution therefore measures
    consistency and shrinks with the grid.  Space terms use ``J_h`` directly.
    Rows ``1..kappa`` carry weight ``tau dx``.
    """
    if not u.complete:
        raise DataError("weak residual needs a complete field")
    order, tg, xg = cfg.order, u.tgrid, u.xgrid
    theta, _, space = _test_samples(test, tg, xg)
    U = u.values
    tau, dx = tg.tau, xg.spacing
    w, _ = lattice_weights(order, tau, tg.kappa)
    n = tg.kappa
    time_form = 0.0
    for k in range(1, n + 1):
        du = U[k] - U[k - 1 :: -1]
        dth = theta[k] - theta[k - 1 :: -1]
        time_form += float(np.sum(w[:k] @ (du * dth)))
    t = tg.nodes
    start = ml_relaxation(order, t - tg.a)
    boundary = order.nu_alpha * (ml_relaxation(order, tg.b - t) - start)
    hist = order.nu_alpha * start
    bh = float(np.sum(boundary @ (U * theta)) + np.sum(hist @ ((U - U[0]) * theta)))
    adjoint = -float(np.sum(U * _adjoint_rows(test, order, tg, theta, space, quad_tol)))
    space_form = 0.0
    src = 0.0
    if xg.n_points > 1:
        A, b = laplacian_matrix(xg, cfg.spatial)
    else:
        A, b = np.zeros((1, 1)), np.zeros(1)
    for k in range(1, n + 1):
        space_form -= float(theta[k] @ (A @ U[k] + b))
        src += float(theta[k] @ cfg.source_row(float(t[k]), k, xg.nodes))
    scale = tau * dx
    terms = [scale * v for v in (time_form, space_form, bh, adjoint, src)]
    total = terms[0] + terms[1] + terms[2] + terms[3] - terms[4]
    return WeakResidual(total, *terms)


class IBPResult(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def discrete_ibp_check(u: TimeSeries, order, j: int) -> IBPResult:
    """Lower bound of ``sum_{k<=j} u_k L u_k`` by the weighted squared differences.

    The bound is
    ``(tau^a c_a / 2) sum_{0<=i<k<=j} (u_k - u_i)^2 (k-i)^(a-1) E_{a,a}(c tau^a (k-i)^a)``.
    Needs ``u_0 = 0`` and a zero history.
    """
    order = as_order(order)
    if u.values[0] != 0.0 or u.history != 0.0:
        raise PreconditionError("the estimate needs u_0 = 0 and a zero history")
    n = u.grid.kappa
    if int(j) != j or not 0 <= j <= n:
        raise IndexError(f"j must lie in [0, {n}], got {j}")
    j = int(j)
    v = u.values
    lhs = math.fsum(v[k] * discrete_l(u, order, k) for k in range(1, j + 1))
    # tau^a c_a (k-i)^(a-1) E_{a,a}(c tau^a (k-i)^a) = tau c_a T(tau (k-i))
    wt = u.grid.tau * order.c_alpha * ml_kernel(order, u.grid.tau * np.arange(1, j + 1, dtype=float)) if j else np.zeros(0)
    terms = [0.5 * wt[k - i - 1] * (v[k] - v[i]) ** 2 for k in range(1, j + 1) for i in range(k)]
    rhs = math.fsum(terms)
    return IBPResult(lhs, rhs, bool(lhs >= rhs - 1e-12 * abs(lhs)))


class ParabolicSolver(BaseEstimator):
    """Estimator-style wrapper: ``fit(u0)`` runs the solver and stores ``field_``.

    ``predict(t)`` returns the solution row at the grid time nearest to ``t``.
    """

    def __init__(self, alpha=0.5, sigma=1.0, a=0.0, b=1.0, kappa=64, half_width=4.0, n_points=65,
                 far_field="zero", source=0.0, lambda_=None, Lambda=None, linear_solver_tol=1e-12, max_history=None):
        self.alpha = alpha
        self.sigma = sigma
        self.a = a
        self.b = b
        self.kappa = kappa
        self.half_width = half_width
        self.n_points = n_points
        self.far_field = far_field
        self.source = source
        self.lambda_ = lambda_
        self.Lambda = Lambda
        self.linear_solver_tol = linear_solver_tol
        self.max_history = max_history

    def config(self) -> SolverConfig:
        spatial = SpatialKernelSpec(self.sigma, lambda_=self.lambda_, Lambda=self.Lambda)
        return SolverConfig(FractionalOrder(self.alpha), spatial, self.source, self.linear_solver_tol, self.max_history)

    def grids(self):
        return TimeGrid(self.a, self.b, self.kappa), SpaceGrid(self.half_width, self.n_points, self.far_field)

    def fit(self, u0, y=None):
        tg, xg = self.grids()
        self.field_ = solve(u0, self.config(), tg, xg)
        return self

    def predict(self, t):
        tg = self.field_.tgrid
        k = int(np.clip(np.rint((np.asarray(t, dtype=float) - tg.a) / tg.tau), 0, tg.kappa))
        return self.field_.values[k].copy()

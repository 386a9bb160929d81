"""Acceptance suite: one function per criterion, each returning measured values.

Every check is computed from the library; nothing is looked up.  ``run_all``
is what ``abfrac acceptance`` prints.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, NamedTuple

import numpy as np

from .ab_operators import TimeGrid, TimeSeries, ab_caputo_form, ab_derivative, ab_integral, discrete_l, l_operator
from .diagnostics import holder_seminorm, oscillation_decay, point_estimate_scenario
from .fode import FodeProblem, barrier_l_bound, corollary_check, fode_residual, solve_c1_zero, solve_general
from .kernels import CAPUTO_KERNEL, ML_KERNEL, FractionalOrder, SpatialKernelSpec, TimeKernelSpec, verify_time_kernel_envelope, verify_time_symmetry
from .nonlocal_space import (
    ExtremalConstants,
    SampledField,
    SpaceGrid,
    fractional_laplacian,
    pucci_minus,
    pucci_plus,
    pucci_time_minus,
    pucci_time_plus,
)
from .parabolic_solver import SolverConfig, SpaceTimeField, discrete_ibp_check, solve, strong_residual
from .special_functions import MLParams, _asymptotic, _hankel, _series, _series_mp, asymptotic_onset, mittag_leffler

log = logging.getLogger(__name__)


class CriterionResult(NamedTuple):
    number: int
    title: str
    passed: bool
    details: dict


def _linear(s):
    return np.asarray(s, dtype=float)


def _square(s):
    return np.asarray(s, dtype=float) ** 2


def _ones(s):
    return np.ones_like(np.asarray(s, dtype=float))


def _twice(s):
    return 2.0 * np.asarray(s, dtype=float)


def _bump(x):
    return np.exp(-np.asarray(x, dtype=float) ** 2)


def special_functions_check(rng) -> tuple[bool, dict]:
    z = np.linspace(-30.0, 30.0, 1000)
    # the generic routes, not the exp shortcut
    e11 = np.array([_series(1.0, 1.0, v)[0] if v >= 0 else _series_mp(1.0, 1.0, v)[0] for v in z])
    exp_err = float(np.max(np.abs(e11 / np.exp(z) - 1.0)))
    x = np.linspace(0.0, 10.0, 1001)
    cos_err = float(np.max(np.abs(mittag_leffler(MLParams(2.0, 1.0), -(x**2)) - np.cos(x))))
    cross = 0.0
    for alpha in (0.2, 0.5, 0.7, 0.9, 0.95):
        for beta in (alpha, 1.0):
            x0 = asymptotic_onset(MLParams(alpha, beta))
            a, _ = _asymptotic(alpha, beta, x0)
            h, _ = _hankel(alpha, beta, x0)
            cross = max(cross, abs(a - h) / abs(h))
    ok = exp_err <= 1e-12 and cos_err <= 1e-10 and cross <= 1e-10
    return ok, {"exp_rel_err": exp_err, "cos_abs_err": cos_err, "crossover_rel_gap": cross}


def operator_identities_check(rng) -> tuple[bool, dict]:
    order = FractionalOrder(0.5)
    const = lambda s: np.full(np.shape(s), 3.0)
    g = TimeGrid(0.0, 1.0, 16)
    series = TimeSeries(g, np.full(17, 3.0))
    annihil = max(
        abs(ab_derivative(const, order, 0.0, 0.7)),
        abs(ab_caputo_form(const, order, 0.0, 0.7)),
        abs(l_operator(const, order, 0.7, a=0.0)),
        max(abs(discrete_l(series, order, k)) for k in range(17)),
    )
    sg = SpaceGrid(3.0, 61, "constant")
    field = SampledField(sg, np.full(61, 3.0))
    K = ExtremalConstants(0.5, 2.0)
    pucci = max(
        abs(pucci_plus(field, 0.3, K, 1.0)),
        abs(pucci_minus(field, 0.3, K, 1.0)),
        abs(pucci_time_plus(series, order, 0.7, K)),
        abs(pucci_time_minus(series, order, 0.7, K)),
    )
    inversion = 0.0
    for alpha in (0.25, 0.5, 0.75):
        o = FractionalOrder(alpha)
        for u, du in ((np.sin, np.cos), (_linear, _ones), (_square, _twice)):
            def d(y, u=u, du=du, o=o):
                return np.array([ab_derivative(u, o, 0.0, v, quad_tol=1e-9, du=du) if v > 0 else 0.0 for v in np.atleast_1d(y)])

            back = ab_integral(d, o, 0.0, 1.0, quad_tol=1e-7)
            inversion = max(inversion, abs(back - (float(u(1.0)) - float(u(0.0)))))
    ok = annihil <= 1e-14 and pucci <= 1e-14 and inversion <= 1e-6
    return ok, {"ab_constants": annihil, "pucci_constants": pucci, "inversion_err": inversion}


def representation_check(rng) -> tuple[bool, dict]:
    worst = 0.0
    cubic = lambda s: np.asarray(s, dtype=float) ** 3 - np.asarray(s, dtype=float)
    dcubic = lambda s: 3 * np.asarray(s, dtype=float) ** 2 - 1
    for alpha in (0.25, 0.5, 0.75):
        o = FractionalOrder(alpha)
        for u, du in ((np.sin, np.cos), (_square, _twice), (cubic, dcubic)):
            d = ab_derivative(u, o, 0.0, 0.9, quad_tol=1e-9, du=du)
            c = ab_caputo_form(u, o, 0.0, 0.9, quad_tol=1e-9)
            h = l_operator(u, o, 0.9, quad_tol=1e-9, a=0.0)
            worst = max(worst, abs(d - c), abs(c - h), abs(d - h))
    return worst <= 1e-6, {"cases": 9, "max_gap": worst}


def kernel_class_check(rng) -> tuple[bool, dict]:
    samples = list(zip(rng.uniform(0.0, 1.0, 100), rng.uniform(0.01, 1.0, 100)))
    sym = all(verify_time_symmetry(TimeKernelSpec(FractionalOrder(0.5), kind=k), samples) for k in (ML_KERNEL, CAPUTO_KERNEL))
    env = {}
    for alpha in (0.25, 0.5, 0.75):
        rep = verify_time_kernel_envelope(TimeKernelSpec(FractionalOrder(alpha), horizon=4.0), 64)
        env[alpha] = (rep.lambda_emp, rep.Lambda_emp)
    env_ok = all(0 < lo <= hi for lo, hi in env.values())
    return sym and env_ok, {"symmetry_ok": sym, **{f"envelope_{a}": v for a, v in env.items()}}


def discrete_consistency_check(rng) -> tuple[bool, dict]:
    order = FractionalOrder(0.5)
    exact = l_operator(_linear, order, 1.0, a=0.0)
    gaps = []
    for kappa in (128, 256, 512):
        g = TimeGrid(0.0, 1.0, kappa)
        gaps.append(abs(discrete_l(TimeSeries(g, g.nodes), order, kappa) - exact))
    ratios = [gaps[i + 1] / gaps[i] for i in range(2)]
    ok = all(0.375 <= r <= 0.625 for r in ratios)
    return ok, {"gaps": gaps, "ratios": ratios, "order": math.log2(gaps[1] / gaps[2])}


def fode_check(rng) -> tuple[bool, dict]:
    half = FractionalOrder(0.5)
    p = FodeProblem(half, 1.0, 0.0, 1.0)
    u = solve_c1_zero(p, TimeGrid(0.0, 1.0, 256))
    res0 = float(np.max(np.abs(fode_residual(u, p, nodes=range(0, 257, 4)))))
    pg = FodeProblem(half, 1.0, 1.0, 1.0)
    sol = solve_general(pg, TimeGrid(0.0, 1.0, 64))
    residuals = sol.info["residuals"]
    arbitration = residuals["paper_form"] <= 1e-4 or residuals[sol.info["method"]] <= 1e-4
    if residuals["paper_form"] > 1e-4:
        log.warning("closed form residual %.3g; using %s (%.3g)", residuals["paper_form"], sol.info["method"], residuals[sol.info["method"]])
    floors = [corollary_check(FractionalOrder(a), 0.1, c1, 1.0).holds for a in (0.25, 0.5, 0.75) for c1 in (0.5, 1.0, 2.0)]
    ok = res0 <= 1e-4 and arbitration and all(floors)
    return ok, {"c1_zero_residual": res0, "chosen": sol.info["method"], "residuals": residuals, "floor_sweep": f"{sum(floors)}/9"}


def barrier_check(rng) -> tuple[bool, dict]:
    half = FractionalOrder(0.5)
    t1s = np.sort(rng.uniform(-4.0, 0.0, 50))
    grid_values = barrier_l_bound(half, 0.25, 1.0, 0.0, quad_tol=1e-11).d_emp
    values = np.array([barrier_l_bound(half, 0.25, 1.0, float(t), quad_tol=1e-11, grid=[]).value for t in t1s])
    d_emp = max(grid_values, float(-values.min()))
    ok = bool(np.all(values <= 1e-10) and np.all(values >= -d_emp))
    return ok, {"points": 50, "max_value": float(values.max()), "d_emp": d_emp}


def ibp_check(rng) -> tuple[bool, dict]:
    fails = 0
    for i in range(100):
        alpha = (0.25, 0.5, 0.75)[i % 3]
        v = np.concatenate([[0.0], rng.uniform(0.0, 1.0, 32) * rng.choice([-1.0, 1.0], 32)])
        s = TimeSeries(TimeGrid(0.0, 1.0, 32), v, history=0.0)
        fails += not discrete_ibp_check(s, FractionalOrder(alpha), 32).holds
    return fails == 0, {"series": 100, "failures": fails}


def _manufactured(kappa, n):
    half, lap = FractionalOrder(0.5), SpatialKernelSpec(1.0)
    tg, xg = TimeGrid(0.0, 1.0, kappa), SpaceGrid(6.0, n)
    x, t = xg.nodes, tg.nodes
    j_bump = np.array([fractional_laplacian(_bump, lap, xi) for xi in x])
    l_t = half.nu_alpha * t * mittag_leffler(MLParams(0.5, 2.0), half.c * t**0.5)
    cfg = SolverConfig(half, lap, np.outer(l_t, _bump(x)) - np.outer(t, j_bump))
    target = SpaceTimeField(tg, xg, np.outer(t, _bump(x)))
    return float(np.max(strong_residual(target, cfg)))


def solver_check(rng) -> tuple[bool, dict]:
    half, lap = FractionalOrder(0.5), SpatialKernelSpec(1.0)
    steady = solve(0.7, SolverConfig(half, lap), TimeGrid(0.0, 1.0, 32), SpaceGrid(4.0, 33, "constant"))
    steady_err = float(np.max(np.abs(steady.values - 0.7)))
    mms = [_manufactured(128, 129), _manufactured(256, 257)]
    tg, xg = TimeGrid(0.0, 1.0, 32), SpaceGrid(3.0, 33)
    worst = -math.inf
    for _ in range(10):
        u0, g = rng.uniform(-1, 1, 33), rng.uniform(-1, 1, (33, 33))
        lo = solve(u0, SolverConfig(half, lap, g), tg, xg)
        hi = solve(u0 + rng.uniform(0, 1, 33), SolverConfig(half, lap, g + rng.uniform(0, 1, (33, 33))), tg, xg)
        worst = max(worst, float(np.max(lo.values - hi.values)))
    cfg = SolverConfig(FractionalOrder(0.3), SpatialKernelSpec(1.5), lambda t, x: np.cos(t) * _bump(x))
    runs = [solve(_bump, cfg, tg, SpaceGrid(3.0, 31)).values.tobytes() for _ in range(2)]
    ok = steady_err <= 1e-12 and mms[0] <= 1e-3 and mms[1] < mms[0] and worst <= 1e-10 and runs[0] == runs[1]
    return ok, {"steady_err": steady_err, "manufactured": mms, "comparison_worst": worst, "bit_identical": runs[0] == runs[1]}


def pucci_check(rng) -> tuple[bool, dict]:
    K = ExtremalConstants(0.5, 2.0)
    one = ExtremalConstants(1.0, 1.0)
    sg = SpaceGrid(3.0, 97)
    order = FractionalOrder(0.5)
    tg = TimeGrid(0.0, 1.0, 32)
    space_gap = time_gap = 0.0
    for _ in range(50):
        c, w, a, f = rng.uniform(-1, 1), rng.uniform(0.5, 1.5), rng.uniform(-2, 2), rng.uniform(0, 3)
        vals = a * np.exp(-((sg.nodes - c) ** 2) / w**2) * np.cos(f * sg.nodes)
        x = float(rng.uniform(-1, 1))
        m = pucci_minus(SampledField(sg, vals), x, K, 1.0)
        space_gap = max(space_gap, abs(pucci_plus(SampledField(sg, -vals), x, K, 1.0) + m) / max(1.0, abs(m)))
        v = rng.normal(size=33)
        mt = pucci_time_minus(TimeSeries(tg, v), order, 0.7, K)
        time_gap = max(time_gap, abs(pucci_time_plus(TimeSeries(tg, -v), order, 0.7, K) + mt) / max(1.0, abs(mt)))
    u = SampledField(sg, _bump(sg.nodes) * np.cos(sg.nodes))
    lin = fractional_laplacian(u, SpatialKernelSpec(1.0, normalization=1.0), 0.1)
    series = TimeSeries(tg, rng.normal(size=33))
    collapse = max(
        abs(pucci_plus(u, 0.1, one, 1.0) - lin),
        abs(pucci_minus(u, 0.1, one, 1.0) - lin),
        abs(pucci_time_plus(series, order, 0.7, one) - l_operator(series, order, 0.7)),
    )
    ok = space_gap <= 1e-12 and time_gap <= 1e-12 and collapse <= 1e-8
    return ok, {"space_duality": space_gap, "time_duality": time_gap, "collapse": collapse}


def regularity_check(rng) -> tuple[bool, dict]:
    violations = 0
    for alpha in (0.5, 0.75):
        for sigma in (1.0, 1.5):
            cfg = SolverConfig(FractionalOrder(alpha), SpatialKernelSpec(sigma))
            f = solve(_bump, cfg, TimeGrid(0.0, 1.0, 64), SpaceGrid(4.0, 129))
            osc = oscillation_decay(f, 0.8, 2, sigma=sigma, alpha=alpha).oscillations
            violations += int(np.sum(osc[1:] > osc[:-1]))
    tg, xg = TimeGrid(-1.0, 0.0, 100), SpaceGrid(2.0, 129)
    T, X = np.meshgrid(tg.nodes, xg.nodes, indexing="ij")
    synthetic = SpaceTimeField(tg, xg, np.sqrt(np.abs(X)) * np.exp(-(X**2) / 16) + 0 * T)
    kappa = oscillation_decay(synthetic, 0.5, 4, sigma=0.5, alpha=0.75).fitted_kappa
    theta = point_estimate_scenario(SolverConfig(FractionalOrder(0.5), SpatialKernelSpec(1.0)), 0.5).theta_emp
    ok = violations == 0 and abs(kappa - 0.5) <= 0.1 and theta > 0
    return ok, {"nested_violations": violations, "fitted_kappa": kappa, "theta_emp": theta}


def uniformity_check(rng) -> tuple[bool, dict]:
    fields = {}
    for alpha in (0.7, 0.8, 0.9, 0.95):
        cfg = SolverConfig(FractionalOrder(alpha), SpatialKernelSpec(1.0))
        fields[alpha] = solve(_bump, cfg, TimeGrid(0.0, 1.0, 64), SpaceGrid(4.0, 129))
    fitted = oscillation_decay(fields[0.7], 0.8, 2, sigma=1.0, alpha=0.7).fitted_kappa
    kappa = float(min(1.0, fitted))
    # away from the initial layer
    values = {a: holder_seminorm(f, kappa, a, 1.0, region=(-1.0, 1.0, 0.5, 1.0)) for a, f in fields.items()}
    spread = max(values.values()) / min(values.values())
    return spread <= 2.0, {"kappa": kappa, "seminorms": values, "spread": spread}


CRITERIA: dict[int, tuple[str, Callable]] = {
    1: ("special functions", special_functions_check),
    2: ("operator identities", operator_identities_check),
    3: ("representation equivalence", representation_check),
    4: ("kernel class", kernel_class_check),
    5: ("discrete consistency", discrete_consistency_check),
    6: ("fode", fode_check),
    7: ("barrier", barrier_check),
    8: ("discrete integration by parts", ibp_check),
    9: ("solver", solver_check),
    10: ("pucci", pucci_check),
    11: ("regularity diagnostics", regularity_check),
    12: ("alpha to 1 uniformity", uniformity_check),
}


def run(number: int, seed: int = 0) -> CriterionResult:
    title, fn = CRITERIA[number]
    rng = np.random.default_rng([seed, number])
    passed, details = fn(rng)
    return CriterionResult(number, title, bool(passed), details)


def run_all(seed: int = 0, numbers=None) -> list[CriterionResult]:
    return [run(n, seed) for n in (numbers or sorted(CRITERIA))]


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_fmt(x)}" for k, x in v.items()) + "}"
    return str(v)


def format_line(r: CriterionResult) -> str:
    body = "; ".join(f"{k}={_fmt(v)}" for k, v in r.details.items())
    return f"[{'PASS' if r.passed else 'FAIL'}] {r.number:>2} {r.title}: {body}"

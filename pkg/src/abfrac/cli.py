"""Command-line entry point.

Fields travel as CSV, configs and reports as JSON.  Every artifact is
written to a temporary file in the target directory and renamed into
place.  Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

from . import acceptance
from .ab_operators import TimeGrid, TimeSeries, ab_caputo_form, ab_derivative, ab_integral, discrete_l_all, l_operator
from .diagnostics import ParabolicCylinder, holder_seminorm, oscillation_decay, point_estimate_scenario
from .exceptions import AbfracError, AccuracyError, MLOverflowError, ResolutionError, SolverError
from .fode import FodeProblem, PiecewiseConstant, fode_residual, solve_c1_zero, solve_general
from .kernels import FractionalOrder, SpatialKernelSpec, TimeKernelSpec, verify_time_kernel_envelope, verify_time_symmetry
from .nonlocal_space import ExtremalConstants, SampledField, SpaceGrid, fractional_laplacian, pucci_minus, pucci_plus
from .parabolic_solver import SolverConfig, SpaceTimeField, solve
from .special_functions import MLParams, evaluate

log = logging.getLogger("abfrac")

FIELD_TAG = "# abfrac-field "
NUMERICAL_ERRORS = (AccuracyError, SolverError, MLOverflowError, ResolutionError)

RUN_REQUIRED = ("alpha", "sigma", "a", "b", "kappa", "L", "N", "u0")
RUN_OPTIONAL = ("lambda", "Lambda", "g", "far_field", "normalization", "linear_solver_tol", "max_history")

DIAG_KEYS = {
    "osc": ({"r", "depth"}, {"center", "sigma", "alpha"}),
    "holder": ({"kappa"}, {"alpha", "sigma", "region"}),
    "point-estimate": ({"mu"}, {"alpha", "sigma", "level", "depth", "kappa", "n_points", "half_width"}),
}


class UsageError(Exception):
    """Invalid command line or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# artifacts

def _fmt(v: float) -> str:
    return repr(float(v))


@contextlib.contextmanager
def _atomic(path):
    target = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(target), prefix=".abfrac-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh
        os.replace(tmp, target)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj if obj is None or isinstance(obj, str) else str(obj)


def write_json(path, obj):
    text = json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    with _atomic(path) as fh:
        fh.write(text)


def read_json(path) -> dict:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return data


def write_table(path, header, columns):
    with _atomic(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in row])


def read_columns(path, *names) -> list[np.ndarray]:
    """Named numeric columns of a CSV with a header row."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise UsageError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    missing = [n for n in names if n not in header]
    if missing:
        raise UsageError(f"{path}: missing column(s) {missing}; found {header}")
    try:
        body = np.array([[float(r[header.index(n)]) for n in names] for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise UsageError(f"{path}: malformed row ({exc})") from exc
    if body.shape[0] == 0:
        raise UsageError(f"{path}: no data rows")
    return [body[:, i] for i in range(len(names))]


def _uniform(t, path) -> TimeGrid:
    if t.size < 2:
        raise UsageError(f"{path}: need at least two time samples")
    grid = TimeGrid(float(t[0]), float(t[-1]), t.size - 1)
    if np.max(np.abs(grid.nodes - t)) > 1e-9 * max(1.0, abs(t[-1] - t[0])):
        raise UsageError(f"{path}: time column is not a uniform grid")
    return grid


def _space_grid(x, path, far_field="zero") -> SpaceGrid:
    grid = SpaceGrid(float(x[-1]), x.size, far_field)
    if np.max(np.abs(grid.nodes - x)) > 1e-9 * max(1.0, grid.half_width):
        raise UsageError(f"{path}: x column is not a symmetric uniform grid")
    return grid


def _far_field_text(ff) -> str:
    if ff is None or ff.kind == "zero":
        return "zero"
    if ff.kind == "constant":
        return "constant" if ff.value is None else f"constant:{ff.value!r}"
    if ff.kind == "power_growth":
        return f"power_growth:{ff.growth!r}"
    return ff.kind


def write_field(path, u: SpaceTimeField):
    meta = {"a": float(u.tgrid.a), "b": float(u.tgrid.b), "kappa": u.tgrid.kappa, "L": float(u.xgrid.half_width),
            "N": u.xgrid.n_points, "far_field": _far_field_text(u.far_field)}
    with _atomic(path) as fh:
        fh.write(FIELD_TAG + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *map(_fmt, u.xgrid.nodes)])
        for t, row in zip(u.tgrid.nodes, u.values):
            w.writerow([_fmt(t), *map(_fmt, row)])


def read_field(path) -> SpaceTimeField:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith(FIELD_TAG):
            raise UsageError(f"{path}: missing '{FIELD_TAG.strip()}' metadata line")
        try:
            meta = json.loads(first[len(FIELD_TAG):])
            tg = TimeGrid(meta["a"], meta["b"], meta["kappa"])
            xg = SpaceGrid(meta["L"], meta["N"], meta.get("far_field", "zero"))
            rows = [r for r in csv.reader(fh) if r]
            values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise UsageError(f"{path}: malformed field file ({exc})") from exc
    return SpaceTimeField(tg, xg, values)


# specs for data and forcing

def _spatial_spec(spec, what):
    """Number, ``const:V``, ``gaussian:A,W`` (A exp(-x^2/W^2)), ``indicator:lo,hi`` or ``csv:path``."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return lambda x: np.full(np.shape(x), float(spec))
    if not isinstance(spec, str):
        raise UsageError(f"{what}: expected a number or a spec string, got {spec!r}")
    kind, _, arg = spec.partition(":")
    try:
        nums = [float(v) for v in arg.split(",")] if kind in ("const", "gaussian", "indicator") else []
    except ValueError as exc:
        raise UsageError(f"{what}: bad numbers in {spec!r}") from exc
    if kind == "const" and len(nums) == 1:
        return lambda x: np.full(np.shape(x), nums[0])
    if kind == "gaussian" and len(nums) == 2 and nums[1] > 0:
        amp, width = nums
        return lambda x: amp * np.exp(-((np.asarray(x, dtype=float) / width) ** 2))
    if kind == "indicator" and len(nums) == 2 and nums[0] < nums[1]:
        lo, hi = nums
        return lambda x: ((np.asarray(x) >= lo) & (np.asarray(x) < hi)).astype(float)
    if kind == "csv" and arg:
        return ("csv", arg)
    raise UsageError(f"{what}: unrecognised spec {spec!r}")


def _h_spec(text) -> PiecewiseConstant:
    kind, _, arg = text.partition(":")
    try:
        if kind == "const":
            return PiecewiseConstant.constant(float(arg))
        if kind == "indicator":
            lo, hi = (float(v) for v in arg.split(","))
            return PiecewiseConstant.indicator(lo, hi)
    except ValueError as exc:
        raise UsageError(f"--h: bad numbers in {text!r}") from exc
    if kind == "csv" and arg:
        t, h = read_columns(arg, "t", "h")
        if t.size < 2 or np.any(np.diff(t) <= 0):
            raise UsageError(f"{arg}: t must increase strictly")
        return PiecewiseConstant(list(zip(t[:-1], t[1:], h[:-1])))
    raise UsageError(f"--h: expected const:V, indicator:a,b or csv:path, got {text!r}")


# subcommands

def cmd_ml_eval(args):
    params = MLParams(args.alpha, args.beta)
    if args.grid is None:
        if args.z is None:
            raise UsageError("ml-eval needs --z or --grid")
        print(evaluate(params, args.z).value)
        return 0
    try:
        start, stop, n = args.grid.split(":")
        zs = np.linspace(float(start), float(stop), int(n))
    except ValueError as exc:
        raise UsageError(f"--grid expects start:stop:n, got {args.grid!r}") from exc
    results = [evaluate(params, float(z)) for z in zs]
    if args.csv is None:
        for z, r in zip(zs, results):
            print(_fmt(z), _fmt(r.value), r.method, _fmt(r.est_error))
    else:
        write_table(args.csv, ["z", "value", "method", "est_error"],
                    [zs, [r.value for r in results], [r.method for r in results], [r.est_error for r in results]])
    return 0


def cmd_kernel_verify(args):
    spec = TimeKernelSpec(FractionalOrder(args.alpha), horizon=args.horizon, kind=args.kind)
    env = verify_time_kernel_envelope(spec, args.samples)
    rng = np.random.default_rng(args.seed)
    gaps = rng.uniform(0.0, args.horizon / 2, (args.samples, 2))
    samples = [(args.horizon / 2 + s, g) for s, g in gaps if g > 0]
    report = {"kind": spec.kind, "alpha": args.alpha, "horizon": args.horizon, "lambda_emp": env.lambda_emp,
              "Lambda_emp": env.Lambda_emp, "envelope_ok": env.holds,
              "symmetry_ok": verify_time_symmetry(spec, samples), "grid": env.grid}
    write_json(args.json, report)
    return 0


AB_FORMS = ("deriv", "caputo", "history", "integral", "discrete")


def cmd_ab_apply(args):
    t, u = read_columns(args.input, "t", "u")
    grid = _uniform(t, args.input)
    series = TimeSeries(grid, u)
    order = FractionalOrder(args.alpha)
    a = grid.a if args.a is None else args.a
    if not grid.a <= a < grid.b:
        raise UsageError(f"--a {a} lies outside the series [{grid.a}, {grid.b}]")
    out = TimeGrid(a, grid.b if args.b is None else args.b, grid.kappa if args.kappa is None else args.kappa)
    if out.b > grid.b + 1e-12 * max(1.0, abs(grid.b)):
        raise UsageError(f"--b {out.b} is past the end of the series {grid.b}")
    if args.form == "discrete":
        if (out.a, out.b, out.kappa) != (grid.a, grid.b, grid.kappa):
            raise UsageError("the discrete form runs on the input grid; drop --a, --b and --kappa")
        values = discrete_l_all(series, order)
    else:
        values = []
        for tk in out.nodes:
            if args.form == "history":
                values.append(l_operator(series, order, tk))
            elif tk <= a:
                values.append(0.0)
            elif args.form == "deriv":
                values.append(ab_derivative(series, order, a, tk))
            elif args.form == "caputo":
                values.append(ab_caputo_form(series, order, a, tk))
            else:
                values.append(ab_integral(series, order, a, tk))
    write_table(args.output, ["t", "u", "value"], [out.nodes, series(out.nodes), values])
    return 0


def cmd_fode_solve(args):
    h = _h_spec(args.h)
    p = FodeProblem(FractionalOrder(args.alpha), args.c0, args.c1, h, u0=args.u0, start=args.start, end=args.end)
    grid = TimeGrid(args.start, args.end, args.kappa)
    if args.c1 == 0:
        sol = solve_c1_zero(p, grid)
        method, residuals = "c1_zero", None
    else:
        sol = solve_general(p, grid)
        method, residuals = sol.info["method"], sol.info["residuals"]
    write_table(args.out, ["t", "u"], [grid.nodes, sol.values])
    if args.residual_report:
        stride = max(1, grid.kappa // 32)
        nodes = list(range(0, grid.kappa + 1, stride))
        r = np.abs(fode_residual(sol, p, nodes=nodes))
        write_json(args.residual_report, {"method": method, "candidates": residuals, "nodes": [float(grid.nodes[k]) for k in nodes],
                                          "residual": r, "max_residual": float(np.max(r))})
    return 0


def cmd_space_apply(args):
    x, u = read_columns(args.field, "x", "u")
    grid = _space_grid(x, args.field, args.far_field)
    f = SampledField(grid, u)
    if args.op == "lap":
        spec = SpatialKernelSpec(args.sigma, lambda_=args.lambda_, Lambda=args.Lambda, normalization=args.normalization)
        values = [fractional_laplacian(f, spec, xi) for xi in x]
    else:
        if args.lambda_ is None or args.Lambda is None:
            raise UsageError(f"--op {args.op} needs --lambda and --Lambda")
        K = ExtremalConstants(args.lambda_, args.Lambda)
        op = pucci_plus if args.op == "mplus" else pucci_minus
        values = [op(f, xi, K, args.sigma) for xi in x]
    write_table(args.out, ["x", "u", "value"], [x, u, values])
    return 0


def load_run_config(path):
    cfg = read_json(path)
    unknown = sorted(set(cfg) - set(RUN_REQUIRED) - set(RUN_OPTIONAL))
    if unknown:
        raise UsageError(f"{path}: unknown key(s) {unknown}")
    missing = [k for k in RUN_REQUIRED if k not in cfg]
    if missing:
        raise UsageError(f"{path}: missing key(s) {missing}")
    for k in RUN_REQUIRED[:7] + ("lambda", "Lambda", "normalization", "linear_solver_tol"):
        v = cfg.get(k)
        if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
            raise UsageError(f"{path}: {k} must be a number, got {v!r}")
    for k in ("kappa", "N", "max_history"):
        v = cfg.get(k)
        if v is not None and int(v) != v:
            raise UsageError(f"{path}: {k} must be an integer, got {v!r}")
    return cfg


def build_run(cfg):
    tg = TimeGrid(cfg["a"], cfg["b"], int(cfg["kappa"]))
    xg = SpaceGrid(cfg["L"], int(cfg["N"]), cfg.get("far_field", "zero"))
    spatial = SpatialKernelSpec(cfg["sigma"], lambda_=cfg.get("lambda"), Lambda=cfg.get("Lambda"),
                                normalization=cfg.get("normalization"))
    u0 = _spatial_spec(cfg["u0"], "u0")
    if isinstance(u0, tuple):
        x, v = read_columns(u0[1], "x", "u")
        if x.size != xg.n_points or np.max(np.abs(x - xg.nodes)) > 1e-9 * max(1.0, xg.half_width):
            raise UsageError(f"{u0[1]}: x column does not match L and N")
        u0 = v
    g = _spatial_spec(cfg.get("g", 0.0), "g")
    if isinstance(g, tuple):
        gf = read_field(g[1])
        if gf.values.shape != (tg.kappa + 1, xg.n_points):
            raise UsageError(f"{g[1]}: source field shape {gf.values.shape} does not match the run")
        source = gf.values
    else:
        source = lambda t, x, g=g: g(x)
    max_history = cfg.get("max_history")
    solver = SolverConfig(FractionalOrder(cfg["alpha"]), spatial, source,
                          cfg.get("linear_solver_tol", 1e-12), None if max_history is None else int(max_history))
    return u0, solver, tg, xg


def cmd_pde_solve(args):
    u0, solver, tg, xg = build_run(load_run_config(args.config))
    field = solve(u0, solver, tg, xg)
    write_field(args.out, field)
    if args.diag:
        steps = field.info["steps"]
        write_json(args.diag, {"W": field.info["W"], "far_field": _far_field_text(field.far_field),
                               "max_step_residual": max((s["residual"] for s in steps), default=0.0),
                               "max_refinements": max((s["refinements"] for s in steps), default=0),
                               "steps": steps})
    return 0


def _check_params(params, mode):
    required, optional = DIAG_KEYS[mode]
    unknown = sorted(set(params) - required - optional)
    if unknown:
        raise UsageError(f"--params: unknown key(s) {unknown} for mode {mode}")
    missing = sorted(required - set(params))
    if missing:
        raise UsageError(f"--params: missing key(s) {missing} for mode {mode}")


def cmd_diagnose(args):
    params = read_json(args.params) if args.params else {}
    _check_params(params, args.mode)
    if args.mode == "point-estimate":
        spatial = SpatialKernelSpec(params.get("sigma", 1.0))
        cfg = SolverConfig(FractionalOrder(params.get("alpha", 0.5)), spatial)
        extra = {k: params[k] for k in ("level", "depth", "kappa", "n_points", "half_width") if k in params}
        report = point_estimate_scenario(cfg, params["mu"], **extra)._asdict()
    else:
        if args.field is None:
            raise UsageError(f"--mode {args.mode} needs --field")
        u = read_field(args.field)
        alpha, sigma = params.get("alpha", 0.5), params.get("sigma", 1.0)
        if args.mode == "osc":
            center = params.get("center")
            rep = oscillation_decay(u, params["r"], params["depth"], None if center is None else tuple(center), sigma, alpha)
            report = rep._asdict()
        else:
            region = params.get("region")
            if isinstance(region, dict):
                region = ParabolicCylinder(tuple(region["center"]), region["radius"], sigma, alpha)
            value = holder_seminorm(u, params["kappa"], alpha, sigma, region)
            report = {"kappa": params["kappa"], "alpha": alpha, "sigma": sigma, "seminorm": value}
    write_json(args.out, {"mode": args.mode, **report})
    return 0


def cmd_acceptance(args):
    results = acceptance.run_all(seed=args.seed, numbers=args.only)
    for r in results:
        print(acceptance.format_line(r))
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    if args.out:
        write_json(args.out, [r._asdict() for r in results])
    return 0 if passed == len(results) else 2


# wiring

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="abfrac", description="Fractional-in-time nonlocal parabolic toolkit")
    p.add_argument("--threads", type=int, default=0, help="BLAS threads (0 = library default)")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--seed", type=int, default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ml-eval", help="evaluate E_{alpha,beta}")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--z", type=float)
    s.add_argument("--grid", help="start:stop:n")
    s.add_argument("--csv")
    s.set_defaults(run=cmd_ml_eval)

    s = sub.add_parser("kernel-verify", help="empirical time-kernel envelope and symmetry")
    s.add_argument("--kind", choices=["ml", "caputo"], default="ml")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--horizon", type=float, default=4.0)
    s.add_argument("--samples", type=int, default=64)
    s.add_argument("--json")
    s.set_defaults(run=cmd_kernel_verify)

    s = sub.add_parser("ab-apply", help="apply a fractional operator to a sampled series")
    s.add_argument("--form", choices=AB_FORMS, required=True)
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--a", type=float)
    s.add_argument("--b", type=float)
    s.add_argument("--kappa", type=int)
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.set_defaults(run=cmd_ab_apply)

    s = sub.add_parser("fode-solve", help="solve the scalar fractional ODE")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--c0", type=float, required=True)
    s.add_argument("--c1", type=float, default=0.0)
    s.add_argument("--h", default="const:1")
    s.add_argument("--u0", type=float, default=0.0)
    s.add_argument("--start", type=float, default=0.0)
    s.add_argument("--end", type=float, default=1.0)
    s.add_argument("--kappa", type=int, default=128)
    s.add_argument("--out", required=True)
    s.add_argument("--residual-report")
    s.set_defaults(run=cmd_fode_solve)

    s = sub.add_parser("space-apply", help="apply the nonlocal spatial operators to a sampled field")
    s.add_argument("--op", choices=["lap", "mplus", "mminus"], required=True)
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--lambda", dest="lambda_", type=float)
    s.add_argument("--Lambda", type=float)
    s.add_argument("--normalization", type=float)
    s.add_argument("--far-field", default="zero")
    s.add_argument("--field", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(run=cmd_space_apply)

    s = sub.add_parser("pde-solve", help="run the space-time solver from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--diag")
    s.set_defaults(run=cmd_pde_solve)

    s = sub.add_parser("diagnose", help="regularity diagnostics")
    s.add_argument("--field")
    s.add_argument("--mode", choices=list(DIAG_KEYS), required=True)
    s.add_argument("--params")
    s.add_argument("--out")
    s.set_defaults(run=cmd_diagnose)

    s = sub.add_parser("acceptance", help="run the acceptance suite")
    s.add_argument("--only", type=int, nargs="+", choices=sorted(acceptance.CRITERIA))
    s.add_argument("--out")
    s.set_defaults(run=cmd_acceptance)
    return p


def _fail(exc, code) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(exc, 1)
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    limits = contextlib.nullcontext()
    if args.threads > 0:
        from threadpoolctl import threadpool_limits

        limits = threadpool_limits(limits=args.threads)
    try:
        with limits:
            return args.run(args)
    except NUMERICAL_ERRORS as exc:
        return _fail(exc, 2)
    except (UsageError, AbfracError, ValueError, OSError) as exc:
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())

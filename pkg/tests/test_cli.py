import csv
import json

import numpy as np
import pytest

from abfrac.ab_operators import TimeGrid, TimeSeries, discrete_l_all
from abfrac.cli import main, read_columns, read_field
from abfrac.kernels import FractionalOrder, SpatialKernelSpec
from abfrac.nonlocal_space import SampledField, SpaceGrid, fractional_laplacian
from abfrac.parabolic_solver import SolverConfig, solve

RUN = {"alpha": 0.5, "sigma": 1.0, "a": 0.0, "b": 1.0, "kappa": 16, "L": 4.0, "N": 17, "u0": "gaussian:1,1"}


def write_series(path, name, x, u):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name, "u"])
        w.writerows([repr(float(a)), repr(float(b))] for a, b in zip(x, u))
    return str(path)


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestMLEval:
    def test_trivial(self, capsys):
        assert main(["ml-eval", "--alpha", "1", "--beta", "1", "--z", "0"]) == 0
        assert capsys.readouterr().out.strip() == "1.0"

    def test_grid_csv(self, tmp_path):
        out = tmp_path / "ml.csv"
        assert main(["ml-eval", "--alpha", "1", "--grid=-1:1:5", "--csv", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "z,value,method,est_error" and len(lines) == 6
        z, v = read_columns(out, "z", "value")
        assert np.allclose(v, np.exp(z), rtol=1e-14)

    def test_needs_z(self, capsys):
        assert main(["ml-eval", "--alpha", "0.5"]) == 1
        assert error_of(capsys)["exit_code"] == 1


class TestKernelVerify:
    def test_caputo_ratio_is_constant(self, tmp_path):
        out = tmp_path / "k.json"
        assert main(["kernel-verify", "--kind", "caputo", "--alpha", "0.5", "--horizon", "4", "--samples", "64", "--json", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["lambda_emp"] == pytest.approx(rep["Lambda_emp"], rel=1e-12)
        assert rep["symmetry_ok"] and len(rep["grid"]) == 64

    def test_ml_envelope(self, capsys):
        assert main(["kernel-verify", "--kind", "ml", "--alpha", "0.25", "--samples", "16"]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert 0 < rep["lambda_emp"] <= rep["Lambda_emp"]


class TestErrors:
    def test_unknown_flag(self, capsys):
        assert main(["ml-eval", "--alpha", "1", "--frobnicate"]) == 1
        err = error_of(capsys)
        assert err["error"] == "UsageError" and "frobnicate" in err["message"]

    def test_unknown_subcommand(self, capsys):
        assert main(["nope"]) == 1

    def test_domain_error(self, capsys):
        assert main(["ml-eval", "--alpha", "-1", "--z", "0"]) == 1
        assert error_of(capsys)["error"] == "DomainError"

    def test_missing_file(self, tmp_path, capsys):
        assert main(["ab-apply", "--form", "deriv", "--alpha", "0.5", "--input", str(tmp_path / "no.csv"), "--output", str(tmp_path / "o.csv")]) == 1

    def test_numerical_failure(self, tmp_path, capsys):
        field = tmp_path / "f.csv"
        assert main(["pde-solve", "--config", write_json(tmp_path / "r.json", {**RUN, "N": 9}), "--out", str(field)]) == 0
        params = write_json(tmp_path / "p.json", {"r": 0.5, "depth": 4})
        assert main(["diagnose", "--field", str(field), "--mode", "osc", "--params", str(params)]) == 2
        assert error_of(capsys)["error"] == "ResolutionError"


class TestABApply:
    @pytest.fixture
    def series(self, tmp_path):
        t = np.linspace(0.0, 1.0, 17)
        return write_series(tmp_path / "s.csv", "t", t, np.sin(t))

    @pytest.mark.parametrize("form", ["deriv", "caputo", "history", "integral", "discrete"])
    def test_round_trip(self, tmp_path, series, form):
        out, again = tmp_path / "o.csv", tmp_path / "o2.csv"
        assert main(["ab-apply", "--form", form, "--alpha", "0.5", "--input", series, "--output", str(out)]) == 0
        assert main(["ab-apply", "--form", form, "--alpha", "0.5", "--input", str(out), "--output", str(again)]) == 0
        assert out.read_bytes() == again.read_bytes()

    def test_zero_at_start(self, tmp_path, series):
        out = tmp_path / "o.csv"
        main(["ab-apply", "--form", "deriv", "--alpha", "0.5", "--input", series, "--output", str(out)])
        t, v = read_columns(out, "t", "value")
        assert v[0] == 0.0 and v[-1] > 0

    def test_discrete_matches_library(self, tmp_path, series):
        out = tmp_path / "o.csv"
        main(["ab-apply", "--form", "discrete", "--alpha", "0.5", "--input", series, "--output", str(out)])
        t, u, v = read_columns(out, "t", "u", "value")
        assert np.array_equal(v, discrete_l_all(TimeSeries(TimeGrid(0.0, 1.0, 16), u), FractionalOrder(0.5)))

    def test_discrete_rejects_regridding(self, tmp_path, series):
        assert main(["ab-apply", "--form", "discrete", "--alpha", "0.5", "--kappa", "8", "--input", series, "--output", str(tmp_path / "o.csv")]) == 1

    def test_nonuniform_input(self, tmp_path):
        bad = write_series(tmp_path / "s.csv", "t", [0.0, 0.1, 0.5, 1.0], [0.0, 1.0, 2.0, 3.0])
        assert main(["ab-apply", "--form", "deriv", "--alpha", "0.5", "--input", bad, "--output", str(tmp_path / "o.csv")]) == 1


class TestFodeSolve:
    @pytest.mark.parametrize("c1,h", [(0.0, "const:1"), (1.0, "indicator:0.2,0.6")])
    def test_residual_report(self, tmp_path, c1, h):
        out, rep = tmp_path / "u.csv", tmp_path / "r.json"
        argv = ["fode-solve", "--alpha", "0.5", "--c0", "1", "--c1", str(c1), "--h", h, "--kappa", "64", "--out", str(out), "--residual-report", str(rep)]
        assert main(argv) == 0
        assert json.loads(rep.read_text())["max_residual"] <= 1e-4
        assert read_columns(out, "t", "u")[0].size == 65

    def test_csv_forcing(self, tmp_path):
        h = tmp_path / "h.csv"
        h.write_text("t,h\n0.0,1.0\n0.5,2.0\n1.0,0.0\n")
        assert main(["fode-solve", "--alpha", "0.5", "--c0", "1", "--h", f"csv:{h}", "--out", str(tmp_path / "u.csv")]) == 0

    def test_bad_forcing(self, tmp_path):
        assert main(["fode-solve", "--alpha", "0.5", "--c0", "1", "--h", "sine", "--out", str(tmp_path / "u.csv")]) == 1


class TestSpaceApply:
    @pytest.fixture
    def field(self, tmp_path):
        x = SpaceGrid(3.0, 61).nodes
        return write_series(tmp_path / "f.csv", "x", x, np.exp(-x**2))

    def test_laplacian(self, tmp_path, field):
        out = tmp_path / "o.csv"
        assert main(["space-apply", "--op", "lap", "--sigma", "1", "--field", field, "--out", str(out)]) == 0
        x, u, v = read_columns(out, "x", "u", "value")
        g = SampledField(SpaceGrid(3.0, 61), u)
        assert v[30] == fractional_laplacian(g, SpatialKernelSpec(1.0), x[30])

    def test_pucci_collapse(self, tmp_path, field):
        lap, plus = tmp_path / "l.csv", tmp_path / "p.csv"
        main(["space-apply", "--op", "lap", "--sigma", "1", "--normalization", "1", "--field", field, "--out", str(lap)])
        main(["space-apply", "--op", "mplus", "--sigma", "1", "--lambda", "1", "--Lambda", "1", "--field", field, "--out", str(plus)])
        assert np.allclose(read_columns(lap, "value")[0], read_columns(plus, "value")[0], atol=1e-8)

    def test_pucci_needs_constants(self, tmp_path, field):
        assert main(["space-apply", "--op", "mminus", "--sigma", "1", "--field", field, "--out", str(tmp_path / "o.csv")]) == 1


class TestPdeSolve:
    def test_field_round_trip(self, tmp_path):
        out, diag = tmp_path / "u.csv", tmp_path / "d.json"
        assert main(["pde-solve", "--config", write_json(tmp_path / "r.json", RUN), "--out", str(out), "--diag", str(diag)]) == 0
        got = read_field(out)
        ref = solve(lambda x: np.exp(-(x**2)), SolverConfig(FractionalOrder(0.5), SpatialKernelSpec(1.0)), TimeGrid(0.0, 1.0, 16), SpaceGrid(4.0, 17))
        assert np.array_equal(got.values, ref.values)
        d = json.loads(diag.read_text())
        assert len(d["steps"]) == 16 and d["max_step_residual"] <= 1e-12 and d["far_field"] == "zero"

    def test_byte_identical(self, tmp_path):
        cfg = write_json(tmp_path / "r.json", {**RUN, "g": "indicator:-1,1", "far_field": "constant:0.5"})
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["pde-solve", "--config", cfg, "--out", str(a)])
        main(["pde-solve", "--config", cfg, "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
        assert read_field(a).far_field.value == 0.5

    def test_csv_data(self, tmp_path):
        x = SpaceGrid(4.0, 17).nodes
        u0 = write_series(tmp_path / "u0.csv", "x", x, np.cos(x) ** 2)
        src = tmp_path / "g.csv"
        main(["pde-solve", "--config", write_json(tmp_path / "r0.json", {**RUN, "u0": 0.0}), "--out", str(src)])
        cfg = write_json(tmp_path / "r.json", {**RUN, "u0": f"csv:{u0}", "g": f"csv:{src}"})
        assert main(["pde-solve", "--config", cfg, "--out", str(tmp_path / "u.csv")]) == 0

    @pytest.mark.parametrize("patch", [{"extra": 1}, {"kappa": "many"}, {"kappa": 2.5}, {"u0": "wave:1"}, {"sigma": 2.5}])
    def test_rejects(self, tmp_path, capsys, patch):
        cfg = write_json(tmp_path / "r.json", {**RUN, **patch})
        assert main(["pde-solve", "--config", cfg, "--out", str(tmp_path / "u.csv")]) == 1
        assert not (tmp_path / "u.csv").exists()

    def test_missing_key(self, tmp_path):
        cfg = {k: v for k, v in RUN.items() if k != "N"}
        assert main(["pde-solve", "--config", write_json(tmp_path / "r.json", cfg), "--out", str(tmp_path / "u.csv")]) == 1


class TestDiagnose:
    @pytest.fixture
    def field(self, tmp_path):
        out = tmp_path / "u.csv"
        main(["pde-solve", "--config", write_json(tmp_path / "r.json", {**RUN, "kappa": 64, "N": 129}), "--out", str(out)])
        return str(out)

    def test_osc(self, tmp_path, field):
        out = tmp_path / "o.json"
        assert main(["diagnose", "--field", field, "--mode", "osc", "--params", write_json(tmp_path / "p.json", {"r": 0.8, "depth": 2}), "--out", str(out)]) == 0
        osc = json.loads(out.read_text())["oscillations"]
        assert osc == sorted(osc, reverse=True)

    def test_holder(self, tmp_path, field, capsys):
        params = write_json(tmp_path / "p.json", {"kappa": 0.5, "region": [-1, 1, 0.5, 1]})
        assert main(["diagnose", "--field", field, "--mode", "holder", "--params", params]) == 0
        assert json.loads(capsys.readouterr().out)["seminorm"] > 0

    def test_point_estimate(self, tmp_path, capsys):
        assert main(["diagnose", "--mode", "point-estimate", "--params", write_json(tmp_path / "p.json", {"mu": 0.5})]) == 0
        assert json.loads(capsys.readouterr().out)["theta_emp"] > 0

    def test_unknown_param(self, tmp_path, field):
        params = write_json(tmp_path / "p.json", {"r": 0.8, "depth": 2, "speed": 3})
        assert main(["diagnose", "--field", field, "--mode", "osc", "--params", params]) == 1


class TestAcceptanceCommand:
    def test_pass_table(self, capsys, tmp_path):
        out = tmp_path / "a.json"
        assert main(["acceptance", "--only", "1", "4", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert text.count("[PASS]") == 2 and "2/2" in text
        assert [r["number"] for r in json.loads(out.read_text())] == [1, 4]

    def test_failing_criterion_exits_2(self, capsys):
        assert main(["acceptance", "--only", "5"]) == 2
        assert "[FAIL]  5" in capsys.readouterr().out


def test_threads_flag(capsys):
    assert main(["--threads", "1", "ml-eval", "--alpha", "0.5", "--z", "-1"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.4275835761558070, rel=1e-14)


def test_no_temp_files_left(tmp_path):
    main(["ml-eval", "--alpha", "1", "--grid=0:1:3", "--csv", str(tmp_path / "a.csv")])
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.csv"]

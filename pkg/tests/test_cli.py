import math
import subprocess
import sys

import numpy as np
import pytest

from bergman_lab.cli import main, trend_ok
from bergman_lab.errors import InputError, UnsupportedModelError
from bergman_lab.manifolds import circle, sphere2, torus2
from bergman_lab.presets import (
    metric_field,
    parse_scalar_expr,
    perturbation_field,
    scalar_field,
    symbol_field,
)

CIRCLE, TORUS, SPHERE = circle(), torus2(), sphere2()


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "bergman_lab", *args],
        capture_output=True,
        text=True,
    )


class TestExpressions:
    def test_coefficient_forms(self):
        fn = parse_scalar_expr("0.3cos(x1)", TORUS)
        pts = np.array([[0.5, 1.0]])
        assert fn(pts)[0] == pytest.approx(0.3 * math.cos(0.5))

    def test_sum_and_constant(self):
        fn = parse_scalar_expr("1+0.5x3sq", SPHERE)
        pts = np.array([[0.8, 0.0]])
        assert fn(pts)[0] == pytest.approx(1 + 0.5 * math.cos(0.8) ** 2)

    def test_difference(self):
        fn = parse_scalar_expr("cos(theta)-0.25sin(theta)", CIRCLE)
        pts = np.array([[1.2]])
        assert fn(pts)[0] == pytest.approx(math.cos(1.2) - 0.25 * math.sin(1.2))

    def test_explicit_star(self):
        fn = parse_scalar_expr("2*sin(x2)", TORUS)
        assert fn(np.array([[0.0, 0.7]]))[0] == pytest.approx(2 * math.sin(0.7))

    def test_wrong_chart_variable(self):
        with pytest.raises(InputError):
            parse_scalar_expr("cos(x1)", CIRCLE)

    def test_garbage_rejected(self):
        with pytest.raises(InputError):
            parse_scalar_expr("tan(theta)", CIRCLE)

    def test_ambient_only_on_sphere(self):
        with pytest.raises(InputError):
            parse_scalar_expr("x3", TORUS)


class TestPresets:
    def test_named_scalar_fields(self):
        f = scalar_field("exp-cos-theta", CIRCLE)
        assert f.values(np.array([[0.0]]))[0] == pytest.approx(math.e)
        a = scalar_field("one-plus-half-x3sq", SPHERE)
        assert a.values(np.array([[math.pi / 2, 0.0]]))[0] == pytest.approx(1.0)

    def test_conformal_metric(self):
        g = metric_field("conformal:u=0.3cos(x1)", TORUS)
        m = g.matrices(np.array([[0.0, 0.0]]))
        assert m[0, 0, 0] == pytest.approx(math.exp(0.3))
        assert g.conformal_u is not None

    def test_aniso_diag(self):
        g = metric_field("aniso-diag:0.3,0.3", TORUS)
        m = g.matrices(np.array([[0.0, math.pi]]))
        assert m[0, 0, 0] == pytest.approx(math.exp(0.3))
        assert m[0, 1, 1] == pytest.approx(math.exp(-0.3))
        with pytest.raises(UnsupportedModelError):
            metric_field("aniso-diag:0.3,0.3", CIRCLE)

    def test_perturbations(self):
        gdot = perturbation_field("cos-theta", CIRCLE)
        assert gdot.matrices(np.array([[0.0]]))[0, 0, 0] == pytest.approx(1.0)
        gdt = perturbation_field("cos-x1-dx1", TORUS)
        assert gdt.matrices(np.array([[0.0, 0.0]]))[0, 0, 0] == pytest.approx(1.0)

    def test_symbols(self):
        s = symbol_field("xi1sq", TORUS)
        got = s.values(np.array([[0.0, 0.0]]), np.array([[2.0, 0.0]]))
        assert got[0] == pytest.approx(1.0)  # 0-homogeneous
        with pytest.raises(InputError):
            symbol_field("nope", TORUS)

    def test_unknown_metric(self):
        with pytest.raises(InputError):
            metric_field("hyperbolic", TORUS)


class TestTrend:
    def test_allows_one_small_uptick(self):
        assert trend_ok([1.0, 0.5, 0.52])
        assert not trend_ok([1.0, 0.5, 0.6])      # >10% uptick
        assert not trend_ok([0.5, 0.52, 0.54])    # two upticks
        assert trend_ok([1.0, 0.5, 0.25])


class TestMainInProcess:
    def test_spectra(self, capsys):
        assert main(["spectra", "--model", "torus2", "--mu2", "5"]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out[0] == "level,mu_sq,multiplicity,dim_cum"
        assert out[-1].startswith("4,5,8,21")

    def test_unknown_preset_is_input_error(self, capsys):
        assert main(["hilb-approx", "--model", "circle", "--metric", "warped",
                     "--n", "4,8,16"]) == 1

    def test_missing_sweep_is_input_error(self):
        assert main(["isometry", "--model", "circle"]) == 1

    def test_mu2_on_circle_rejected(self):
        assert main(["isometry", "--model", "circle", "--mu2", "4,9,16"]) == 1

    def test_check_failure_exits_two(self, capsys):
        # impossible tolerance forces a tolerance failure, not an input error
        code = main(["isometry", "--model", "circle", "--n", "4,8,16",
                     "--check", "--tol", "1e-12"])
        assert code == 2

    def test_check_pass_exits_zero(self):
        code = main(["isometry", "--model", "circle", "--n", "8,16,32,64",
                     "--check"])
        assert code == 0

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("model = circle\nn = 4,8,16\ngrid = 32\n")
        out = tmp_path / "a.csv"
        code = main(["isometry", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        assert out.read_text().splitlines()[0].startswith("n,mu,measured_coeff")
        out2 = tmp_path / "b.csv"
        code = main(["isometry", "--config", str(cfg), "--n", "8,16,32",
                     "--out", str(out2)])
        assert code == 0
        assert out2.read_text().splitlines()[1].split(",")[0] == "8"

    def test_bad_config_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("flux_capacitor = on\n")
        assert main(["spectra", "--config", str(cfg)]) == 1

    def test_list_presets_mentions_required_names(self, capsys):
        assert main(["list-presets"]) == 0
        text = capsys.readouterr().out
        assert "conformal:u=" in text
        assert "aniso-diag:e1,e2" in text
        assert "one-plus-half-x3sq" in text

    def test_exact_pullback_commands(self, capsys):
        assert main(["exact-pullback", "--model", "circle", "--n", "5,20",
                     "--check"]) == 0
        assert main(["exact-pullback", "--model", "torus2", "--mu2", "5,50",
                     "--check"]) == 0
        assert main(["exact-pullback", "--model", "sphere2", "--n", "5",
                     "--check"]) == 1  # unsupported model

    def test_gradient_check_command(self, capsys):
        assert main(["gradient-check", "--model", "torus2", "--check"]) == 0
        assert main(["gradient-check", "--model", "circle", "--check"]) == 0


class TestCSVContract:
    def test_seventeen_significant_digits(self, tmp_path):
        out = tmp_path / "t.csv"
        main(["takahashi", "--n", "1,2", "--out", str(out)])
        line = out.read_text().splitlines()[1]
        c_n = line.split(",")[1]
        assert c_n == format(3 / (4 * math.pi), ".17g")

    def test_lf_endings(self, tmp_path):
        out = tmp_path / "t.csv"
        main(["spectra", "--model", "circle", "--n", "3", "--out", str(out)])
        raw = out.read_bytes()
        assert b"\r" not in raw
        assert raw.endswith(b"\n")


class TestDeterminism:
    def test_thread_count_does_not_change_bytes(self, tmp_path):
        args = ["met-norm", "--model", "circle", "--gdot", "cos-theta",
                "--n", "16,32,48"]
        outs = []
        for threads in ("1", "4"):
            path = tmp_path / f"t{threads}.csv"
            r = run_cli(*args, "--out", str(path), "--threads", threads)
            assert r.returncode == 0, r.stderr
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_env_variable_thread_control(self, tmp_path):
        path1, path2 = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["isometry", "--model", "circle", "--n", "4,8,16"]
        r1 = subprocess.run(
            [sys.executable, "-m", "bergman_lab", *args, "--out", str(path1)],
            env={"BERGMAN_LAB_THREADS": "3", "PATH": "/usr/bin:/bin"},
            capture_output=True, text=True,
        )
        assert r1.returncode == 0, r1.stderr
        r2 = run_cli(*args, "--out", str(path2), "--threads", "1")
        assert r2.returncode == 0
        assert path1.read_bytes() == path2.read_bytes()

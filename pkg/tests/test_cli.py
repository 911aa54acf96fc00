import contextlib
import io
import json
import math
import os
import subprocess

import numpy as np
import pytest

from cosparse.cli import main
from cosparse.experiments import gen_cosparse_problem, load_phase_csv
from cosparse.operators import make_1d_dif, make_random_tight_frame
from cosparse.theory import omega_rip_exhaustive


def run_cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        rc = main([str(a) for a in argv])
    return rc, out.getvalue(), err.getvalue()


def printed(stdout, key):
    for line in stdout.splitlines():
        if line.startswith(key + " = "):
            return line.split(" = ", 1)[1]
    raise AssertionError("no %r line in output:\n%s" % (key, stdout))


@pytest.fixture(scope="module")
def problem_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("problem")
    prob = gen_cosparse_problem(make_1d_dif(40), l=37, m=32, seed=0)
    np.savetxt(root / "M.csv", prob.M, delimiter=",")
    np.savetxt(root / "y.csv", prob.y[:, None], delimiter=",")
    return {"M": root / "M.csv", "y": root / "y.csv", "x_true": prob.x_true}


@pytest.fixture(scope="module")
def step_vector_file(tmp_path_factory):
    root = tmp_path_factory.mktemp("vector")
    step = np.concatenate([np.ones(100), -np.ones(100), [1.5]])
    np.savetxt(root / "v.csv", step[:, None], delimiter=",")
    return root / "v.csv"


class TestRecover:
    def test_round_trip_recovers_the_signal(self, problem_files, tmp_path):
        rc, out, _ = run_cli(["recover", "--matrix", problem_files["M"],
                              "--measurements", problem_files["y"],
                              "--operator", "dif-1d", "--l", 37,
                              "--variant", "asp", "--residual-tol", "1e-9",
                              "--out", tmp_path])
        assert rc == 0
        assert printed(out, "converged") == "true"
        x_hat = np.loadtxt(tmp_path / "x_hat.csv")
        assert np.linalg.norm(x_hat - problem_files["x_true"]) < 1e-6
        record = json.loads((tmp_path / "recover.json").read_text())
        assert record["converged"] is True
        assert record["x_hat_file"] == "x_hat.csv"
        assert record["config"]["variant"] == "asp"
        assert len(record["residual_history"]) == record["iterations"] + 1

    def test_missing_matrix_file_names_the_path(self, problem_files, tmp_path):
        rc, _, err = run_cli(["recover", "--matrix", "/nope/missing.csv",
                              "--measurements", problem_files["y"],
                              "--l", 3, "--out", tmp_path])
        assert rc == 1
        assert "/nope/missing.csv" in err

    def test_measurement_length_mismatch_is_an_error(self, problem_files,
                                                     tmp_path):
        short = tmp_path / "short.csv"
        np.savetxt(short, np.ones(5)[:, None], delimiter=",")
        rc, _, err = run_cli(["recover", "--matrix", problem_files["M"],
                              "--measurements", short, "--l", 3,
                              "--out", tmp_path])
        assert rc == 1
        assert "does not match matrix rows" in err

    def test_unknown_variant_is_an_error(self, problem_files, tmp_path):
        rc, _, err = run_cli(["recover", "--matrix", problem_files["M"],
                              "--measurements", problem_files["y"],
                              "--l", 37, "--variant", "omp",
                              "--out", tmp_path])
        assert rc == 1
        assert "unknown variant" in err

    def test_non_convergence_exits_two(self, problem_files, tmp_path):
        rc, out, _ = run_cli(["recover", "--matrix", problem_files["M"],
                              "--measurements", problem_files["y"],
                              "--operator", "dif-1d", "--l", 37,
                              "--variant", "aiht", "--step-rule", "constant",
                              "--mu", "0.01", "--max-iters", 3,
                              "--stop", "max_only", "--out", tmp_path])
        assert rc == 2
        assert printed(out, "converged") == "false"


class TestProject:
    def test_thresholding_error_on_the_step_signal(self, step_vector_file,
                                                   tmp_path):
        rc, out, _ = run_cli(["project", "--vector", step_vector_file,
                              "--operator", "dif-1d", "--l", 199,
                              "--scheme", "thresholding", "--out", tmp_path])
        assert rc == 0
        err = float(printed(out, "projection_error"))
        assert err == pytest.approx(math.sqrt(200), abs=1e-9)

    def test_dynamic_programming_beats_thresholding(self, step_vector_file,
                                                    tmp_path):
        rc, out, _ = run_cli(["project", "--vector", step_vector_file,
                              "--operator", "dif-1d", "--l", 199,
                              "--scheme", "dif1d-dp", "--out", tmp_path])
        assert rc == 0
        err = float(printed(out, "projection_error"))
        assert err == pytest.approx(25.0 / math.sqrt(101), abs=1e-9)
        projected = np.loadtxt(tmp_path / "projected.csv")
        assert projected.shape == (201,)
        record = json.loads((tmp_path / "project.json").read_text())
        assert record["projection_error"] == pytest.approx(err)
        assert record["cosupport_size"] == 199

    def test_chain_scheme_rejects_dense_operators(self, tmp_path):
        vec = tmp_path / "v.csv"
        np.savetxt(vec, np.ones(8)[:, None], delimiter=",")
        rc, _, err = run_cli(["project", "--vector", vec,
                              "--operator", "tight-frame", "--p", 10,
                              "--d", 8, "--l", 5, "--scheme", "dif1d-dp",
                              "--out", tmp_path])
        assert rc == 1
        assert "dif-1d" in err

    def test_missing_target_cosparsity_is_an_error(self, step_vector_file,
                                                   tmp_path):
        rc, _, err = run_cli(["project", "--vector", step_vector_file,
                              "--operator", "dif-1d", "--out", tmp_path])
        assert rc == 1
        assert "--l" in err


class TestPhaseDiagramCommand:
    ARGS = ["phase-diagram", "--operator", "tight-frame", "--p", 24,
            "--d", 20, "--variant", "asp", "--max-iters", 30,
            "--residual-tol", "1e-9", "--delta-values", "0.5,0.9",
            "--rho-values", "0.2,0.9", "--trials", 3, "--seed", 7, "--pgm"]

    def test_sweep_writes_a_reloadable_grid(self, tmp_path):
        rc, out, _ = run_cli(self.ARGS + ["--out", tmp_path])
        assert rc == 0
        grid = load_phase_csv(tmp_path / "phase.csv")
        assert grid.recovery_rate.shape == (2, 2)
        assert grid.trials == 3 and grid.seed == 7
        assert float(printed(out, "mean_rate")) == pytest.approx(
            float(np.mean(grid.recovery_rate)))
        header = (tmp_path / "phase.pgm").read_bytes()[:10]
        assert header == b"P5\n2 2\n255"

    def test_csv_embeds_the_effective_configuration(self, tmp_path):
        run_cli(self.ARGS + ["--out", tmp_path])
        text = (tmp_path / "phase.csv").read_text()
        assert "# command=phase-diagram" in text
        assert "# variant=asp" in text
        assert "# seed=7" in text

    def test_repeat_runs_are_byte_identical(self, tmp_path):
        run_cli(self.ARGS + ["--out", tmp_path / "a"])
        run_cli(self.ARGS + ["--out", tmp_path / "b"])

        def stable(path):
            return [line for line in path.read_text().splitlines()
                    if not line.startswith("# out=")]

        assert stable(tmp_path / "a" / "phase.csv") == \
            stable(tmp_path / "b" / "phase.csv")
        assert (tmp_path / "a" / "phase.pgm").read_bytes() == \
            (tmp_path / "b" / "phase.pgm").read_bytes()


class TestTheoryCommand:
    def test_sweep_prints_the_feasibility_boundaries(self, tmp_path):
        rc, out, _ = run_cli(["theory", "--sweep", "--out", tmp_path])
        assert rc == 0
        expected = [
            "aiht C=1 boundary = 0.333333333333",
            "aiht C=1.05 boundary = 0.289615048466",
            "aiht C=1.1 boundary = 0.240584309781",
            "acosamp C=1 boundary = 0.0164033673531",
            "acosamp C=1.05 boundary = 0.00502369916049",
            "acosamp C=1.1 boundary = 0.000330117074077",
            "asp C=1 boundary = 0.015625",
            "asp C=1.05 boundary = 0.00489816207948",
            "asp C=1.1 boundary = 0.000328086263571",
        ]
        for line in expected:
            assert line in out
        record = json.loads((tmp_path / "theory.json").read_text())
        assert len(record["boundaries"]) == 9

    def test_single_report_prints_constants(self, tmp_path):
        rc, out, _ = run_cli(["theory", "--algorithm", "aiht",
                              "--delta-2lp", "0.001", "--out", tmp_path])
        assert rc == 0
        assert "algorithm = aiht/ahtp" in out
        assert printed(out, "feasible") == "true"
        record = json.loads((tmp_path / "theory.json").read_text())
        assert record["report"]["feasible"] is True

    def test_pursuit_report_requires_its_inputs(self, tmp_path):
        rc, _, err = run_cli(["theory", "--algorithm", "acosamp",
                              "--gamma", "0", "--delta-2lp", "0.001",
                              "--out", tmp_path])
        assert rc == 1
        assert "--delta-3l2p" in err and "--delta-4l3p" in err

    def test_malformed_numeric_flag_exits_one(self, tmp_path):
        rc, _, err = run_cli(["theory", "--sweep", "--sigma-sq", "abc",
                              "--out", tmp_path])
        assert rc == 1
        assert "invalid float value" in err


class TestRipCommand:
    def test_matches_the_library_estimate(self, tmp_path):
        rc, out, _ = run_cli(["rip", "--m", 6, "--d", 8,
                              "--operator", "tight-frame", "--p", 10,
                              "--l", 5, "--seed", 0, "--out", tmp_path])
        assert rc == 0
        rng = np.random.default_rng(0)
        M = rng.standard_normal((6, 8)) / math.sqrt(6)
        omega = make_random_tight_frame(10, 8, seed=0)
        direct = omega_rip_exhaustive(M, omega, 5).delta
        assert float(printed(out, "delta")) == pytest.approx(direct, abs=1e-12)
        record = json.loads((tmp_path / "rip.json").read_text())
        assert record["mode"] == "exhaustive"
        assert record["is_lower_bound"] is False

    def test_sampled_mode_reports_a_lower_bound(self, tmp_path):
        common = ["rip", "--m", 6, "--d", 8, "--operator", "tight-frame",
                  "--p", 10, "--l", 5, "--seed", 0]
        _, out_full, _ = run_cli(common + ["--out", tmp_path / "a"])
        rc, out, _ = run_cli(common + ["--mode", "sampled", "--trials", 20,
                                       "--out", tmp_path / "b"])
        assert rc == 0
        assert printed(out, "lower_bound") == "true"
        assert float(printed(out, "delta")) <= float(printed(out_full, "delta"))

    def test_missing_level_is_an_error(self, tmp_path):
        rc, _, err = run_cli(["rip", "--m", 6, "--d", 8, "--out", tmp_path])
        assert rc == 1
        assert "--l" in err


class TestPhantomCommand:
    ARGS = ["phantom", "--size", "32x32", "--lines", 12, "--variant", "rasp",
            "--max-iters", 30]

    def test_small_phantom_recovers_and_writes_images(self, tmp_path):
        rc, out, _ = run_cli(self.ARGS + ["--out", tmp_path])
        assert rc == 0
        assert float(printed(out, "relative_error")) < 1e-5
        for name in ("truth", "zero_fill", "reconstruction"):
            assert (tmp_path / (name + ".pgm")).exists()
            assert (tmp_path / (name + ".csv")).exists()
        header = (tmp_path / "reconstruction.pgm").read_bytes()[:12]
        assert header == b"P5\n32 32\n255"
        record = json.loads((tmp_path / "phantom.json").read_text())
        assert record["relative_error"] < 1e-5
        assert record["config"]["variant"] == "rasp"

    def test_repeat_runs_write_identical_images(self, tmp_path):
        run_cli(self.ARGS + ["--out", tmp_path / "a"])
        run_cli(self.ARGS + ["--out", tmp_path / "b"])
        assert (tmp_path / "a" / "reconstruction.pgm").read_bytes() == \
            (tmp_path / "b" / "reconstruction.pgm").read_bytes()


class TestConfigResolution:
    def test_config_file_overrides_defaults(self, problem_files, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# solver defaults\nvariant = aiht\nmax-iters = 40\n")
        rc, out, _ = run_cli(["recover", "--matrix", problem_files["M"],
                              "--measurements", problem_files["y"],
                              "--operator", "dif-1d", "--l", 37,
                              "--residual-tol", "1e-9", "--config", cfg,
                              "--out", tmp_path])
        assert rc == 0
        assert printed(out, "variant") == "aiht"
        assert printed(out, "max_iters") == "40"

    def test_explicit_flag_beats_the_config_file(self, problem_files,
                                                 tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("variant = aiht\n")
        rc, out, _ = run_cli(["recover", "--matrix", problem_files["M"],
                              "--measurements", problem_files["y"],
                              "--operator", "dif-1d", "--l", 37,
                              "--residual-tol", "1e-9", "--config", cfg,
                              "--variant", "asp", "--out", tmp_path])
        assert rc == 0
        assert printed(out, "variant") == "asp"

    def test_unknown_config_key_is_rejected(self, problem_files, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("varyant = aiht\n")
        rc, _, err = run_cli(["recover", "--matrix", problem_files["M"],
                              "--measurements", problem_files["y"],
                              "--l", 37, "--config", cfg, "--out", tmp_path])
        assert rc == 1
        assert "varyant" in err

    def test_malformed_config_value_is_rejected(self, problem_files,
                                                tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("max-iters = plenty\n")
        rc, _, err = run_cli(["recover", "--matrix", problem_files["M"],
                              "--measurements", problem_files["y"],
                              "--l", 37, "--config", cfg, "--out", tmp_path])
        assert rc == 1
        assert "max_iters=plenty" in err

    def test_workers_fall_back_to_the_environment(self, tmp_path,
                                                  monkeypatch):
        monkeypatch.setenv("COSPARSE_WORKERS", "3")
        rc, out, _ = run_cli(["theory", "--sweep", "--out", tmp_path])
        assert rc == 0
        assert printed(out, "workers") == "3"

    def test_missing_subcommand_exits_one(self):
        rc, _, _ = run_cli([])
        assert rc == 1

    def test_console_script_is_installed(self, tmp_path):
        proc = subprocess.run(
            ["cosparse", "theory", "--sweep", "--out", str(tmp_path)],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "asp C=1.1 boundary = 0.000328086263571" in proc.stdout

import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import free_spin_pressure, ising_log_lambda_plus, mean_field_fixed_point
from thermolab import ConfigError, CurveSamples
from thermolab.cli import Config, _parse_number_list, main, run_experiment

LN2 = math.log(2.0)


def write_config(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def body_lines(path: Path) -> list[str]:
    return [
        line for line in path.read_text().splitlines()
        if not line.startswith("# generated=")
    ]


class TestConfigParsing:
    def test_key_value_with_comments(self, tmp_path):
        cfg = Config.load(write_config(tmp_path, """
        # an experiment
        model = free_spins
        theta0 = 0.5, 1.0   # inline comment
        """))
        assert cfg.get_str("model") == "free_spins"
        assert cfg.get_floats("theta0") == [0.5, 1.0]

    def test_range_syntax(self):
        assert _parse_number_list("4:8") == [4.0, 5.0, 6.0, 7.0, 8.0]
        assert_allclose(_parse_number_list("0:1:0.25"), [0.0, 0.25, 0.5, 0.75, 1.0])
        assert _parse_number_list("3") == [3.0]
        assert _parse_number_list("1, 2,3") == [1.0, 2.0, 3.0]

    def test_parse_errors_name_key_and_line(self, tmp_path):
        path = write_config(tmp_path, "model = free_spins\nsizes = four\n")
        cfg = Config.load(path)
        with pytest.raises(ConfigError) as exc:
            cfg.get_ints("sizes")
        assert "sizes" in str(exc.value)
        assert "line 2" in str(exc.value)

    def test_malformed_line_reports_position(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            Config.load(write_config(tmp_path, "model free_spins\n"))
        assert "line 1" in str(exc.value)

    def test_duplicate_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            Config.load(write_config(tmp_path, "a = 1\na = 2\n"))

    def test_unknown_key_detected(self, tmp_path):
        path = write_config(
            tmp_path, "model = free_spins\ntheta0 = 0\nsizes = 3:5\nbogus = 1\n"
        )
        with pytest.raises(ConfigError) as exc:
            run_experiment("pressure", path, tmp_path / "out")
        assert "bogus" in str(exc.value)
        assert "line 4" in str(exc.value)

    def test_missing_required_key(self, tmp_path):
        path = write_config(tmp_path, "model = free_spins\n")
        with pytest.raises(ConfigError) as exc:
            run_experiment("pressure", path, tmp_path / "out")
        assert "sizes" in str(exc.value)


class TestPressureCommand:
    def test_free_spins_zero_control(self, tmp_path):
        path = write_config(tmp_path, """
        model = free_spins
        theta0 = 0
        sizes = 3:5
        """)
        manifest = run_experiment("pressure", path, tmp_path / "out", seed=3)
        assert manifest["subcommand"] == "pressure"
        assert manifest["seed"] == 3
        assert manifest["artifacts"][0]["path"] == "pressure.csv"
        assert manifest["artifacts"][0]["rows"] == 3
        text = (tmp_path / "out" / "pressure.csv").read_text()
        assert "# seed=3" in text
        assert "# model=free_spins" in text
        lines = [l for l in text.splitlines() if l and not l.startswith("#")]
        assert lines[0] == "theta_0,N,phi_N,value,extrapolation_error"
        for row in lines[1:]:
            fields = row.split(",")
            assert_allclose(float(fields[2]), LN2, atol=1e-12)
            assert_allclose(float(fields[3]), LN2, atol=1e-12)

    def test_ising_geometric_matches_transfer_matrix(self, tmp_path):
        path = write_config(tmp_path, """
        model = ising_chain
        J = 1.0
        h = 0.5
        boundary = periodic
        theta0 = 1.0
        theta1 = 0.0
        sizes = 4:12
        fit = geometric
        """)
        manifest = run_experiment("pressure", path, tmp_path / "out")
        text = (tmp_path / "out" / "pressure.csv").read_text()
        last = [l for l in text.splitlines() if l and not l.startswith("#")][-1]
        value = float(last.split(",")[4])
        assert_allclose(value, ising_log_lambda_plus(1.0, 1.0, 0.5), atol=1e-5)


class TestCurveCommands:
    def test_entropy_curve_artifact_round_trips(self, tmp_path):
        path = write_config(tmp_path, """
        model = curie_weiss
        J = 1.0
        h = 0.0
        constrain = joint
        m_values = -0.9:0.9:0.1
        """)
        manifest = run_experiment("entropy-curve", path, tmp_path / "out")
        artifact = tmp_path / "out" / "entropy_curve.csv"
        curve = CurveSamples.from_csv(artifact.read_text())
        assert curve.orientation == "concave"
        assert curve.metadata["family"] == "product_states"
        assert curve.metadata["model"] == "curie_weiss"
        assert curve.npoints == manifest["artifacts"][0]["rows"] == 19

    def test_energy_mode(self, tmp_path):
        path = write_config(tmp_path, """
        model = curie_weiss
        J = 1.0
        constrain = energy
        e_values = -0.45,-0.3,-0.125
        """)
        run_experiment("entropy-curve", path, tmp_path / "out")
        curve = CurveSamples.from_csv((tmp_path / "out" / "entropy_curve.csv").read_text())
        assert curve.ndim == 1
        assert curve.npoints == 3

    def test_legendre_consistency_columns(self, tmp_path):
        path = write_config(tmp_path, """
        model = curie_weiss
        J = 1.0
        constrain = joint
        m_values = -0.999:0.999:0.001
        theta0 = 0.5, 1.0
        theta1 = -0.2, 0.0, 0.2
        """)
        manifest = run_experiment("legendre", path, tmp_path / "out")
        text = (tmp_path / "out" / "pressure_curve.csv").read_text()
        rows = [l for l in text.splitlines() if l and not l.startswith("#")]
        assert rows[0] == "theta_0,theta_1,value,scan_value"
        for row in rows[1:]:
            fields = [float(x) for x in row.split(",")]
            assert abs(fields[2] - fields[3]) <= 1e-6
        # joint chains carry no product structure, so no round-trip artifact
        assert {a["path"] for a in manifest["artifacts"]} == {"pressure_curve.csv"}

    def test_legendre_energy_mode_roundtrip(self, tmp_path):
        path = write_config(tmp_path, """
        model = curie_weiss
        J = 1.0
        constrain = energy
        e_values = -0.5:0:0.005
        theta0 = 0.5, 1.0, 2.0
        """)
        manifest = run_experiment("legendre", path, tmp_path / "out")
        assert manifest["summary"]["biconjugate_max_defect"] <= 1e-4
        hull = CurveSamples.from_csv((tmp_path / "out" / "biconjugate.csv").read_text())
        assert hull.metadata["roundtrip"] == "biconjugate"


class TestCompletenessCommand:
    def test_energy_sweep_incomplete(self, tmp_path):
        path = write_config(tmp_path, """
        model = curie_weiss
        J = 1.0
        constrain = energy
        e_values = -0.45,-0.3,-0.125
        """)
        manifest = run_experiment("completeness", path, tmp_path / "out")
        assert manifest["summary"]["verdict"] == "Incomplete"
        payload = json.loads((tmp_path / "out" / "completeness.json").read_text())
        assert payload["verdict"] == "Incomplete"
        assert len(payload["records"]) == 3
        for record in payload["records"]:
            assert set(record) == {"constraint", "s", "maximizers", "multiplicity",
                                   "verdict"}
            assert record["multiplicity"] == 2

    def test_joint_sweep_complete(self, tmp_path):
        path = write_config(tmp_path, """
        model = curie_weiss
        J = 1.0
        constrain = joint
        m_values = -0.8:0.8:0.2
        """)
        manifest = run_experiment("completeness", path, tmp_path / "out")
        assert manifest["summary"]["verdict"] == "Complete"


class TestKmsVerifyCommand:
    def test_default_probes_all_small(self, tmp_path):
        path = write_config(tmp_path, """
        model = ising_chain
        J = 1.0
        h = 0.0
        N = 4
        theta0 = 0.5, 1.0
        theta1 = 0.0
        times = 0.3, 1.1
        sigma_w = 2.0
        """)
        manifest = run_experiment("kms-verify", path, tmp_path / "out", seed=5)
        assert manifest["summary"]["max_residual"] <= 1e-7
        residuals = tmp_path / "out" / "residuals.csv"
        rows = [l for l in residuals.read_text().splitlines()
                if l and not l.startswith("#")]
        assert rows[0] == "model,N,theta_0,theta_1,A,B,t,residual"
        assert len(rows) - 1 == 2 * 6  # 2 thetas x (3 probes x 2 times)
        for row in rows[1:]:
            assert float(row.split(",")[-1]) <= 1e-9
        smeared = tmp_path / "out" / "smeared.csv"
        srows = [l for l in smeared.read_text().splitlines()
                 if l and not l.startswith("#")]
        assert srows[0] == ("model,N,theta_0,theta_1,A,B,t,residual,"
                            "sigma_w,quadrature_step")
        for row in srows[1:]:
            fields = row.split(",")
            assert math.isnan(float(fields[6]))  # t is integrated out
            assert float(fields[7]) <= 1e-7
            assert float(fields[8]) == 2.0
            assert 0.0 < float(fields[9]) <= 0.1


class TestDiffTestCommand:
    def test_kink_and_smoothness_summary(self, tmp_path):
        path = write_config(tmp_path, """
        model = curie_weiss
        J = 1.0
        theta0 = 3.0
        m_spacing = 0.001
        m_max = 0.5
        theta1_values = -0.05:0.05:0.025
        """)
        manifest = run_experiment("diff-test", path, tmp_path / "out")
        kink = manifest["summary"]["pressure_kink"]
        m_star = mean_field_fixed_point(3.0)
        assert_allclose(kink["gap"], 2 * m_star, atol=1e-3)
        assert manifest["summary"]["max_tangent_width"] <= 1e-3
        names = {a["path"] for a in manifest["artifacts"]}
        assert names == {"tangent_widths.csv", "pressure_kink.csv", "pressure_scan.csv"}


class TestDeterminism:
    def test_rerun_bodies_identical(self, tmp_path):
        cfg_text = """
        model = ising_chain
        J = 1.0
        h = 0.0
        N = 3
        theta0 = 1.0
        theta1 = 0.0
        times = 0.5
        sigma_w = 2.0
        """
        path = write_config(tmp_path, cfg_text)
        run_experiment("kms-verify", path, tmp_path / "a", seed=11)
        run_experiment("kms-verify", path, tmp_path / "b", seed=11)
        for name in ("residuals.csv", "smeared.csv"):
            assert body_lines(tmp_path / "a" / name) == body_lines(tmp_path / "b" / name)

    def test_threads_do_not_change_output(self, tmp_path):
        cfg_text = """
        model = free_spins
        theta0 = 0.2:2.0:0.2
        sizes = 3:6
        """
        path = write_config(tmp_path, cfg_text)
        run_experiment("pressure", path, tmp_path / "a", seed=1, threads=1)
        run_experiment("pressure", path, tmp_path / "b", seed=1, threads=4)
        assert body_lines(tmp_path / "a" / "pressure.csv") == body_lines(
            tmp_path / "b" / "pressure.csv"
        )


class TestMainEntry:
    def test_exit_zero_and_manifest_on_stdout(self, tmp_path, capsys):
        path = write_config(tmp_path, "model = free_spins\ntheta0 = 0\nsizes = 3:5\n")
        code = main(["pressure", "--config", str(path), "--out", str(tmp_path / "out")])
        assert code == 0
        manifest = json.loads(capsys.readouterr().out)
        assert manifest["subcommand"] == "pressure"

    def test_exit_nonzero_on_config_error(self, tmp_path, capsys):
        path = write_config(tmp_path, "model = no_such_model\ntheta0 = 0\nsizes = 3:5\n")
        code = main(["pressure", "--config", str(path), "--out", str(tmp_path / "out")])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_module_execution(self, tmp_path):
        path = write_config(tmp_path, "model = free_spins\ntheta0 = 0\nsizes = 3:5\n")
        env = dict(os.environ)
        src = str(Path(__file__).resolve().parents[1] / "src")
        env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "")
        proc = subprocess.run(
            [sys.executable, "-m", "thermolab", "pressure", "--config", str(path),
             "--out", str(tmp_path / "out")],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0, proc.stderr
        assert json.loads(proc.stdout)["subcommand"] == "pressure"

import csv
import json
import math

import numpy as np
import pytest

from yukawa_shells.cli import main
from yukawa_shells.config import (
    config_from_dict,
    default_config,
    parse_config_text,
)
from yukawa_shells.errors import ConfigError
from yukawa_shells.multiscale import run_trajectory

REFERENCE_CFG = """
# reference desk instance
m = 1
mu = 2
g = 0.03
lambda = 8
kappa = 1
n_steps = 6
p = 0, 0, 0.2
radial_order = 1
angular_order = 6
b_max = 2
contraction_probes = 0
"""

FAST_CFG = """
g = 0.05
lambda = 4
n_steps = 3
p = 0, 0, 0.1
radial_order = 1
angular_order = 2
b_max = 1
contraction_probes = 0
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigParsing:
    def test_defaults_cover_every_key(self):
        cfg = default_config()
        assert cfg["lambda"] == 8.0
        assert cfg["sweep_axis"] == "lambda"
        params = cfg.model_params()
        assert params.gamma == pytest.approx(8 ** (-1 / 6))

    def test_unknown_key_is_hard_error(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("coupling = 3\n")

    def test_malformed_line_reports_location(self):
        with pytest.raises(ConfigError, match=":2:"):
            parse_config_text("m = 1\nwhat even is this\n")

    def test_bad_value_reports_key(self):
        with pytest.raises(ConfigError, match="mu"):
            parse_config_text("mu = banana\n")

    def test_comments_and_blanks_ignored(self):
        cfg = parse_config_text("# hi\n\nm = 3.5  # trailing\n")
        assert cfg["m"] == 3.5

    def test_round_trip_through_resolved_dict(self):
        cfg = parse_config_text(REFERENCE_CFG)
        rebuilt = config_from_dict(cfg.resolved_dict())
        assert rebuilt.values == cfg.values


class TestValidateCommand:
    def test_reference_window_passes(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, REFERENCE_CFG)
        assert main(["validate", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out

    def test_small_mu_names_constraint(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, REFERENCE_CFG + "mu = 0.5\n")
        assert main(["validate", "--config", cfg]) == 1
        out = capsys.readouterr().out
        assert "mu > 1" in out

    def test_malformed_config_exits_two(self, tmp_path):
        cfg = write_cfg(tmp_path, "mu 0.5\n")
        assert main(["validate", "--config", cfg]) == 2

    def test_unknown_key_exits_two(self, tmp_path):
        cfg = write_cfg(tmp_path, "fineness = 0.7\n")
        assert main(["validate", "--config", cfg]) == 2


class TestTrajectoryCommand:
    def test_free_theory_csv_constant_energy(self, tmp_path):
        cfg = write_cfg(tmp_path, FAST_CFG + "g = 0\n")
        out = tmp_path / "run"
        assert main(["trajectory", "--config", cfg, "--out", str(out)]) == 0
        with open(out / "trajectory.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        free = math.sqrt(0.01 + 1.0)
        for row in rows:
            assert float(row["energy"]) == pytest.approx(free, rel=1e-13)
        # frozen column order
        with open(out / "trajectory.csv", newline="") as fh:
            header = fh.readline().strip()
        assert header.startswith(
            "n,cutoff,energy,gap,gap_bound,alpha,delta_e,norm_sq,contraction")

    def test_artifacts_embed_config(self, tmp_path):
        cfg = write_cfg(tmp_path, FAST_CFG)
        out = tmp_path / "run"
        assert main(["trajectory", "--config", cfg, "--out", str(out)]) == 0
        payload = json.loads((out / "trajectory.json").read_text())
        assert payload["config"]["lambda"] == 4.0
        assert payload["provenance"]["solver"]["seed"] == 1234
        assert payload["kind"] == "trajectory"

    def test_failure_leaves_no_partial_outputs(self, tmp_path):
        cfg = write_cfg(tmp_path, FAST_CFG + "basis_cap = 2\n")
        out = tmp_path / "run"
        assert main(["trajectory", "--config", cfg, "--out", str(out)]) == 1
        assert not (out / "trajectory.json").exists()
        assert not (out / "trajectory.csv").exists()

    def test_rerun_from_embedded_config_reproduces_energies(self, tmp_path):
        cfg = write_cfg(tmp_path, FAST_CFG)
        out = tmp_path / "run"
        main(["trajectory", "--config", cfg, "--out", str(out)])
        payload = json.loads((out / "trajectory.json").read_text())
        rebuilt = config_from_dict(payload["config"])
        traj = run_trajectory(rebuilt.p, rebuilt.model_params(),
                              rebuilt.discretization(), rebuilt.solver_options(),
                              backend=rebuilt["backend"])
        for rec, stored in zip(traj.records, payload["records"]):
            assert rec.energy == pytest.approx(stored["energy"], rel=1e-12)

    def test_boson_cap_scan_artifact(self, tmp_path):
        cfg = write_cfg(tmp_path, FAST_CFG + "b_max_scan = 1, 2\n")
        out = tmp_path / "run"
        assert main(["trajectory", "--config", cfg, "--out", str(out)]) == 0
        payload = json.loads((out / "convergence.json").read_text())
        assert [r["b_max"] for r in payload["rows"]] == [1, 2]


class TestSweepCommand:
    def test_mini_lambda_sweep(self, tmp_path):
        cfg = write_cfg(tmp_path, FAST_CFG + "sweep_values = 4, 8, 16, 32\n")
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
        fit = json.loads((out / "fit.json").read_text())
        assert fit["axis"] == "lambda"
        assert 0.7 <= fit["fit"]["exponent"] <= 1.4
        with open(out / "sweep.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert all(r["status"] == "ok" for r in rows)
        dat = (out / "plot.dat").read_text().strip().splitlines()
        assert len(dat) == 4
        assert len(dat[0].split()) == 2

    def test_momentum_sweep_free_dispersion(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            FAST_CFG + "g = 0\nsweep_axis = p\nsweep_values = 0.05, 0.1, 0.15, 0.2\n",
        )
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
        with open(out / "sweep.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        for row in rows:
            pv = float(row["value"])
            assert float(row["v3"]) == pytest.approx(
                pv / math.sqrt(pv * pv + 1.0), abs=1e-12)

    def test_partial_failures_tolerated_until_quarter(self, tmp_path):
        # momentum values beyond p_max fail per point but the sweep survives
        cfg = write_cfg(
            tmp_path,
            FAST_CFG + "sweep_axis = p\nsweep_values = 0.05, 0.1, 0.15, 0.2, 0.4\n",
        )
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
        fit = json.loads((out / "fit.json").read_text())
        assert len(fit["failures"]) == 1
        with open(out / "sweep.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert sum(1 for r in rows if r["status"] == "failed") == 1

    def test_too_many_failures_exit_one(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            FAST_CFG + "sweep_axis = p\nsweep_values = 0.35, 0.4, 0.45, 0.49\n",
        )
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 1

    def test_worker_pool_matches_serial(self, tmp_path):
        cfg = write_cfg(tmp_path, FAST_CFG + "sweep_values = 4, 8, 16, 32\n")
        serial = tmp_path / "serial"
        pooled = tmp_path / "pooled"
        assert main(["sweep", "--config", cfg, "--out", str(serial)]) == 0
        assert main(["sweep", "--config", cfg, "--out", str(pooled),
                     "--jobs", "2"]) == 0
        assert (serial / "sweep.csv").read_text() == (pooled / "sweep.csv").read_text()


class TestReportCommand:
    def test_report_from_trajectory(self, tmp_path):
        cfg = write_cfg(tmp_path, FAST_CFG)
        out = tmp_path / "run"
        main(["trajectory", "--config", cfg, "--out", str(out)])
        assert main(["report", "--out", str(out)]) == 0
        report = (out / "report.md").read_text()
        assert "# Run report" in report
        assert "PASS: energy ladder non-increasing" in report
        assert "WARN: no lambda sweep found" in report

    def test_report_byte_identical_across_reruns(self, tmp_path):
        cfg = write_cfg(tmp_path, FAST_CFG)
        out = tmp_path / "run"
        main(["trajectory", "--config", cfg, "--out", str(out)])
        main(["report", "--out", str(out)])
        first = (out / "report.md").read_bytes()
        main(["report", "--out", str(out)])
        assert (out / "report.md").read_bytes() == first

    def test_report_with_sweep_fit_verdict(self, tmp_path):
        cfg = write_cfg(tmp_path, FAST_CFG + "sweep_values = 8, 16, 32, 64\n")
        out = tmp_path / "run"
        main(["sweep", "--config", cfg, "--out", str(out)])
        main(["report", "--out", str(out)])
        report = (out / "report.md").read_text()
        assert "self-energy linear in the cutoff" in report


class TestRegressionBaseline:
    def test_reference_energies_match_checked_in_baseline(self, tmp_path):
        import pathlib

        data = json.loads(
            (pathlib.Path(__file__).parent / "data" /
             "reference_trajectory.json").read_text())
        cfg = config_from_dict(data["config"])
        traj = run_trajectory(cfg.p, cfg.model_params(), cfg.discretization(),
                              cfg.solver_options())
        for rec, expected in zip(traj.records, data["energies"]):
            assert rec.energy == pytest.approx(expected, abs=1e-9)
        for rec, expected in zip(traj.records, data["alphas"]):
            if expected is not None:
                assert rec.alpha == pytest.approx(expected, abs=1e-8)
        assert np.all(np.diff([r.energy for r in traj.records]) <= 1e-10)

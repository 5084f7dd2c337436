import filecmp
import math
from pathlib import Path

import pandas as pd
import pytest

from emplearn import cli
from emplearn import experiment as ex
from emplearn.config import DEFAULTS, ExperimentConfig
from emplearn.errors import ConfigError, NumericalError

SMALL = """\
simulation.n_workers = 3000
simulation.horizon = 10
estimation.n_boot = 20
estimation.grid_size = 401
replication.n_reps = 3
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def files(d):
    return sorted(p.name for p in Path(d).iterdir())


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig.from_mapping()
        assert cfg["simulation.n_workers"] == 200_000
        assert cfg.regimes == ("hidden", "transparent")
        assert len(cfg.values) == len(DEFAULTS)

    def test_parse_with_comments(self):
        cfg = ExperimentConfig.from_text("# header\nsimulation.horizon = 12  # short\n\n")
        assert cfg["simulation.horizon"] == 12

    @pytest.mark.parametrize("text", [
        "simulation.colour = 3",
        "simulation.horizon = 5\nsimulation.horizon = 6",
        "simulation.horizon = five",
        "simulation.horizon",
        "simulation.regimes = hidden,opaque",
        "estimation.fits = joint\nsimulation.regimes = hidden",
        "simulation.horizon = 50",  # T_irr 40 < horizon
        "estimation.n_boot = 1",
        "structure.delta_AD = 0.01",
        "structure.p = 1.5",
    ])
    def test_rejected(self, text):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_text(text)

    def test_round_trip_and_hash(self):
        cfg = ExperimentConfig.from_text(SMALL)
        again = ExperimentConfig.from_text(cfg.to_text())
        assert again == cfg and again.sha256 == cfg.sha256
        assert cfg.with_overrides(**{"replication.jobs": 4}).sha256 == cfg.sha256
        assert cfg.with_overrides(**{"simulation.seed": 1}).sha256 != cfg.sha256

    def test_structure_is_calibrated(self):
        p = ExperimentConfig.from_mapping().structure()
        assert p.kappa("hidden") == pytest.approx(0.505, abs=1e-12)


class TestCli:
    def test_run_bundle(self, small_cfg, tmp_path, capsys):
        out = tmp_path / "out"
        assert run("run", "--config", small_cfg, "--out", out) == 0
        names = files(out)
        for f in ("config.txt", "panel_hidden.csv", "panel_transparent.csv", "estimates.csv",
                  "fit_summary.txt", "fit_joint.txt", "lambda_profile.csv", "decomposition.csv",
                  "irr_summary.txt", "report.txt"):
            assert f in names
        h = (out / "config.txt").read_text().splitlines()[0]
        assert h.startswith("# config_sha256: ")
        for f in names:
            assert (out / f).read_text().splitlines()[0] == h
        est = pd.read_csv(out / "estimates.csv", comment="#")
        assert list(est.columns) == ["estimator", "t", "b_hat", "se", "n"]
        kv = ex.read_kv(out / "fit_summary.txt")
        assert set(kv) >= {"kappa_hat", "b0", "b_inf", "rss", "identified", "mode"}

    def test_deterministic_and_staged_match(self, small_cfg, tmp_path):
        a, b, s = tmp_path / "a", tmp_path / "b", tmp_path / "s"
        assert run("run", "--config", small_cfg, "--out", a) == 0
        assert run("run", "--config", small_cfg, "--out", b) == 0
        cmp = filecmp.dircmp(a, b)
        assert not cmp.diff_files and not cmp.left_only
        assert run("simulate", "--config", small_cfg, "--out", s) == 0
        assert run("estimate", "--config", small_cfg, "--out", s) == 0
        assert run("analyze", "--config", small_cfg, "--out", s) == 0
        for f in ("estimates.csv", "fit_summary.txt", "irr_summary.txt", "decomposition.csv"):
            assert (a / f).read_bytes() == (s / f).read_bytes(), f

    def test_embedded_config_reproduces(self, small_cfg, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("run", "--config", small_cfg, "--seed", 99, "--out", a) == 0
        assert run("run", "--config", a / "config.txt", "--out", b) == 0
        cmp = filecmp.dircmp(a, b)
        assert not cmp.diff_files and not cmp.left_only and not cmp.right_only

    def test_tiny_sample_runs(self, tmp_path):
        cfg = tmp_path / "tiny.cfg"
        cfg.write_text("simulation.n_workers = 10\nsimulation.horizon = 5\nestimation.n_boot = 10\n")
        assert run("run", "--config", cfg, "--out", tmp_path / "o") == 0
        assert (tmp_path / "o" / "report.txt").is_file()

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("nope.key = 1\n")
        assert run("run", "--config", cfg, "--out", tmp_path / "o") == 2
        assert "ConfigError" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_seed_range(self, tmp_path):
        assert run("run", "--seed", -1, "--out", tmp_path / "o") == 2

    def test_missing_panels(self, small_cfg, tmp_path):
        assert run("estimate", "--config", small_cfg, "--in", tmp_path / "empty", "--out", tmp_path / "o") == 2

    def test_zero_first_stage_is_config_error(self, tmp_path, capsys):
        cfg = tmp_path / "weak.cfg"
        cfg.write_text(SMALL + "structure.first_stage = 0.0\n")
        assert run("run", "--config", cfg, "--out", tmp_path / "o") == 2

    def test_relevance_exit(self, tmp_path, capsys):
        cfg = tmp_path / "weak.cfg"
        cfg.write_text("simulation.n_workers = 10\nsimulation.horizon = 5\nestimation.n_boot = 10\n"
                       "structure.p = 0.0001\n")
        assert run("run", "--config", cfg, "--out", tmp_path / "o") == 3
        assert "estimate failed: RelevanceError" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_numerical_exit(self, monkeypatch, tmp_path):
        def boom(cfg, out):
            raise NumericalError("diverged")
        monkeypatch.setattr(ex, "run_experiment", boom)
        assert run("run", "--out", tmp_path / "o") == 4


class TestReport:
    def test_theta_rows(self):
        text = ex.emit_report({"parameters": {"kappa_hat": "0.505", "b0": "0.198", "b_inf": "0.055",
                                              "mode": "constant_lambda"},
                               "theta": {}, "irr": {"private_irr": "0.08", "social_return": "0.055",
                                                    "signaling_share": "0.3125"}})
        for pct in ("16.4%", "8.9%", "6.1%", "31.2%"):
            assert pct in text

    def test_zero_signaling(self):
        text = ex.emit_report({"parameters": {"kappa_hat": "0.5", "b0": "0.1", "b_inf": "0.1", "mode": "x"},
                               "theta": {}, "irr": {"private_irr": "0.1", "social_return": "0.1",
                                                    "signaling_share": "0.0"}})
        assert "signaling share            0.0%" in text

    def test_unidentified_kappa(self):
        text = ex.emit_report({"parameters": {"kappa_hat": "nan", "b0": "0.1", "b_inf": "0.1", "mode": "x"},
                               "theta": {}, "irr": {"private_irr": "nan", "social_return": "nan",
                                                    "signaling_share": "nan"}})
        assert "not identified" in text and "n/a" in text

    def test_empty_bundle(self, tmp_path, capsys):
        assert run("report", "--in", tmp_path) == 2
        err = capsys.readouterr().err
        for section in ("parameters", "theta", "irr"):
            assert section in err

    def test_report_command(self, small_cfg, tmp_path, capsys):
        out = tmp_path / "out"
        run("run", "--config", small_cfg, "--out", out)
        capsys.readouterr()
        assert run("report", "--in", out) == 0
        printed = capsys.readouterr().out
        assert printed == (out / "report.txt").read_text().split("\n", 1)[1]


class TestMonteCarlo:
    def test_jobs_do_not_change_summary(self, small_cfg, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("montecarlo", "--config", small_cfg, "--jobs", 1, "--out", a) == 0
        assert run("montecarlo", "--config", small_cfg, "--jobs", 2, "--out", b) == 0
        assert (a / "replication_summary.csv").read_bytes() == (b / "replication_summary.csv").read_bytes()
        df = pd.read_csv(a / "replication_summary.csv", comment="#")
        assert {"parameter", "truth", "mean", "sd", "bias", "coverage_90"} <= set(df.columns)

    def test_single_rep_has_undefined_sd(self, small_cfg, tmp_path):
        out = tmp_path / "o"
        assert run("montecarlo", "--config", small_cfg, "--reps", 1, "--out", out) == 0
        df = pd.read_csv(out / "replication_summary.csv", comment="#")
        assert not df["sd_defined"].any()
        assert all(math.isnan(x) for x in df["sd"])

    def test_single_rep_equals_run(self, small_cfg, tmp_path):
        cfg = ExperimentConfig.from_file(small_cfg)
        rep, rec = ex.replicate_once(cfg.to_text(), 0)
        assert rep == 0
        out = tmp_path / "r"
        ex.run_experiment(cfg, out)
        kv = ex.read_kv(out / "fit_summary.txt")
        primary = cfg.fits[0]
        assert rec[primary]["kappa_hat"][0] == pytest.approx(float(kv["kappa_hat"]), abs=1e-12)

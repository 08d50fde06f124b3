#!/usr/bin/env python3
"""
Tests for the command-line entry point
"""

import logging
import os
import sys

import pytest

# Add parent directory to path for imports
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.insert(0, parent_dir)

from cpmsim.cli import build_parser, main
from cpmsim.logging_config import LogConfig
from cpmsim.utils import EXIT_CONFIG_ERROR, EXIT_OK

SMALL_RUN = """
[scenario]
duration_s = 1.0
seed = 4

[highway]
length_m = 250.0

[traffic]
density_veh_per_km = 20.0

[metrics]
warmup_s = 0.0
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL_RUN, encoding="utf-8")
    return path


class TestValidate:
    """Test the validate command"""

    def test_defaults(self, capsys):
        assert main(["validate"]) == EXIT_OK
        assert "defaults: OK" in capsys.readouterr().out

    def test_good_file(self, small_config, capsys):
        assert main(["validate", "--config", str(small_config)]) == EXIT_OK
        assert f"{small_config}: OK" in capsys.readouterr().out

    def test_broken_file(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("[cpm]\nt_gen_cpm_s = 0.05\n", encoding="utf-8")
        assert main(["validate", "--config", str(path)]) == EXIT_CONFIG_ERROR

    def test_missing_file(self, tmp_path):
        assert main(["validate", "--config", str(tmp_path / "absent.toml")]) == EXIT_CONFIG_ERROR


class TestFig1:
    """Test the scripted schedule printout"""

    def test_first_scenario(self, capsys):
        assert main(["fig1"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("Scenario 1")
        assert "etsi: 4 CPMs" in out
        assert "look_ahead: 4 CPMs" in out

    def test_second_scenario_single_policy(self, capsys):
        assert main(["fig1", "--scenario", "2", "--policy", "look_ahead"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "look_ahead: 5 CPMs" in out
        assert "etsi:" not in out

    def test_unknown_scenario_rejected(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["fig1", "--scenario", "3"])


class TestRun:
    """Test the run command"""

    def test_writes_results(self, small_config, tmp_path, capsys):
        out_dir = tmp_path / "results"
        code = main(["run", "--config", str(small_config), "--policy", "look_ahead", "--out", str(out_dir)])
        assert code == EXIT_OK
        summary = out_dir / "summary.csv"
        assert summary.read_text(encoding="utf-8").startswith("# config_hash=")
        assert (out_dir / "cpm_log.csv").exists()
        assert "look_ahead seed=4" in capsys.readouterr().out

    def test_seed_override(self, small_config, tmp_path, capsys):
        code = main(["run", "--config", str(small_config), "--seed", "9", "--out", str(tmp_path)])
        assert code == EXIT_OK
        first_line = (tmp_path / "summary.csv").read_text(encoding="utf-8").splitlines()[0]
        assert first_line.endswith("seed=9")

    def test_bad_trace(self, tmp_path):
        trace = tmp_path / "bad.txt"
        trace.write_text("0.0 a 0\n", encoding="utf-8")
        config = tmp_path / "trace.toml"
        config.write_text(f'[scenario]\nlayout = "trace"\n[trace]\npath = "{trace.as_posix()}"\n', encoding="utf-8")
        assert main(["run", "--config", str(config), "--out", str(tmp_path / "out")]) == EXIT_CONFIG_ERROR


class TestSweep:
    """Test the sweep command"""

    def test_writes_tables(self, small_config, tmp_path, capsys):
        code = main([
            "sweep", "--config", str(small_config), "--seeds", "1", "2",
            "--parallel", "1", "--out", str(tmp_path),
        ])
        assert code == EXIT_OK
        assert (tmp_path / "sweep.csv").exists()
        comparison = (tmp_path / "comparison.csv").read_text(encoding="utf-8").splitlines()
        assert comparison[0].startswith("# config_hash=")
        assert comparison[0].endswith("seed=1;2")
        assert "cpm_rate_hz" in capsys.readouterr().out

    def test_repeated_seed_flag(self, small_config, tmp_path):
        code = main([
            "sweep", "--config", str(small_config), "--seed", "1", "--seed", "2",
            "--policy", "etsi", "--parallel", "1", "--out", str(tmp_path),
        ])
        assert code == EXIT_OK
        table = (tmp_path / "sweep.csv").read_text(encoding="utf-8").splitlines()
        assert table[0].endswith("seed=1;2")

    def test_seed_flags_combine(self):
        args = build_parser().parse_args(["sweep", "--seeds", "0", "1", "--seed", "5"])
        assert args.seeds == [0, 1]
        assert args.seed == [5]


class TestLogLevel:
    """Test log level resolution"""

    def test_explicit_name(self):
        assert LogConfig.resolve_level("debug") == logging.DEBUG

    def test_environment(self, monkeypatch):
        monkeypatch.setenv("LOG_LEVEL", "WARNING")
        assert LogConfig.resolve_level() == logging.WARNING

    def test_unknown_falls_back_to_info(self):
        assert LogConfig.resolve_level("chatty") == logging.INFO

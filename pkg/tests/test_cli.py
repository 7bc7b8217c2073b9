"""Tests for the qfitime command-line entry point."""

import json

from qfitime.cli import EXIT_INVALID, EXIT_MISSING, EXIT_OK, main
from qfitime.resultfile import load_bundle


class TestRun:
    def test_missing_config(self, tmp_path, capsys):
        code = main(["blackhole", "--config", str(tmp_path / "none.json")])
        assert code == EXIT_MISSING
        assert "File not found" in capsys.readouterr().out

    def test_invalid_param(self, capsys):
        assert main(["qfi-scan", "-p", "n=[13]"]) == EXIT_INVALID
        assert "config.params.n: must be 2..12, got 13" in capsys.readouterr().out

    def test_malformed_override(self, capsys):
        assert main(["blackhole", "-p", "points"]) == EXIT_INVALID
        assert "KEY=VALUE" in capsys.readouterr().out

    def test_config_for_other_experiment(self, tmp_path, capsys):
        path = tmp_path / "mle.json"
        path.write_text(json.dumps({"experiment": "mle"}))
        assert main(["blackhole", "--config", str(path)]) == EXIT_INVALID
        assert "not 'blackhole'" in capsys.readouterr().out

    def test_run_writes_bundle(self, tmp_path, capsys):
        out = tmp_path / "bh.json"
        assert main(["blackhole", "-p", "points=10", "--seed", "3", "--out", str(out)]) == EXIT_OK
        assert f"Saved: {out}" in capsys.readouterr().out
        bundle = load_bundle(out)
        assert len(bundle.rows) == 10
        assert bundle.config["seed"] == 3

    def test_config_file_and_env_seed(self, tmp_path, monkeypatch):
        config = tmp_path / "bh.json"
        out = tmp_path / "bh.csv"
        config.write_text(json.dumps({"experiment": "blackhole", "seed": 1, "output": str(out),
                                      "params": {"points": 4}}))
        monkeypatch.setenv("QFITIME_SEED", "9")
        assert main(["blackhole", "--config", str(config)]) == EXIT_OK
        assert load_bundle(out).config["seed"] == 9

    def test_bad_env_value(self, monkeypatch, capsys):
        monkeypatch.setenv("QFITIME_THREADS", "many")
        assert main(["blackhole"]) == EXIT_INVALID
        assert "QFITIME_THREADS" in capsys.readouterr().out

    def test_run_without_output_prints_summary(self, capsys):
        assert main(["blackhole", "-p", "points=3"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "blackhole: 3 rows" in out
        assert "| t |" in out

    def test_paper_scale_flag(self, tmp_path):
        out = tmp_path / "td.json"
        args = ["tracedist", "--paper-scale", "-p", "n=3", "-p", "n_Abar=[1]", "-p", "d_exponents=[1]",
                "-p", "samples=5", "--out", str(out)]
        assert main(args) == EXIT_OK
        bundle = load_bundle(out)
        assert bundle.config["paper_scale"] is True
        assert bundle.config["params"]["samples"] == 10_000
        (sub,) = [r for r in bundle.rows if r["kind"] == "sub"]
        assert sub["samples"] == 10_000

    def test_paper_scale_from_config_file(self, tmp_path):
        config = tmp_path / "bh.json"
        out = tmp_path / "bh_out.json"
        config.write_text(json.dumps({"experiment": "blackhole", "paper_scale": True,
                                      "params": {"points": 3}}))
        assert main(["blackhole", "--config", str(config), "--out", str(out)]) == EXIT_OK
        assert load_bundle(out).config["paper_scale"] is True


class TestSummarize:
    def test_summarize_saved_file(self, tmp_path, capsys):
        data = tmp_path / "bh.json"
        main(["blackhole", "-p", "points=5", "--out", str(data)])
        capsys.readouterr()
        summary = tmp_path / "summary.csv"
        assert main(["summarize", str(data), "--out", str(summary)]) == EXIT_OK
        assert "## blackhole (mean)" in capsys.readouterr().out
        assert load_bundle(summary).experiment == "blackhole-summary"

    def test_missing_file(self, tmp_path, capsys):
        assert main(["summarize", str(tmp_path / "none.csv")]) == EXIT_MISSING
        assert "File not found" in capsys.readouterr().out

    def test_unreadable_bundle(self, tmp_path, capsys):
        path = tmp_path / "old.json"
        path.write_text(json.dumps({"format_version": 99, "experiment": "mle", "rows": []}))
        assert main(["summarize", str(path)]) == EXIT_INVALID
        assert "Cannot summarize old.json" in capsys.readouterr().out


class TestInfo:
    def test_registry(self, capsys):
        assert main(["info"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "| experiment | samples | paper_samples | description |" in out
        assert "| qfi-scan |" in out

    def test_experiment_defaults(self, capsys):
        assert main(["info", "mle"]) == EXIT_OK
        assert '"model": "qubit"' in capsys.readouterr().out

    def test_unknown_experiment(self, capsys):
        assert main(["info", "teleport"]) == EXIT_INVALID
        assert "Unknown experiment: teleport" in capsys.readouterr().out

    def test_no_command_prints_help(self, capsys):
        assert main([]) == EXIT_OK
        assert "usage: qfitime" in capsys.readouterr().out

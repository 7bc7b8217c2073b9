"""Tests for experiment configs, runs, resume journals and summaries."""

import json
import math
from pathlib import Path

import pytest

from qfitime.experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    get_experiment,
    read_config,
    reduce_series,
    reduce_values,
    resolve_setting,
    run,
    summarize,
)
from qfitime.resultfile import ResultBundle, append_journal, load_bundle

SMALL_SCAN = {"n": [4], "t_max": 2.0, "t_points": 3, "samples": 2}


def _make_config(experiment: str = "qfi-scan", **kwargs) -> ExperimentConfig:
    params = kwargs.pop("params", SMALL_SCAN if experiment == "qfi-scan" else {})
    return ExperimentConfig(experiment, params, master_seed=5, **kwargs)


class TestConfig:
    def test_defaults_merged(self):
        config = _make_config()
        assert config.params["model"] == "mixed_field_ising"
        assert config.params["n"] == [4]
        assert config.params["n_A"] == []

    def test_paper_scale_sets_count(self):
        config = ExperimentConfig("haar-sat", {"n": 4}, paper_scale=True)
        assert config.params["samples"] == EXPERIMENTS["haar-sat"].paper_count

    def test_unknown_experiment(self):
        with pytest.raises(ValueError, match="config.experiment: unknown experiment"):
            ExperimentConfig("teleport")

    def test_unknown_parameter(self):
        with pytest.raises(ValueError, match="config.params.foo: unknown parameter for qfi-scan"):
            ExperimentConfig("qfi-scan", {"foo": 1})

    def test_size_out_of_range(self):
        with pytest.raises(ValueError, match=r"config.params.n: must be 2..12, got 13"):
            ExperimentConfig("qfi-scan", {"n": [13]})

    def test_subsystem_not_smaller(self):
        with pytest.raises(ValueError, match="config.params.n_A"):
            ExperimentConfig("qfi-scan", {"n": [4], "n_A": [4]})

    def test_estimation_subsystem_size(self):
        config = ExperimentConfig("discriminate", {"model": "mixed_field_ising", "n": 6, "n_A": 3})
        assert config.params["n_A"] == 3
        with pytest.raises(ValueError, match="config.params.n_A"):
            ExperimentConfig("discriminate", {"n": 6, "n_A": 7})

    def test_type_errors(self):
        with pytest.raises(ValueError, match="config.params.n: expected list of integers"):
            ExperimentConfig("qfi-scan", {"n": 8})
        with pytest.raises(ValueError, match="config.params.t_max: expected number"):
            ExperimentConfig("qfi-scan", {"t_max": "long"})

    def test_counts_must_be_positive(self):
        with pytest.raises(ValueError, match="config.params.samples: must be >= 1"):
            ExperimentConfig("qfi-scan", {"samples": 0})

    def test_threads_must_be_positive(self):
        with pytest.raises(ValueError, match="config.threads"):
            _make_config(threads=0)

    def test_t0_inside_grid(self):
        with pytest.raises(ValueError, match="config.params.t0"):
            ExperimentConfig("mle", {"t0": 3.0})

    def test_get_experiment(self):
        assert get_experiment("mle").count_key == "repetitions"


class TestConfigFile:
    def test_read_config(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"experiment": "mle", "seed": 3, "params": {"N": [100]}}))
        assert read_config(path)["params"] == {"N": [100]}

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        with pytest.raises(ValueError, match="config: invalid JSON"):
            read_config(path)

    def test_unknown_field(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"experiment": "mle", "colour": "red"}))
        with pytest.raises(ValueError, match="config.colour: unknown field"):
            read_config(path)

    def test_wrong_type(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": "seven"}))
        with pytest.raises(ValueError, match="config.seed: expected int"):
            read_config(path)

    def test_precedence(self):
        assert resolve_setting(1, "2", 3, 4, "X") == 1
        assert resolve_setting(None, "2", 3, 4, "X") == 2
        assert resolve_setting(None, None, 3, 4, "X") == 3
        assert resolve_setting(None, "", None, 4, "X") == 4

    def test_bad_environment_value(self):
        with pytest.raises(ValueError, match="QFITIME_SEED"):
            resolve_setting(None, "abc", None, 1, "QFITIME_SEED")


class TestRun:
    def test_scan_rows(self):
        bundle = run(_make_config())
        # 2 samples x 3 times x n_A in 1..3
        assert len(bundle.rows) == 18
        assert bundle.metadata["tasks"] == 2
        row = bundle.rows[0]
        assert row["task"] == "n=4/sample=0"
        assert row["F_A"] == pytest.approx(row["F_ent"] + row["F_rot"], abs=1e-8)

    def test_threads_do_not_change_rows(self):
        a = run(_make_config(threads=1))
        b = run(_make_config(threads=3))
        assert [r["F_A"] for r in a.rows] == [r["F_A"] for r in b.rows]

    def test_seed_changes_rows(self):
        a = run(_make_config())
        b = run(ExperimentConfig("qfi-scan", SMALL_SCAN, master_seed=6))
        assert a.rows[-1]["F_A"] != b.rows[-1]["F_A"]

    def test_output_saved_and_journal_removed(self, tmp_path):
        out = tmp_path / "scan.csv"
        run(_make_config(output=out))
        assert out.exists()
        assert not (tmp_path / "scan.csv.journal").exists()
        assert len(load_bundle(out).rows) == 18

    def test_resume_skips_finished_task(self, tmp_path):
        out = tmp_path / "scan.json"
        config = _make_config(output=out)
        marker = {"marker": 1, "task": "n=4/sample=0"}
        append_journal(tmp_path / "scan.json.journal",
                       [{"_config": config.echo()}, marker, {"_done": "n=4/sample=0"}])
        bundle = run(config)
        assert bundle.metadata["resumed_tasks"] == 1
        assert bundle.rows[0] == marker
        assert len(bundle.rows) == 1 + 9

    def test_unfinished_task_is_rerun(self, tmp_path):
        out = tmp_path / "scan.json"
        config = _make_config(output=out)
        append_journal(tmp_path / "scan.json.journal",
                       [{"_config": config.echo()}, {"marker": 1, "task": "n=4/sample=0"}])
        bundle = run(config)
        assert bundle.metadata["resumed_tasks"] == 0
        assert len(bundle.rows) == 18

    def test_foreign_journal_ignored(self, tmp_path):
        out = tmp_path / "scan.json"
        append_journal(tmp_path / "scan.json.journal",
                       [{"_config": {"experiment": "mle"}}, {"_done": "n=4/sample=0"}])
        bundle = run(_make_config(output=out))
        assert bundle.metadata["resumed_tasks"] == 0

    def test_fresh_run_ignores_journal(self, tmp_path):
        out = tmp_path / "scan.json"
        config = _make_config(output=out)
        append_journal(tmp_path / "scan.json.journal",
                       [{"_config": config.echo()}, {"_done": "n=4/sample=0"}])
        assert run(config, resume=False).metadata["resumed_tasks"] == 0


class TestExperiments:
    def test_xxz_scan(self):
        params = {"n": [4], "t_max": 1.0, "t_points": 2, "samples": 1}
        bundle = run(ExperimentConfig("xxz-scan", params))
        assert bundle.config["params"]["model"] == "xxz"
        assert len(bundle.rows) == 6
        assert bundle.rows[0]["F_full"] > 0

    def test_lindblad(self):
        config = ExperimentConfig("lindblad", {"n_A": [2], "t_max": 1.0, "t_points": 11})
        bundle = run(config)
        assert len(bundle.rows) == 11
        assert bundle.rows[0]["purity"] == pytest.approx(1.0)
        assert math.isfinite(bundle.rows[0]["gap"])
        (row,) = summarize(bundle).rows
        assert 0 < row["S_ratio"] <= 1.0

    def test_haar_sat(self):
        bundle = run(ExperimentConfig("haar-sat", {"n": 4, "n_A": [1, 3], "samples": 2}))
        assert len(bundle.rows) == 4
        rows = summarize(bundle).rows
        assert [r["n_A"] for r in rows] == [1, 3]
        assert all(r["F_A_pred"] > 0 for r in rows)

    def test_cfi_scan_defaults_to_full_system(self):
        params = {"n": [4], "t_min": 0.0, "t_max": 1.0, "t_points": 2, "samples": 2}
        bundle = run(ExperimentConfig("cfi-scan", params))
        assert len(bundle.rows) == 4
        assert {r["n_A"] for r in bundle.rows} == {4}
        assert {r["d_Abar"] for r in bundle.rows} == {1}

    def test_mle(self):
        bundle = run(ExperimentConfig("mle", {"N": [200, 400], "repetitions": 5}))
        kinds = [r["kind"] for r in bundle.rows]
        assert kinds == ["cramer_rao", "example", "cramer_rao", "example"]
        summary = summarize(bundle)
        assert [r["N"] for r in summary.rows] == [200, 400]
        assert len(summary.notes["variance_ratios"]) == 1

    def test_discriminate_schema(self):
        params = {"n": 6, "source": "equilibrium", "trials": 3, "runs": 2, "t_points": 241}
        bundle = run(ExperimentConfig("discriminate", params))
        assert [r["run"] for r in bundle.rows] == [0, 1]
        assert {r["decision"] for r in bundle.rows} <= {"evolving", "equilibrium"}
        (row,) = summarize(bundle).rows
        assert row["runs"] == 2

    def test_bgue(self):
        bundle = run(ExperimentConfig("bgue", {"n_S": 1, "n": 4, "t_points": 5}))
        assert len(bundle.rows) == 5
        assert bundle.rows[0]["d_B"] == 8

    def test_tracedist(self):
        params = {"d_exponents": [1, 2], "n": 6, "n_Abar": [2], "samples": 50}
        bundle = run(ExperimentConfig("tracedist", params))
        full = [r for r in bundle.rows if r["kind"] == "full"]
        (sub,) = [r for r in bundle.rows if r["kind"] == "sub"]
        assert [r["d"] for r in full] == [2, 4, math.inf]
        assert sub["TD_mean"] == pytest.approx(sub["TD_pred"], rel=0.2)
        assert 0.0 <= sub["ks_pvalue"] <= 1.0

    def test_fidelity(self):
        bundle = run(ExperimentConfig("fidelity", {"n": 4, "samples": 2}))
        assert len(bundle.rows) == 6
        rows = summarize(bundle).rows
        assert [r["F_H_pred"] for r in rows] == [1.0, 1.0, 0.25]

    def test_blackhole(self):
        bundle = run(ExperimentConfig("blackhole", {"points": 20}))
        regimes = [r["regime"] for r in bundle.rows]
        assert regimes[0] == "pre-page"
        assert regimes[-1] == "post-page"
        assert summarize(bundle).rows[0]["t"] == 0.0


class TestSummaries:
    def test_scan_summary(self):
        bundle = run(_make_config())
        summary = summarize(bundle, window=(1.0, 2.0))
        assert [(r["n"], r["n_A"]) for r in summary.rows] == [(4, 1), (4, 2), (4, 3)]
        assert [r["x"] for r in summary.rows] == [-2, 0, 2]
        assert summary.notes["collapse_slope_expected"] == pytest.approx(math.log(2))
        assert "collapse_slope" not in summary.notes

    def test_collapse_slope_matches_expected(self):
        # F_A = c n_A 2^(2 n_A - n): per-site slope is log 2, the raw slope adds the log n_A trend
        config = ExperimentConfig("qfi-scan", {"n": [8], "t_max": 20.0})
        rows = [
            {"n": 8, "n_A": n_A, "sample": s, "t": t, "F_A": 0.3 * n_A * 2.0 ** (2 * n_A - 8),
             "F_rot": 0.0, "f_comp": 0.1}
            for n_A in (1, 2, 3, 5) for s in range(2) for t in (16.0, 18.0)
        ]
        bundle = ResultBundle("qfi-scan", config.echo(), rows)
        notes = summarize(bundle, window=(15.0, 20.0)).notes
        assert notes["collapse_slope_expected"] == pytest.approx(math.log(2))
        assert notes["collapse_slope_per_site"] == pytest.approx(notes["collapse_slope_expected"])
        assert notes["collapse_slope"] == pytest.approx(math.log(2) + math.log(3) / 4)

    def test_window_fallback(self, caplog):
        bundle = run(_make_config())
        with caplog.at_level("WARNING"):
            summarize(bundle)
        assert "no times in window" in caplog.text

    def test_bad_reduction(self):
        with pytest.raises(ValueError, match="reduction"):
            summarize(run(_make_config()), reduction="mode")

    def test_reduce_values(self):
        mean, se = reduce_values([1.0, 2.0, 3.0])
        assert mean == 2.0
        assert se == pytest.approx(1 / math.sqrt(3))
        median, se_median = reduce_values([1.0, 2.0, 10.0], "median")
        assert median == 2.0
        assert se_median == pytest.approx(reduce_values([1.0, 2.0, 10.0])[1] * math.sqrt(math.pi / 2))

    def test_reduce_empty(self):
        with pytest.raises(ValueError, match="no values"):
            reduce_values([])

    def test_reduce_series(self):
        rows = [{"t": 0, "v": 1.0}, {"t": 0, "v": 3.0}, {"t": 1, "v": 5.0}]
        out = reduce_series(rows, "v", ("t",))
        assert out[0] == {"t": 0, "v": 2.0, "v_stderr": 1.0, "count": 2}
        assert out[1]["count"] == 1


CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    doc = read_config(path)
    config = ExperimentConfig(doc["experiment"], doc.get("params", {}),
                              master_seed=doc.get("seed", 1234), threads=doc.get("threads", 1))
    assert config.experiment == path.stem

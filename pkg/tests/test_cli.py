"""CLI surface: subcommands, exit codes, config schema enforcement."""

import json
from pathlib import Path

import pytest

from pmsurv.cli import main
from pmsurv.errors import InvalidConfig
from pmsurv.runconfig import load_run_config

MADURO_DIR = str(Path(__file__).parent / "data" / "maduro")


@pytest.fixture(scope="module")
def world_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("world")
    cfg = d / "synth.toml"
    cfg.write_text(
        "[synth]\n"
        "n_noise = 15\nn_skilled = 3\nn_insider = 2\nn_sybil = 2\n"
        "n_market_maker = 1\nmarkets_per_category = 6\n"
        "insider_coupling = true\nmaster_seed = 13\n",
        encoding="utf-8",
    )
    rc = main(["synth", "--config", str(cfg), "--out", str(d / "corpus")])
    assert rc == 0
    return d


class TestExitCodes:
    def test_usage_error_is_1(self):
        assert main(["classify"]) == 1  # --corpus required
        assert main(["no-such-command"]) == 1

    def test_parse_error_is_2(self, tmp_path):
        (tmp_path / "markets.jsonl").write_text('{"market_id": 5}\n')
        (tmp_path / "trades.jsonl").write_text("")
        assert main(["classify", "--corpus", str(tmp_path)]) == 2

    def test_validation_error_is_2(self, tmp_path):
        (tmp_path / "markets.jsonl").write_text(
            '{"market_id":"m1","event_id":"e1","category":"POLITICS",'
            '"t_open":"2026-01-01T00:00:00Z","t_resolve":"2026-02-01T00:00:00Z",'
            '"outcome":1}\n'
        )
        (tmp_path / "trades.jsonl").write_text(
            '{"trade_id":"t1","account_id":"a1","market_id":"ghost","side":"BUY",'
            '"size":"1","price":"0.5","ts":"2026-01-01T12:00:00Z"}\n'
        )
        assert main(["classify", "--corpus", str(tmp_path)]) == 2

    def test_runtime_error_is_3(self, world_dir):
        # hazard over an empty duration set (category with no markets is
        # impossible here, so use a corpus with no t_event at all)
        assert main(["hazard", "--corpus", MADURO_DIR, "--category", "SPORTS"]) == 3

    def test_unknown_config_key_is_2(self, tmp_path, world_dir):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("[pipeline]\nmystery_knob = 1\n", encoding="utf-8")
        assert main([
            "classify", "--corpus", str(world_dir / "corpus"), "--config", str(cfg),
        ]) == 2


class TestCommands:
    def test_classify_writes_jsonl(self, world_dir, tmp_path):
        out = tmp_path / "cls.jsonl"
        rc = main(["classify", "--corpus", str(world_dir / "corpus"),
                   "--out", str(out)])
        assert rc == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert rows and {"account_id", "category", "p_value"} <= set(rows[0])

    def test_screen_lifecycle(self, world_dir, tmp_path):
        out = tmp_path / "life.jsonl"
        rc = main(["screen", "lifecycle", "--corpus", str(world_dir / "corpus"),
                   "--flagged-only", "--out", str(out)])
        assert rc == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert all(r["flagged"] for r in rows)
        flagged_accounts = {r["account_id"] for r in rows}
        assert any(a.startswith("insider-") for a in flagged_accounts)

    def test_screen_composite_single_market(self, world_dir, tmp_path):
        out = tmp_path / "comp.jsonl"
        rc = main(["screen", "composite", "--corpus", str(world_dir / "corpus"),
                   "--market", "m0000", "--out", str(out)])
        assert rc == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert rows and all(r["market_id"] == "m0000" for r in rows)

    def test_screen_composite_all_markets_skips_thin_ones(self, world_dir, tmp_path):
        out = tmp_path / "comp_all.jsonl"
        rc = main(["screen", "composite", "--corpus", str(world_dir / "corpus"),
                   "--out", str(out)])
        assert rc == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert len({r["market_id"] for r in rows}) > 1

    def test_screen_composite_explicit_thin_market_errors(self, tmp_path):
        # the one-market fixture corpus has a single-account unrelated market
        rc = main(["screen", "composite", "--corpus", MADURO_DIR,
                   "--market", "mkt-unrelated", "--out", str(tmp_path / "x.jsonl")])
        assert rc == 3

    def test_ils_emits_score_or_skip(self, world_dir, tmp_path):
        out = tmp_path / "ils.jsonl"
        rc = main(["ils", "--corpus", str(world_dir / "corpus"), "--out", str(out)])
        assert rc == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert rows
        assert all("skip_reason" in r or "gate" in r for r in rows)

    def test_hazard_fit(self, world_dir, tmp_path):
        out = tmp_path / "hazard.json"
        rc = main(["hazard", "--corpus", str(world_dir / "corpus"),
                   "--out", str(out)])
        assert rc == 0
        fit = json.loads(out.read_text())
        assert fit["n"] == 30
        assert fit["lambda_hat"] > 0

    def test_pipeline_then_eval(self, world_dir, tmp_path, capsys):
        out_dir = tmp_path / "run"
        rc = main(["pipeline", "run", "--corpus", str(world_dir / "corpus"),
                   "--out", str(out_dir)])
        assert rc == 0
        assert (out_dir / "report.json").exists()
        assert (out_dir / "queue.csv").exists()

        eval_out = tmp_path / "eval.json"
        rc = main(["eval", "--truth", str(world_dir / "corpus" / "truth.jsonl"),
                   "--report", str(out_dir / "report.json"),
                   "--out", str(eval_out)])
        assert rc == 0
        metrics = json.loads(eval_out.read_text())
        assert metrics["account_recall"] == 1.0
        assert metrics["market_recall"] == 1.0

    def test_persistence_command_reports_insufficient(self, capsys):
        rc = main(["persistence", "--corpus", MADURO_DIR])
        assert rc == 3  # three one-shot accounts cannot qualify in both halves


class TestRunConfig:
    def test_defaults_without_file(self):
        rc = load_run_config(None)
        assert rc.pipeline.ils_threshold == 0.25
        assert rc.pipeline.short_window_threshold == 0.10
        assert rc.pipeline.holding_fraction == 0.05
        assert rc.null_spec.draws == 10_000
        assert rc.null_spec.min_events == 10
        assert rc.lifecycle.window_days == 7.0

    def test_seed_override_propagates(self):
        rc = load_run_config(None, seed_override=99)
        assert rc.null_spec.master_seed == 99
        assert rc.world.master_seed == 99

    def test_nested_tables(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(
            "[run]\nseed = 7\nworkers = 2\n"
            "[null]\ndraws = 500\n"
            "[lifecycle]\nwindow_days = 10\nmin_volume = \"2500.00\"\n"
            "[pipeline]\nils_threshold = 0.3\n"
            "[pipeline.category_weights]\nPOLITICS = 5.0\n",
            encoding="utf-8",
        )
        rc = load_run_config(cfg)
        assert rc.null_spec.draws == 500
        assert rc.null_spec.master_seed == 7
        assert rc.lifecycle.window_days == 10.0
        assert str(rc.lifecycle.min_volume) == "2500.00"
        assert rc.pipeline.ils_threshold == 0.3
        from pmsurv.model import Category

        assert rc.pipeline.category_weights[Category.POLITICS] == 5.0
        assert rc.pipeline.category_weights[Category.SPORTS] == 0.5  # default kept

    def test_unknown_section_fatal(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text("[mystery]\nx = 1\n", encoding="utf-8")
        with pytest.raises(InvalidConfig):
            load_run_config(cfg)

    def test_out_of_range_rejected(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text("[pipeline]\nholding_fraction = 1.5\n", encoding="utf-8")
        with pytest.raises(InvalidConfig):
            load_run_config(cfg)

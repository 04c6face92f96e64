"""
Tests for the tcc-audit command line and its exit codes
"""

import json
import os

import pytest

from tcc_saliency_audit.cli import build_parser, main

SMALL_CONFIG = {
    "model": {"hidden_size": 4, "attention_width": 4, "input_height": 16, "input_width": 16},
    "train": {"epochs": 1, "augment": False},
    "synth": {"num_sequences": 4, "num_frames": 2, "height": 16, "width": 16},
    "campaign": {"specs": ["C-S"], "folds": 2, "spatial_threshold": 0.5, "compare_baseline": False},
    "logging": {"log_to_file": False, "level": "WARNING"},
}


@pytest.fixture
def config_file(tmp_path) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CONFIG))
    return str(path)


@pytest.fixture
def cli(tmp_path, config_file):
    out_dir = str(tmp_path / "out")

    def run(*argv: str) -> int:
        return main(["--config", config_file, "--out-dir", out_dir, *argv])

    run.out_dir = out_dir
    return run


class TestParser:
    """Test cases for argument parsing."""

    def test_subcommand_required(self) -> None:
        assert main([]) == 1

    def test_unknown_subcommand(self) -> None:
        assert main(["bogus"]) == 1

    def test_bad_option_value(self) -> None:
        assert main(["replay", "--alpha", "high"]) == 1

    def test_export_format_is_case_insensitive(self) -> None:
        args = build_parser().parse_args(["export", "runs.csv", "--format", "csv"])
        assert args.format == "CSV"

    def test_missing_config_file(self, tmp_path) -> None:
        assert main(["--config", str(tmp_path / "absent.json"), "replay"]) == 1


class TestReplayCommand:
    """Test cases for the replay subcommand."""

    def test_text_table(self, capsys) -> None:
        assert main(["replay"]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0].startswith("config")
        assert "CA-ST" in out

    def test_json(self, capsys) -> None:
        assert main(["replay", "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["configs"]) == 9


class TestWorkflow:
    """End-to-end runs of synth, train, wp2, report, export and heatmap."""

    def test_campaign_without_data(self, cli) -> None:
        assert cli("wp1") == 1

    def test_report_on_empty_store(self, cli, capsys) -> None:
        assert cli("report") == 0
        assert capsys.readouterr().out.startswith("config")

    def test_unknown_run_is_a_runtime_error(self, cli) -> None:
        assert cli("synth") == 0
        assert cli("heatmap", "nope", "synth_0000") == 2

    def test_full_pipeline(self, cli, capsys, tmp_path) -> None:
        assert cli("synth") == 0
        assert os.path.exists(os.path.join(cli.out_dir, "data", "manifest.json"))
        assert cli("train", "C-S", "--fold", "1") == 0
        assert cli("wp2") == 0
        capsys.readouterr()

        assert cli("report", "--json") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["configs"] == ["C-S"]

        export = str(tmp_path / "runs.csv")
        assert cli("export", export, "--format", "CSV") == 0
        assert os.path.exists(export)

        masks_root = os.path.join(cli.out_dir, "masks")
        run_id = sorted(os.listdir(masks_root))[0]
        sequence_id = sorted(os.listdir(os.path.join(masks_root, run_id)))[0].split(".")[0]
        capsys.readouterr()
        assert cli("heatmap", run_id, sequence_id, "--frame", "0") == 0
        written = capsys.readouterr().out.split()
        assert written and all(os.path.exists(p) for p in written)

    def test_no_train_flag(self, cli) -> None:
        assert cli("synth") == 0
        assert cli("wp1", "--no-train") == 2

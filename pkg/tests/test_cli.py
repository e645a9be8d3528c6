"""Command-line front end: end-to-end runs, config precedence, manifests,
and the exit-code contract."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from matchiv.cli import EXIT_CODES, main
from matchiv.errors import ConfigError, SchemaError, ValidationError


@pytest.fixture
def runner():
    return CliRunner()


def _simulate(runner, out_dir, *extra):
    args = ["simulate", "--n-players", "60", "--n-matches", "400",
            "--seed", "3", "--out-dir", str(out_dir), *extra]
    res = runner.invoke(main, args)
    assert res.exit_code == 0, res.output
    return out_dir / "panel.csv"


class TestSimulateCommand:
    def test_outputs_and_manifest(self, runner, tmp_path):
        panel = _simulate(runner, tmp_path / "sim")
        assert panel.exists()
        truth = json.loads((tmp_path / "sim" / "truth.json").read_text())
        assert truth["config"]["seed"] == 3
        manifest = json.loads((tmp_path / "sim" / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert len(manifest["input_digests"]["panel"]) == 64

    def test_same_seed_byte_identical(self, runner, tmp_path):
        a = _simulate(runner, tmp_path / "a")
        b = _simulate(runner, tmp_path / "b")
        assert a.read_bytes() == b.read_bytes()

    def test_spectral_condition_violation_fails_cleanly(self, runner, tmp_path):
        res = runner.invoke(
            main,
            ["simulate", "--mode", "two-player-reflection", "--beta", "1.5",
             "--out-dir", str(tmp_path / "bad")],
        )
        assert res.exit_code == EXIT_CODES[ConfigError]
        assert "spectral" in res.output

    def test_mask_sidecar_written_when_masked(self, runner, tmp_path):
        _simulate(runner, tmp_path / "m", "--exposure-missing-rate", "0.4")
        assert (tmp_path / "m" / "mask.csv").exists()

    def test_config_file_filled_in_flag_wins(self, runner, tmp_path):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("seed = 9\nn-players = 44  # comment\n")
        out = tmp_path / "cfg_out"
        res = runner.invoke(main, [
            "simulate", "--config", str(cfg), "--seed", "3",
            "--n-matches", "50", "--out-dir", str(out)])
        assert res.exit_code == 0, res.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["seed"] == 3        # explicit flag wins
        assert manifest["config"]["n_players"] == 44  # file fills the default

    def test_unknown_config_key_rejected(self, runner, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("banana = 1\n")
        res = runner.invoke(main, ["simulate", "--config", str(cfg)])
        assert res.exit_code == EXIT_CODES[ConfigError]


class TestEstimateCommand:
    def test_end_to_end_outputs(self, runner, tmp_path):
        panel = _simulate(runner, tmp_path / "sim", "--party-prob", "0.4")
        out = tmp_path / "est"
        res = runner.invoke(main, [
            "estimate", "--input", str(panel), "--out-dir", str(out),
            "--outcome", "engagement"])
        assert res.exit_code == 0, res.output
        doc = json.loads((out / "result.json").read_text())
        run = doc["engagement"]
        assert run["units"] == "hours"
        assert set(run) >= {"scheme", "ols", "tsls", "attrition"}
        assert run["tsls"]["first_stage"]  # F diagnostics present
        assert (out / "table_engagement.txt").exists()
        assert (out / "effects.csv").read_text().startswith("context,")
        manifest = json.loads((out / "manifest.json").read_text())
        assert "panel" in manifest["input_digests"]

    def test_both_outcomes_default(self, runner, tmp_path):
        panel = _simulate(runner, tmp_path / "sim")
        out = tmp_path / "both"
        res = runner.invoke(main, ["estimate", "--input", str(panel),
                                   "--out-dir", str(out)])
        assert res.exit_code == 0, res.output
        doc = json.loads((out / "result.json").read_text())
        assert set(doc) == {"engagement", "propagation"}
        assert doc["propagation"]["units"] == "probability"

    def test_party_split_without_parties_errors(self, runner, tmp_path):
        panel = _simulate(runner, tmp_path / "sim")  # party_prob = 0
        res = runner.invoke(main, [
            "estimate", "--input", str(panel), "--scheme", "party-split",
            "--out-dir", str(tmp_path / "ps")])
        assert res.exit_code == EXIT_CODES[ConfigError]
        assert "party" in res.output

    def test_vcov_choice_changes_ses(self, runner, tmp_path):
        panel = _simulate(runner, tmp_path / "sim")
        ses = {}
        for vcov in ("hc1", "cluster-player"):
            out = tmp_path / vcov
            res = runner.invoke(main, [
                "estimate", "--input", str(panel), "--out-dir", str(out),
                "--outcome", "engagement", "--vcov", vcov])
            assert res.exit_code == 0, res.output
            doc = json.loads((out / "result.json").read_text())
            ses[vcov] = doc["engagement"]["tsls"]["se"]
        assert ses["hc1"] != ses["cluster-player"]

    def test_schema_error_exit_code(self, runner, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("match_id,player_id\nm1,p1\n")
        res = runner.invoke(main, ["estimate", "--input", str(bad),
                                   "--out-dir", str(tmp_path / "x")])
        assert res.exit_code == EXIT_CODES[SchemaError]

    def test_validation_error_exit_code(self, runner, tmp_path):
        panel = _simulate(runner, tmp_path / "sim")
        lines = panel.read_text().splitlines()
        # corrupt one result flag so a match has two winning teams
        header = lines[0].split(",")
        ridx = header.index("result")
        first = lines[1].split(",")
        first[ridx] = "win" if first[ridx] != "win" else "loss"
        lines[1] = ",".join(first)
        bad = tmp_path / "corrupt.csv"
        bad.write_text("\n".join(lines) + "\n")
        res = runner.invoke(main, ["estimate", "--input", str(bad),
                                   "--out-dir", str(tmp_path / "x")])
        assert res.exit_code == EXIT_CODES[ValidationError]


class TestDescribeAndReport:
    def test_describe_formats(self, runner, tmp_path):
        panel = _simulate(runner, tmp_path / "sim")
        for fmt in ("text", "csv", "json"):
            res = runner.invoke(main, ["describe", "--input", str(panel),
                                       "--format", fmt])
            assert res.exit_code == 0, res.output
            assert "probability" in res.output

    def test_report_rerenders_saved_results(self, runner, tmp_path):
        panel = _simulate(runner, tmp_path / "sim")
        out = tmp_path / "est"
        assert runner.invoke(main, [
            "estimate", "--input", str(panel), "--out-dir", str(out),
            "--outcome", "engagement"]).exit_code == 0
        res = runner.invoke(main, [
            "report", "--result", str(out / "result.json"),
            "--ranking", "engagement"])
        assert res.exit_code == 0, res.output
        assert "opponents" in res.output
        assert '"rank": 1' in res.output

    def test_help_and_version(self, runner):
        assert runner.invoke(main, ["--help"]).exit_code == 0
        out = runner.invoke(main, ["--version"])
        assert out.exit_code == 0

"""End-to-end command-line flow on a small synthetic corpus."""

from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from depthforge.cli import main
from depthforge.io import (
    read_dataset_records,
    read_manifest,
    read_match_file,
    read_model,
)

CORPUS_COUNT = 24


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One pass through the whole chain; tests assert on its artifacts."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "config.json"
    cfg.write_text(json.dumps({
        "train": {
            "point_hidden": [8, 12],
            "recon_hidden": [4],
            "head_hidden": [8],
            "epochs": 4,
            "pairs_per_epoch": 192,
        }
    }))
    runner = CliRunner()
    corpus = root / "corpus"

    def run(*args):
        result = runner.invoke(main, list(args), catch_exceptions=False)
        assert result.exit_code == 0, result.output
        return result

    run("synth", "--out", str(corpus), "--count", str(CORPUS_COUNT), "--seed", "11")
    run("reconstruct", "--matches", str(corpus), "--out", str(root / "recons.jsonl"),
        "--report", str(root / "recon_report.json"))
    run("cues", "--matches", str(corpus), "--records", str(root / "recons.jsonl"),
        "--out", str(root / "cues.jsonl"))
    run("train-qanet", "--cues", str(root / "cues.jsonl"),
        "--labels", str(corpus / "manifest.json"),
        "--out", str(root / "model.json"), "--log", str(root / "train_log.csv"),
        "--config", str(cfg))
    run("score", "--model", str(root / "model.json"), "--matches", str(corpus),
        "--records", str(root / "recons.jsonl"), "--out", str(root / "scores.csv"))
    run("curve", "--scores", str(root / "scores.csv"),
        "--labels", str(corpus / "manifest.json"), "--out", str(root / "curve.csv"))
    run("choose-threshold", "--scores", str(root / "scores.csv"),
        "--labels", str(corpus / "manifest.json"), "--target", "0.5",
        "--out", str(root / "threshold.json"))
    run("forge", "--matches", str(corpus), "--model", str(root / "model.json"),
        "--out", str(root / "dataset.jsonl"), "--report", str(root / "forge_report.json"),
        "--top-fraction", "0.5", "--pairs-per-image", "20")
    return root


def test_synth_outputs(workdir):
    corpus = workdir / "corpus"
    rows = read_manifest(corpus / "manifest.json")
    assert len(rows) == CORPUS_COUNT
    assert {r["pair_id"] for r in rows} == {f"p{i:06d}" for i in range(CORPUS_COUNT)}
    for row in rows:
        assert set(row) == {"pair_id", "spec_hash", "gt_quality", "reject_reason"}
        assert (row["gt_quality"] is None) or (0.0 <= row["gt_quality"] <= 1.0)
    labeled = [r for r in rows if r["gt_quality"] is not None]
    assert len(labeled) >= CORPUS_COUNT - 4
    pair = read_match_file(corpus / "p000000.txt")
    assert pair.pair_id == "p000000"
    assert (corpus / "p000000.gt.json").exists()


def test_synth_deterministic(workdir, tmp_path):
    runner = CliRunner()
    result = runner.invoke(main, [
        "synth", "--out", str(tmp_path / "again"), "--count", str(CORPUS_COUNT),
        "--seed", "11",
    ], catch_exceptions=False)
    assert result.exit_code == 0
    corpus = workdir / "corpus"
    for name in ("manifest.json", "p000003.txt", "p000007.gt.json"):
        assert (tmp_path / "again" / name).read_bytes() == (corpus / name).read_bytes()


def test_reconstruct_report(workdir):
    rep = json.loads((workdir / "recon_report.json").read_text())
    assert rep["n_input"] == CORPUS_COUNT
    assert rep["n_reconstructed"] + sum(rep["rejections"].values()) == CORPUS_COUNT
    assert rep["n_reconstructed"] >= CORPUS_COUNT - 4


def test_trained_model_file(workdir):
    model = read_model(workdir / "model.json")
    assert model.point_dim == 7
    assert model.recon_dim == 2
    log_lines = (workdir / "train_log.csv").read_text().splitlines()
    assert log_lines[0] == "epoch,loss,val_acc"
    assert len(log_lines) == 5     # header + 4 epochs
    assert (workdir / "train_log.png").exists()


def test_scores_csv(workdir):
    lines = (workdir / "scores.csv").read_text().splitlines()
    assert lines[0] == "pair_id,score"
    rep = json.loads((workdir / "recon_report.json").read_text())
    assert len(lines) - 1 == rep["n_reconstructed"]
    for ln in lines[1:]:
        pid, val = ln.rsplit(",", 1)
        float(val)
    assert (workdir / "scores.png").exists()


def test_curve_outputs(workdir):
    lines = (workdir / "curve.csv").read_text().splitlines()
    assert lines[0] == "n_percent,mean_quality"
    assert len(lines) == 101
    summary = json.loads((workdir / "curve.summary.json").read_text())
    assert 0.0 <= summary["auc"] <= 1.0
    assert summary["n_items"] > 0
    assert (workdir / "curve.png").exists()


def test_threshold_output(workdir):
    obj = json.loads((workdir / "threshold.json").read_text())
    assert obj["target_quality"] == 0.5
    ths = [row["threshold"] for row in obj["table"]]
    assert obj["threshold"] in ths
    assert all(
        set(row) == {"threshold", "retained", "fraction", "mean_quality"}
        for row in obj["table"]
    )
    assert (workdir / "threshold.png").exists()


def test_forge_outputs(workdir):
    records = read_dataset_records(workdir / "dataset.jsonl")
    rep = json.loads((workdir / "forge_report.json").read_text())
    assert rep["n_records"] == len(records)
    assert rep["n_retained"] * 2 == rep["n_records"]
    assert rep["n_pairs_emitted"] == sum(len(r.pairs) for r in records)
    assert all(len(r.pairs) <= 20 for r in records)
    assert (workdir / "forge_report.png").exists()


def test_forge_reruns_byte_identical(workdir, tmp_path):
    runner = CliRunner()
    for k in (1, 2):
        result = runner.invoke(main, [
            "forge", "--matches", str(workdir / "corpus"),
            "--model", str(workdir / "model.json"),
            "--out", str(tmp_path / f"d{k}.jsonl"),
            "--report", str(tmp_path / f"r{k}.json"),
            "--top-fraction", "0.5", "--pairs-per-image", "20",
        ], catch_exceptions=False)
        assert result.exit_code == 0
    assert (tmp_path / "d1.jsonl").read_bytes() == (tmp_path / "d2.jsonl").read_bytes()
    assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()
    assert (tmp_path / "d1.jsonl").read_bytes() == (workdir / "dataset.jsonl").read_bytes()


def test_whdr_command(workdir, tmp_path):
    records = read_dataset_records(workdir / "dataset.jsonl")
    perfect = {r.image_id: [p.closer for p in r.pairs] for r in records}
    pred = tmp_path / "pred.json"
    pred.write_text(json.dumps(perfect))
    runner = CliRunner()
    result = runner.invoke(main, [
        "whdr", "--predictions", str(pred), "--dataset", str(workdir / "dataset.jsonl"),
        "--out", str(tmp_path / "whdr.json"),
    ], catch_exceptions=False)
    assert result.exit_code == 0
    assert "WHDR 0.0" in result.output
    assert json.loads((tmp_path / "whdr.json").read_text()) == {"whdr": 0.0}


def test_ablate_command(workdir, tmp_path):
    out = tmp_path / "ablation.csv"
    result = CliRunner().invoke(main, [
        "ablate",
        "--train-cues", str(workdir / "cues.jsonl"),
        "--train-labels", str(workdir / "corpus" / "manifest.json"),
        "--heldout-cues", str(workdir / "cues.jsonl"),
        "--heldout-labels", str(workdir / "corpus" / "manifest.json"),
        "--out", str(out), "--config", str(workdir / "config.json"),
    ], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    rows = out.read_text().strip().splitlines()
    assert rows[0] == "variant,auc"
    names = [r.split(",")[0] for r in rows[1:]]
    assert names == ["Full", "-Coords2D", "-Sampson", "-Angle", "-Focal",
                     "-RepErr", "Upperbound", "Random"]
    assert all(0.0 <= float(r.split(",")[1]) <= 1.0 for r in rows[1:])
    assert (tmp_path / "ablation.png").exists()


# --- failure paths ----------------------------------------------------------


def test_reconstruct_empty_dir_fails(tmp_path):
    (tmp_path / "empty").mkdir()
    result = CliRunner().invoke(main, [
        "reconstruct", "--matches", str(tmp_path / "empty"),
        "--out", str(tmp_path / "r.jsonl"),
    ])
    assert result.exit_code != 0
    assert "no match files" in result.output


def test_forge_requires_one_retention_policy(workdir, tmp_path):
    runner = CliRunner()
    base = ["forge", "--matches", str(workdir / "corpus"),
            "--model", str(workdir / "model.json"), "--out", str(tmp_path / "d.jsonl")]
    neither = runner.invoke(main, base)
    assert neither.exit_code != 0
    assert "exactly one" in neither.output
    both = runner.invoke(main, base + ["--threshold", "0", "--top-fraction", "0.5"])
    assert both.exit_code != 0
    assert "exactly one" in both.output


def test_unknown_config_key_fails(workdir, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"train": {"learning_rate": 0.1}}))
    result = CliRunner().invoke(main, [
        "train-qanet", "--cues", str(workdir / "cues.jsonl"),
        "--labels", str(workdir / "corpus" / "manifest.json"),
        "--out", str(tmp_path / "m.json"), "--config", str(cfg),
    ])
    assert result.exit_code != 0
    assert "learning_rate" in result.output


def test_unknown_drop_group_fails(workdir, tmp_path):
    result = CliRunner().invoke(main, [
        "train-qanet", "--cues", str(workdir / "cues.jsonl"),
        "--labels", str(workdir / "corpus" / "manifest.json"),
        "--out", str(tmp_path / "m.json"), "--drop", "Bogus",
    ])
    assert result.exit_code != 0
    assert "Bogus" in result.output


def test_whdr_missing_image_fails(workdir, tmp_path):
    pred = tmp_path / "pred.json"
    pred.write_text(json.dumps({}))
    result = CliRunner().invoke(main, [
        "whdr", "--predictions", str(pred), "--dataset", str(workdir / "dataset.jsonl"),
    ])
    assert result.exit_code != 0


def test_mismatched_records_fail_cleanly(workdir, tmp_path):
    other = tmp_path / "other"
    other.mkdir()
    result = CliRunner().invoke(main, [
        "synth", "--out", str(other), "--count", "2", "--seed", "99", "--prefix", "zz",
    ], catch_exceptions=False)
    assert result.exit_code == 0
    result = CliRunner().invoke(main, [
        "cues", "--matches", str(other), "--records", str(workdir / "recons.jsonl"),
        "--out", str(tmp_path / "c.jsonl"),
    ])
    assert result.exit_code != 0
    assert "cannot load" in result.output

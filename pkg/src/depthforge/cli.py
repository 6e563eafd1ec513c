"""Command-line entry points.

Every stage of the dataset-building flow is a subcommand: generate synthetic
corpora, reconstruct match files, extract cues, train and apply the quality
scorer, evaluate rankings, pick retention thresholds, and emit the final
relative-depth dataset.  Commands that write delimited reports also render a
matplotlib figure next to them.

Exit code is nonzero only for batch-level errors; per-item failures are
counted and reported.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from pathlib import Path

import click
import numpy as np

from . import io as dio
from .cues import extract_cues
from .errors import DepthForgeError, RejectedPair
from .evaluation import ScoredItem, ablation_suite, baselines, quality_curve, whdr
from .geometry import SfmConfig, reconstruct_pair
from .pipeline import PipelineConfig, choose_threshold, cues_for_model, run_pipeline
from .plots import (
    save_ablation_figure,
    save_curve_figure,
    save_score_histogram,
    save_training_figure,
)
from .quality_net import TrainConfig, score as model_score, train
from .scenes import generate_scene, gt_quality, sample_recipe

logger = logging.getLogger(__name__)


# --- config plumbing --------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise click.ClickException(f"cannot read config {path}: {e}")
    if not isinstance(cfg, dict):
        raise click.ClickException(f"config {path} must be a JSON object")
    return cfg


def _build_cfg(cls, section: dict, **overrides):
    """Dataclass from defaults <- config section <- explicit flags."""
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, val in section.items():
        if key not in names:
            raise click.ClickException(f"unknown {cls.__name__} key {key!r} in config")
        kwargs[key] = tuple(val) if isinstance(val, list) else val
    for key, val in overrides.items():
        if val is not None:
            kwargs[key] = val
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise click.ClickException(str(e))


def _read_scores(path: Path) -> list[tuple[str, float]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "pair_id,score":
        raise click.ClickException(f"{path}: not a score CSV")
    out = []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        pid, val = ln.rsplit(",", 1)
        out.append((pid, float(val)))
    return out


def _write_scores(path: Path, rows: list[tuple[str, float]]) -> None:
    lines = ["pair_id,score"] + [f"{pid},{val!r}" for pid, val in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _quality_labels(path: Path) -> dict[str, float]:
    labels = {}
    for row in dio.read_manifest(path):
        q = row.get("gt_quality")
        if q is not None:
            labels[row["pair_id"]] = float(q)
    if not labels:
        raise click.ClickException(f"{path}: no labeled pairs in manifest")
    return labels


def _labeled_corpus(cue_path: Path, label_path: Path) -> list:
    labels = _quality_labels(label_path)
    corpus = []
    skipped = 0
    for cv in dio.read_cue_records(cue_path):
        if cv.pair_id in labels:
            corpus.append((cv, labels[cv.pair_id]))
        else:
            skipped += 1
    if skipped:
        click.echo(f"{skipped} cue vectors without a quality label skipped", err=True)
    if not corpus:
        raise click.ClickException("no cue vectors with labels; nothing to train on")
    return corpus


def _sizes_from_matches(matches_dir: Path) -> dict[str, tuple[float, float]]:
    sizes = {}
    for mf in dio.match_files(matches_dir):
        fp = dio.read_match_file(mf)
        sizes[fp.pair_id] = (float(fp.width), float(fp.height))
    if not sizes:
        raise click.ClickException(f"no match files under {matches_dir}")
    return sizes


# --- group ------------------------------------------------------------------


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="log per-item progress")
def main(verbose: bool) -> None:
    """Build relative-depth training data from two-view reconstructions."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


# --- synth ------------------------------------------------------------------


@main.command()
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--count", type=int, default=200, show_default=True)
@click.option("--prefix", default="p", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def synth(out: Path, count: int, prefix: str, seed: int, config_path: str | None) -> None:
    """Generate a synthetic corpus: match files, ground-truth sidecars, and a
    manifest with the realized reconstruction quality per pair."""
    cfg = _load_config(config_path)
    scene_over = cfg.get("scene", {})
    sfm = _build_cfg(SfmConfig, cfg.get("sfm", {}))
    spec_fields = {f.name for f in dataclasses.fields(sample_recipe("x", np.random.default_rng(0)))}
    bad = set(scene_over) - spec_fields
    if bad:
        raise click.ClickException(f"unknown scene keys in config: {sorted(bad)}")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    n_ok = 0
    for i in range(count):
        spec = sample_recipe(f"{prefix}{i:06d}", rng)
        if scene_over:
            over = {k: tuple(v) if isinstance(v, list) else v for k, v in scene_over.items()}
            spec = dataclasses.replace(spec, **over)
        row = {"pair_id": spec.pair_id, "spec_hash": dio.spec_hash(spec),
               "gt_quality": None, "reject_reason": None}
        try:
            pair, gt = generate_scene(spec)
        except DepthForgeError as e:
            row["reject_reason"] = type(e).__name__
            rows.append(row)
            continue
        dio.write_match_file(out / f"{spec.pair_id}.txt", pair)
        dio.write_ground_truth(out / f"{spec.pair_id}.gt.json", gt)
        try:
            recon = reconstruct_pair(pair, sfm)
            row["gt_quality"] = gt_quality(recon, gt)
            n_ok += 1
        except RejectedPair as e:
            row["reject_reason"] = e.reason
        except DepthForgeError as e:
            row["reject_reason"] = type(e).__name__
        rows.append(row)
        if (i + 1) % 200 == 0:
            logger.info("synth: %d/%d pairs", i + 1, count)
    dio.write_manifest(out / "manifest.json", rows)
    click.echo(f"wrote {count} pairs to {out} ({n_ok} with quality labels)")


# --- reconstruct ------------------------------------------------------------


@main.command()
@click.option("--matches", "matches_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--report", "report_path", type=click.Path(path_type=Path), default=None)
@click.option("--seed", type=int, default=None, help="overrides the RANSAC seed")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def reconstruct(matches_dir: Path, out: Path, report_path: Path | None,
                seed: int | None, config_path: str | None) -> None:
    """Reconstruct every match file into a record; rejections are counted,
    not fatal."""
    cfg = _load_config(config_path)
    sfm = _build_cfg(SfmConfig, cfg.get("sfm", {}), seed=seed)
    files = dio.match_files(matches_dir)
    if not files:
        raise click.ClickException(f"no match files under {matches_dir}")
    recons = []
    rejections: dict[str, int] = {}
    for mf in files:
        pair = dio.read_match_file(mf)
        try:
            recons.append(reconstruct_pair(pair, sfm))
        except RejectedPair as e:
            rejections[e.reason] = rejections.get(e.reason, 0) + 1
            logger.info("rejected %s: %s", pair.pair_id, e)
    dio.write_recon_records(out, recons)
    if report_path is not None:
        obj = {"n_input": len(files), "n_reconstructed": len(recons),
               "rejections": {k: rejections[k] for k in sorted(rejections)}}
        report_path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    click.echo(f"reconstructed {len(recons)}/{len(files)} pairs -> {out}")
    if rejections:
        click.echo(f"rejections: {dict(sorted(rejections.items()))}", err=True)


# --- cues -------------------------------------------------------------------


@main.command()
@click.option("--matches", "matches_dir", type=click.Path(exists=True, path_type=Path), required=True,
              help="match directory (for image dimensions)")
@click.option("--records", "records_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--point-reproj/--no-point-reproj", default=True, show_default=True,
              help="include the per-point reprojection cue column")
def cues(matches_dir: Path, records_path: Path, out: Path, point_reproj: bool) -> None:
    """Extract scorer cue vectors from reconstruction records."""
    sizes = _sizes_from_matches(matches_dir)
    try:
        recons = dio.read_recon_records(records_path, sizes)
    except (KeyError, ValueError) as e:
        raise click.ClickException(f"cannot load {records_path}: {e}")
    vectors = []
    failed = 0
    for recon in recons:
        try:
            vectors.append(extract_cues(recon, include_point_reproj=point_reproj))
        except DepthForgeError as e:
            failed += 1
            click.echo(f"cue extraction failed for {recon.pair_id}: {e}", err=True)
    dio.write_cue_records(out, vectors)
    click.echo(f"wrote {len(vectors)} cue vectors -> {out}"
               + (f" ({failed} failed)" if failed else ""))


# --- train-qanet ------------------------------------------------------------


@main.command("train-qanet")
@click.option("--cues", "cue_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--labels", "label_path", type=click.Path(exists=True, path_type=Path), required=True,
              help="corpus manifest with gt_quality per pair")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--log", "log_path", type=click.Path(path_type=Path), default=None)
@click.option("--drop", multiple=True,
              help="cue group to ablate before training (repeatable)")
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def train_qanet(cue_path: Path, label_path: Path, out: Path, log_path: Path | None,
                drop: tuple[str, ...], seed: int | None, config_path: str | None) -> None:
    """Train the reconstruction-quality scorer on a labeled cue corpus."""
    from .cues import ablate_cues

    cfg = _load_config(config_path)
    tcfg = _build_cfg(TrainConfig, cfg.get("train", {}), seed=seed)
    corpus = _labeled_corpus(cue_path, label_path)
    if drop:
        try:
            corpus = [(ablate_cues(cv, set(drop)), q) for cv, q in corpus]
        except (DepthForgeError, ValueError) as e:
            raise click.ClickException(str(e))
    try:
        model, log = train(corpus, tcfg, dropped=tuple(sorted(drop)))
    except DepthForgeError as e:
        raise click.ClickException(f"training failed: {e}")
    dio.write_model(out, model)
    if log_path is not None:
        dio.write_training_log(log_path, log)
        save_training_figure(log_path.with_suffix(".png"), log)
    best = max(acc for _, _, acc in log)
    click.echo(f"trained on {len(corpus)} items, best val accuracy {best:.4f} -> {out}")


# --- score ------------------------------------------------------------------


@main.command("score")
@click.option("--model", "model_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--matches", "matches_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--records", "records_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def score_cmd(model_path: Path, matches_dir: Path, records_path: Path, out: Path) -> None:
    """Score reconstruction records with a trained model (CSV + histogram)."""
    model = dio.read_model(model_path)
    sizes = _sizes_from_matches(matches_dir)
    try:
        recons = dio.read_recon_records(records_path, sizes)
    except (KeyError, ValueError) as e:
        raise click.ClickException(f"cannot load {records_path}: {e}")
    rows = []
    for recon in recons:
        try:
            rows.append((recon.pair_id, model_score(model, cues_for_model(model, recon))))
        except DepthForgeError as e:
            raise click.ClickException(f"{recon.pair_id}: {e}")
    _write_scores(out, rows)
    save_score_histogram(out.with_suffix(".png"), [s for _, s in rows])
    click.echo(f"scored {len(rows)} reconstructions -> {out}")


# --- curve ------------------------------------------------------------------


@main.command()
@click.option("--scores", "score_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--labels", "label_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="seed for the random-ranking baseline")
def curve(score_path: Path, label_path: Path, out: Path, seed: int) -> None:
    """Quality-ranking curve CSV, summary JSON, and figure with baselines."""
    labels = _quality_labels(label_path)
    items = []
    for pid, s in _read_scores(score_path):
        if pid in labels:
            items.append(ScoredItem(item_id=pid, score=s, quality=labels[pid]))
    if not items:
        raise click.ClickException("no scored pairs with quality labels")
    try:
        qc = quality_curve(items)
        upper, rand = baselines(items, seed=seed)
    except DepthForgeError as e:
        raise click.ClickException(str(e))
    dio.write_curve_csv(out, qc)
    dio.write_curve_summary(out.with_suffix(".summary.json"), qc)
    save_curve_figure(out.with_suffix(".png"),
                      {"Scorer": qc, "Upperbound": upper, "Random": rand})
    click.echo(f"AUC {qc.auc:.4f} over {qc.n_items} items "
               f"(upper {upper.auc:.4f}, random {rand.auc:.4f}) -> {out}")


# --- ablate -----------------------------------------------------------------


@main.command()
@click.option("--train-cues", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--train-labels", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--heldout-cues", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--heldout-labels", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def ablate(train_cues: Path, train_labels: Path, heldout_cues: Path,
           heldout_labels: Path, out: Path, seed: int | None,
           config_path: str | None) -> None:
    """Train one scorer per cue ablation and rank a held-out corpus."""
    cfg = _load_config(config_path)
    tcfg = _build_cfg(TrainConfig, cfg.get("train", {}), seed=seed)
    corpus = _labeled_corpus(train_cues, train_labels)
    heldout = _labeled_corpus(heldout_cues, heldout_labels)
    try:
        result = ablation_suite(corpus, heldout, tcfg)
    except DepthForgeError as e:
        raise click.ClickException(f"ablation failed: {e}")
    dio.write_ablation_csv(out, result.rows)
    save_ablation_figure(out.with_suffix(".png"), result.rows)
    for name, auc in result.rows:
        click.echo(f"{name:12s} {auc:.4f}")


# --- choose-threshold -------------------------------------------------------


@main.command("choose-threshold")
@click.option("--scores", "score_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--labels", "label_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--target", type=float, required=True,
              help="minimum mean quality of the retained set")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def choose_threshold_cmd(score_path: Path, label_path: Path, target: float, out: Path) -> None:
    """Smallest score threshold whose retained set reaches a target quality."""
    labels = _quality_labels(label_path)
    scores = _read_scores(score_path)
    items = [ScoredItem(pid, s, labels[pid]) for pid, s in scores if pid in labels]
    if not items:
        raise click.ClickException("no scored pairs with quality labels")
    try:
        theta, rows = choose_threshold(items, target)
    except DepthForgeError as e:
        raise click.ClickException(str(e))
    obj = {
        "target_quality": target,
        "threshold": theta,
        "table": [
            {"threshold": th, "retained": k, "fraction": frac, "mean_quality": mq}
            for th, k, frac, mq in rows
        ],
    }
    out.write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")
    save_score_histogram(out.with_suffix(".png"), [s for _, s in scores], threshold=theta)
    kept = next(k for th, k, _, _ in rows if th == theta)
    click.echo(f"threshold {theta!r} retains {kept}/{len(items)} at target {target} -> {out}")


# --- forge ------------------------------------------------------------------


@main.command()
@click.option("--matches", "matches_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--report", "report_path", type=click.Path(path_type=Path), default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--top-fraction", type=float, default=None)
@click.option("--pairs-per-image", type=int, default=None)
@click.option("--depth-margin", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def forge(matches_dir: Path, model_path: Path, out: Path, report_path: Path | None,
          threshold: float | None, top_fraction: float | None,
          pairs_per_image: int | None, depth_margin: float | None,
          seed: int | None, config_path: str | None) -> None:
    """Reconstruct, score, filter, and emit the relative-depth dataset."""
    cfg = _load_config(config_path)
    sfm = _build_cfg(SfmConfig, cfg.get("sfm", {}))
    section = dict(cfg.get("pipeline", {}))
    pcfg = _build_cfg(
        PipelineConfig, section, sfm=sfm, threshold=threshold,
        top_fraction=top_fraction, pairs_per_image=pairs_per_image,
        depth_margin=depth_margin, seed=seed,
    )
    files = dio.match_files(matches_dir)
    if not files:
        raise click.ClickException(f"no match files under {matches_dir}")
    model = dio.read_model(model_path)
    pairs = (dio.read_match_file(f) for f in files)
    try:
        report = run_pipeline(pairs, model, pcfg, out, report_path)
    except DepthForgeError as e:
        raise click.ClickException(f"pipeline aborted: {e}")
    if report_path is not None and report.scores:
        save_score_histogram(report_path.with_suffix(".png"),
                             [s for _, s in report.scores], threshold=pcfg.threshold)
    click.echo(
        f"{report.n_input} pairs in, {report.n_reconstructed} reconstructed, "
        f"{report.n_retained} retained, {report.n_records} records, "
        f"{report.n_pairs_emitted} depth pairs -> {out}"
    )
    if report.rejections:
        click.echo(f"rejections: {dict(sorted(report.rejections.items()))}", err=True)


# --- whdr -------------------------------------------------------------------


@main.command("whdr")
@click.option("--predictions", "pred_path", type=click.Path(exists=True, path_type=Path), required=True,
              help="JSON mapping image_id to per-pair closer-side predictions")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
def whdr_cmd(pred_path: Path, dataset_path: Path, out: Path | None) -> None:
    """Disagreement rate of depth-order predictions against a dataset."""
    try:
        preds = json.loads(pred_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise click.ClickException(f"bad predictions file: {e}")
    records = dio.read_dataset_records(dataset_path)
    try:
        value = whdr(preds, records)
    except DepthForgeError as e:
        raise click.ClickException(str(e))
    if out is not None:
        out.write_text(json.dumps({"whdr": value}, indent=1) + "\n", encoding="utf-8")
    click.echo(f"WHDR {value!r}")


if __name__ == "__main__":
    main()

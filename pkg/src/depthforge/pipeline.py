"""Filtered relative-depth dataset construction.

Reconstruct every frame pair, score it with a trained quality model, keep the
reconstructions above a score threshold (or the top fraction), and emit two
relative-depth training records per retained reconstruction, one per view.
The run is deterministic: same inputs, model, and config give byte-identical
dataset files and reports.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cues import CueVector, ablate_cues, extract_cues
from .errors import (
    DepthForgeError,
    EmptyCorpus,
    ModelArchMismatch,
    RejectedPair,
    TargetUnreachable,
)
from .evaluation import ScoredItem
from .geometry import FramePair, Reconstruction, SfmConfig, reconstruct_pair
from .quality_net import QualityModel, score
from .scenes import generate_scene, gt_quality, sample_recipe

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DepthPair:
    """One ordered point pair inside a single image; ``closer`` names the
    nearer point ('a' or 'b')."""

    xa: float
    ya: float
    xb: float
    yb: float
    closer: str


@dataclass
class DatasetRecord:
    """Relative-depth supervision for one image (one view of one pair)."""

    image_id: str
    pairs: list[DepthPair]


@dataclass(frozen=True)
class PipelineConfig:
    """Retention policy and emission parameters.

    Exactly one of ``threshold`` (absolute score cut) and ``top_fraction``
    (keep the best fraction after a full scoring pass) must be set.
    """

    sfm: SfmConfig = field(default_factory=SfmConfig)
    threshold: float | None = None
    top_fraction: float | None = None
    pairs_per_image: int = 281
    depth_margin: float = 1.03       # min view depth ratio for an emitted pair
    seed: int = 0

    def __post_init__(self) -> None:
        if (self.threshold is None) == (self.top_fraction is None):
            raise ValueError("set exactly one of threshold and top_fraction")
        if self.top_fraction is not None and not (0.0 < self.top_fraction <= 1.0):
            raise ValueError(f"top_fraction {self.top_fraction} outside (0, 1]")


@dataclass
class PipelineReport:
    n_input: int = 0
    n_reconstructed: int = 0
    n_retained: int = 0
    n_records: int = 0
    n_pairs_emitted: int = 0
    rejections: dict[str, int] = field(default_factory=dict)
    threshold: float | None = None
    top_fraction: float | None = None
    score_min: float | None = None
    score_max: float | None = None
    score_mean: float | None = None
    scores: list[tuple[str, float]] = field(default_factory=list)  # not serialized

    def as_dict(self) -> dict:
        return {
            "n_input": self.n_input,
            "n_reconstructed": self.n_reconstructed,
            "n_retained": self.n_retained,
            "n_records": self.n_records,
            "n_pairs_emitted": self.n_pairs_emitted,
            "rejections": {k: self.rejections[k] for k in sorted(self.rejections)},
            "threshold": self.threshold,
            "top_fraction": self.top_fraction,
            "score_min": self.score_min,
            "score_max": self.score_max,
            "score_mean": self.score_mean,
        }


def _derived_seed(seed: int, pair_id: str, view: str) -> int:
    digest = hashlib.sha256(f"{seed}|{pair_id}|{view}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def sample_pairs(
    recon: Reconstruction,
    view: str,
    k: int,
    margin: float = 1.03,
    seed: int = 0,
) -> list[DepthPair]:
    """Up to ``k`` ordered point pairs from one view of a reconstruction.

    Eligible pairs have a depth ratio of at least ``margin`` in the chosen
    view; when more than ``k`` exist, a uniform sample without replacement is
    drawn with a seed derived from (seed, pair id, view), so reruns emit
    identical pairs.  Pairs are returned in point-index order.
    """
    if view not in ("a", "b"):
        raise ValueError(f"view must be 'a' or 'b', got {view!r}")
    pts = recon.points
    n = len(pts)
    if n < 2 or k < 1:
        return []
    if view == "a":
        d = np.array([p.depth_a for p in pts])
        xs = np.array([p.x1 for p in pts])
        ys = np.array([p.y1 for p in pts])
    else:
        d = np.array([p.depth_b for p in pts])
        xs = np.array([p.x2 for p in pts])
        ys = np.array([p.y2 for p in pts])
    i, j = np.triu_indices(n, 1)
    ratio = np.maximum(d[i], d[j]) / np.minimum(d[i], d[j])
    elig = np.flatnonzero(ratio >= margin)
    if len(elig) == 0:
        return []
    if len(elig) > k:
        rng = np.random.default_rng(_derived_seed(seed, recon.pair_id, view))
        elig = np.sort(elig[rng.choice(len(elig), k, replace=False)])
    out = []
    for e in elig:
        a, b = int(i[e]), int(j[e])
        out.append(
            DepthPair(
                xa=float(xs[a]),
                ya=float(ys[a]),
                xb=float(xs[b]),
                yb=float(ys[b]),
                closer="a" if d[a] < d[b] else "b",
            )
        )
    return out


def records_for(recon: Reconstruction, cfg: PipelineConfig) -> list[DatasetRecord]:
    """The two per-view records of one retained reconstruction."""
    return [
        DatasetRecord(
            image_id=f"{recon.pair_id}/{view}",
            pairs=sample_pairs(
                recon, view, cfg.pairs_per_image, cfg.depth_margin, cfg.seed
            ),
        )
        for view in ("a", "b")
    ]


def cues_for_model(model: QualityModel, recon: Reconstruction) -> CueVector:
    """Cue vector shaped for a trained model's input layout.

    Honors the model's ablation mask and the strict variant trained without
    the per-point reprojection column.
    """
    include_pr = "reproj" in model.point_fields or "RepErr" in model.dropped
    cv = extract_cues(recon, include_point_reproj=include_pr)
    if model.dropped:
        cv = ablate_cues(cv, set(model.dropped))
    if cv.point_cues.shape[1] != model.point_dim or len(cv.recon_cues) != model.recon_dim:
        raise ModelArchMismatch(
            f"model expects ({model.point_dim}, {model.recon_dim}) cue widths, "
            f"got ({cv.point_cues.shape[1]}, {len(cv.recon_cues)})"
        )
    return cv


def run_pipeline(
    pairs: Iterable[FramePair],
    model: QualityModel,
    cfg: PipelineConfig,
    dataset_path: Path | str,
    report_path: Path | str | None = None,
) -> PipelineReport:
    """Score every frame pair and emit records for the retained ones.

    Per-pair failures are counted by reason, never fatal; genuine batch-level
    problems (a model that cannot score these cues at all) raise.  Records are
    written in input order by a single writer.
    """
    from .io import write_dataset_records  # local import to avoid a cycle

    report = PipelineReport(threshold=cfg.threshold, top_fraction=cfg.top_fraction)
    scored: list[tuple[str, Reconstruction, float]] = []
    for pair in pairs:
        report.n_input += 1
        try:
            recon = reconstruct_pair(pair, cfg.sfm)
        except RejectedPair as e:
            report.rejections[e.reason] = report.rejections.get(e.reason, 0) + 1
            logger.debug("rejected %s: %s", pair.pair_id, e)
            continue
        report.n_reconstructed += 1
        cv = cues_for_model(model, recon)
        scored.append((pair.pair_id, recon, score(model, cv)))

    if scored:
        vals = np.array([s for _, _, s in scored])
        report.score_min = float(vals.min())
        report.score_max = float(vals.max())
        report.score_mean = float(vals.mean())
        report.scores = [(pid, s) for pid, _, s in scored]

    if cfg.threshold is not None:
        retained_ids = {pid for pid, _, s in scored if s >= cfg.threshold}
        dropped = len(scored) - len(retained_ids)
        if dropped:
            report.rejections["below_threshold"] = dropped
    else:
        order = sorted(scored, key=lambda t: (-t[2], t[0]))
        n_keep = int(np.ceil(cfg.top_fraction * len(scored))) if scored else 0
        retained_ids = {pid for pid, _, _ in order[:n_keep]}
        dropped = len(scored) - len(retained_ids)
        if dropped:
            report.rejections["below_threshold"] = dropped

    records: list[DatasetRecord] = []
    for pid, recon, _ in scored:
        if pid not in retained_ids:
            continue
        report.n_retained += 1
        for rec in records_for(recon, cfg):
            records.append(rec)
            report.n_records += 1
            report.n_pairs_emitted += len(rec.pairs)

    write_dataset_records(dataset_path, records)
    if report_path is not None:
        Path(report_path).write_text(
            json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8"
        )
    return report


# --- threshold selection ----------------------------------------------------


def choose_threshold(
    items: Sequence[ScoredItem], target_quality: float
) -> tuple[float, list[tuple[float, int, float, float]]]:
    """Smallest score cut whose retained set has mean quality >= target.

    Returns the threshold and the retention trade-off table as rows of
    (threshold, retained count, retained fraction, mean quality), one row per
    distinct score cut.

    Raises:
        TargetUnreachable: even the single best item falls short.
        EmptyCorpus: no items.
    """
    if not items:
        raise EmptyCorpus("no scored items")
    order = sorted(items, key=lambda it: (-it.score, it.item_id))
    quals = np.array([it.quality for it in order])
    scores = np.array([it.score for it in order])
    means = np.cumsum(quals) / np.arange(1, len(order) + 1)
    n = len(order)
    rows: list[tuple[float, int, float, float]] = []
    for k in range(1, n + 1):
        # A cut between tied scores is not realizable by score >= theta.
        if k < n and scores[k] == scores[k - 1]:
            continue
        rows.append((float(scores[k - 1]), k, k / n, float(means[k - 1])))
    for theta, k, frac, mean in reversed(rows):
        if mean >= target_quality:
            return theta, rows
    raise TargetUnreachable(
        f"no threshold reaches mean quality {target_quality} "
        f"(best prefix mean {means.max():.4f})"
    )


# --- labeled synthetic corpora ----------------------------------------------


@dataclass
class CorpusItem:
    spec_seed: int
    cues: CueVector
    quality: float


def build_labeled_corpus(
    count: int,
    seed: int,
    sfm: SfmConfig | None = None,
    quality_margin: float = 1.02,
    prefix: str = "p",
    max_attempt_factor: int = 4,
) -> list[tuple[CueVector, float]]:
    """Generate recipe scenes until ``count`` reconstruct successfully.

    Each item is (full cue vector, ground-truth ordering quality).  Scenes
    that are rejected by the reconstruction policy or have no rankable depth
    pair are skipped and replaced by further draws.
    """
    sfm = sfm or SfmConfig()
    rng = np.random.default_rng(seed)
    items: list[tuple[CueVector, float]] = []
    attempts = 0
    limit = max_attempt_factor * count
    while len(items) < count and attempts < limit:
        spec = sample_recipe(f"{prefix}{attempts:06d}", rng)
        attempts += 1
        try:
            pair, gt = generate_scene(spec)
            recon = reconstruct_pair(pair, sfm)
            q = gt_quality(recon, gt, quality_margin)
            items.append((extract_cues(recon), q))
        except (DepthForgeError,) as e:
            logger.debug("corpus skip %s: %s", spec.pair_id, e)
            continue
        if len(items) % 250 == 0:
            logger.info("labeled corpus: %d/%d items", len(items), count)
    if len(items) < count:
        raise EmptyCorpus(
            f"only {len(items)}/{count} scenes reconstructed in {limit} attempts"
        )
    return items

"""Ranking evaluation: quality curves, baselines, ablations, disagreement rate.

The central diagnostic is the quality-ranking curve: order reconstructions by
predicted score, then for each n in 1..100 take the mean ground-truth quality
of the top n percent.  A scorer is useful exactly when its curve sits well
above the random-order baseline and close to the quality-sorted upper bound.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, TYPE_CHECKING

import numpy as np

from .cues import ALL_CUES, CueVector, ablate_cues
from .errors import EmptyCorpus, MissingPrediction
from .quality_net import QualityModel, TrainConfig, score, train

if TYPE_CHECKING:  # pragma: no cover
    from .pipeline import DatasetRecord

logger = logging.getLogger(__name__)


@dataclass
class ScoredItem:
    item_id: str
    score: float
    quality: float


@dataclass
class QualityCurve:
    percent: np.ndarray       # 1..100
    mean_quality: np.ndarray  # (100,)
    auc: float
    n_items: int


def _curve_from_order(qualities: np.ndarray) -> QualityCurve:
    n = len(qualities)
    if n == 0:
        raise EmptyCorpus("cannot build a curve from zero items")
    prefix = np.cumsum(qualities)
    pct = np.arange(1, 101)
    k = -(-pct * n // 100)                      # ceil(pct * n / 100), always >= 1
    vals = prefix[k - 1] / k
    return QualityCurve(percent=pct, mean_quality=vals, auc=float(vals.mean()), n_items=n)


def quality_curve(items: Sequence[ScoredItem]) -> QualityCurve:
    """Curve for the predicted-score ordering (descending; ties by ascending id)."""
    order = sorted(range(len(items)), key=lambda i: (-items[i].score, items[i].item_id))
    return _curve_from_order(np.array([items[i].quality for i in order]))


def upperbound_curve(items: Sequence[ScoredItem]) -> QualityCurve:
    """Curve of the oracle ordering by true quality; no scorer can beat it."""
    order = sorted(range(len(items)), key=lambda i: (-items[i].quality, items[i].item_id))
    return _curve_from_order(np.array([items[i].quality for i in order]))


def random_curve(
    items: Sequence[ScoredItem], n_shuffles: int = 20, seed: int = 0
) -> QualityCurve:
    """Mean curve over seeded random orderings."""
    if not items:
        raise EmptyCorpus("cannot build a curve from zero items")
    quals = np.array([it.quality for it in items])
    acc = np.zeros(100)
    for s in range(n_shuffles):
        rng = np.random.default_rng(seed + s)
        acc += _curve_from_order(quals[rng.permutation(len(quals))]).mean_quality
    vals = acc / n_shuffles
    return QualityCurve(
        percent=np.arange(1, 101),
        mean_quality=vals,
        auc=float(vals.mean()),
        n_items=len(items),
    )


def baselines(
    items: Sequence[ScoredItem], n_shuffles: int = 20, seed: int = 0
) -> tuple[QualityCurve, QualityCurve]:
    """(upper bound, random) reference curves for a corpus."""
    return upperbound_curve(items), random_curve(items, n_shuffles, seed)


# --- ablation suite ---------------------------------------------------------

ABLATION_VARIANTS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("Full", ()),
    ("-Coords2D", ("Coords2D",)),
    ("-Sampson", ("Sampson",)),
    ("-Angle", ("Angle",)),
    ("-Focal", ("Focal",)),
    ("-RepErr", ("RepErr",)),
)


@dataclass
class AblationResult:
    rows: list[tuple[str, float]]             # (variant name, auc) incl. baselines
    curves: dict[str, QualityCurve]
    models: dict[str, QualityModel]


def ablation_suite(
    train_corpus: list[tuple[CueVector, float]],
    heldout: list[tuple[CueVector, float]],
    cfg: TrainConfig | None = None,
    variants: Sequence[tuple[str, tuple[str, ...]]] = ABLATION_VARIANTS,
) -> AblationResult:
    """Train one scorer per cue-ablation variant and rank the held-out corpus.

    Every variant shares the same training config and seed; only the cue
    columns differ.  Baseline rows ``Upperbound`` and ``Random`` are appended.
    """
    cfg = cfg or TrainConfig()
    if not train_corpus or not heldout:
        raise EmptyCorpus("ablation suite needs both corpora")
    rows: list[tuple[str, float]] = []
    curves: dict[str, QualityCurve] = {}
    models: dict[str, QualityModel] = {}
    for name, drop in variants:
        tr = [(ablate_cues(cv, drop), q) for cv, q in train_corpus] if drop else train_corpus
        ho = [(ablate_cues(cv, drop), q) for cv, q in heldout] if drop else heldout
        logger.info("training ablation variant %s", name)
        model, _ = train(tr, cfg, dropped=drop)
        items = [ScoredItem(cv.pair_id, score(model, cv), q) for cv, q in ho]
        curve = quality_curve(items)
        rows.append((name, curve.auc))
        curves[name] = curve
        models[name] = model

    ref = [ScoredItem(cv.pair_id, 0.0, q) for cv, q in heldout]
    upper, rand = baselines(ref)
    rows.append(("Upperbound", upper.auc))
    rows.append(("Random", rand.auc))
    curves["Upperbound"] = upper
    curves["Random"] = rand
    return AblationResult(rows=rows, curves=curves, models=models)


# --- depth-order disagreement rate ------------------------------------------


def whdr(
    predictions: Mapping[str, Sequence[str]],
    annotations: Iterable["DatasetRecord"],
) -> float:
    """Fraction of annotated point pairs whose predicted ordering is wrong.

    ``predictions`` maps image id to per-pair closer-side decisions aligned
    with each record's pair list.  All pairs weigh equally, and with no
    predicted ties this equals one minus the ordering accuracy.

    Raises:
        MissingPrediction: an annotated pair has no aligned prediction.
        EmptyCorpus: no annotated pairs at all.
    """
    total = 0
    wrong = 0
    for rec in annotations:
        try:
            preds = predictions[rec.image_id]
        except KeyError as e:
            raise MissingPrediction(f"no predictions for image {rec.image_id}") from e
        if len(preds) < len(rec.pairs):
            raise MissingPrediction(
                f"image {rec.image_id}: {len(preds)} predictions for {len(rec.pairs)} pairs"
            )
        for k, pair in enumerate(rec.pairs):
            total += 1
            if preds[k] != pair.closer:
                wrong += 1
    if total == 0:
        raise EmptyCorpus("no annotated pairs")
    return wrong / total

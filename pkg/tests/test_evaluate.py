"""Ranking curves, baselines, the ablation suite, and the disagreement rate."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthforge.errors import EmptyCorpus, MissingPrediction
from depthforge.evaluation import (
    ABLATION_VARIANTS,
    ScoredItem,
    ablation_suite,
    baselines,
    quality_curve,
    random_curve,
    upperbound_curve,
    whdr,
)
from depthforge.pipeline import DatasetRecord, DepthPair


def _items(quals, scores=None):
    scores = scores if scores is not None else list(range(len(quals), 0, -1))
    return [ScoredItem(f"i{k:03d}", float(s), float(q))
            for k, (s, q) in enumerate(zip(scores, quals))]


# --- curves -----------------------------------------------------------------


def test_three_item_curve_hand_oracle():
    # quals 1.0/0.4/0.1 in score order; prefix sizes ceil(n*pct/100):
    # pct 1-33 -> 1 item, 34-66 -> 2, 67-100 -> 3
    c = quality_curve(_items([1.0, 0.4, 0.1]))
    assert np.all(c.mean_quality[:33] == 1.0)
    assert np.allclose(c.mean_quality[33:66], 0.7)
    assert np.allclose(c.mean_quality[66:], 0.5)
    assert c.auc == pytest.approx((33 * 1.0 + 33 * 0.7 + 34 * 0.5) / 100)
    assert c.n_items == 3


def test_two_block_upperbound_closed_form():
    # 50 perfect + 50 worthless items: top-k mean is 1 until k=50, then 50/k
    items = _items([1.0] * 50 + [0.0] * 50)
    up = upperbound_curve(items)
    expected = (50 + sum(50.0 / k for k in range(51, 101))) / 100.0
    assert up.auc == pytest.approx(expected, abs=1e-12)


def test_quality_curve_equals_upperbound_when_scores_sorted():
    items = _items([0.9, 0.8, 0.5, 0.3, 0.1])
    assert np.array_equal(
        quality_curve(items).mean_quality, upperbound_curve(items).mean_quality
    )


def test_constant_quality_curve_flat():
    c = quality_curve(_items([0.7] * 40))
    assert np.allclose(c.mean_quality, 0.7)
    assert c.auc == pytest.approx(0.7)


def test_score_ties_break_by_item_id():
    # both items score 1.0; i000 (quality 0.2) must rank first
    items = [ScoredItem("i001", 1.0, 0.9), ScoredItem("i000", 1.0, 0.2)]
    c = quality_curve(items)
    assert c.mean_quality[0] == 0.2


def test_random_curve_seeded():
    items = _items(list(np.linspace(0, 1, 60)))
    a = random_curve(items, n_shuffles=10, seed=3)
    b = random_curve(items, n_shuffles=10, seed=3)
    assert np.array_equal(a.mean_quality, b.mean_quality)
    mean_q = np.mean([it.quality for it in items])
    assert a.auc == pytest.approx(mean_q, abs=0.05)


def test_baselines_bracket_scorer():
    rng = np.random.default_rng(0)
    quals = rng.uniform(0, 1, 200)
    scores = quals + 0.3 * rng.standard_normal(200)   # informative, imperfect
    items = _items(quals, scores)
    up, rand = baselines(items, seed=0)
    mid = quality_curve(items)
    assert rand.auc - 0.02 <= mid.auc <= up.auc + 1e-12


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        quality_curve([])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=50))
def test_curve_bounds_and_endpoint(quals):
    c = quality_curve(_items(quals))
    assert np.all(c.mean_quality >= min(quals) - 1e-12)
    assert np.all(c.mean_quality <= max(quals) + 1e-12)
    # the 100% point is the corpus mean
    assert c.mean_quality[-1] == pytest.approx(float(np.mean(quals)))


# --- ablation suite ---------------------------------------------------------


def test_ablation_variant_names():
    assert [name for name, _ in ABLATION_VARIANTS] == [
        "Full", "-Coords2D", "-Sampson", "-Angle", "-Focal", "-RepErr",
    ]


def test_ablation_suite_structure():
    from depthforge.cues import CueVector
    from depthforge.quality_net import TrainConfig

    rng = np.random.default_rng(1)
    corpus = []
    for i in range(40):
        o = float(rng.uniform(-1.5, 1.5))
        cv = CueVector(
            pair_id=f"i{i:03d}",
            recon_cues=rng.standard_normal(2),
            point_cues=rng.standard_normal((12, 7)) + o,
            point_fields=("x1", "y1", "x2", "y2", "sampson", "angle", "reproj"),
            recon_fields=("focal", "mean_reproj"),
        )
        corpus.append((cv, 1.0 / (1.0 + np.exp(-o))))
    cfg = TrainConfig(point_hidden=(6,), recon_hidden=(3,), head_hidden=(6,),
                      epochs=2, pairs_per_epoch=64, seed=0)
    result = ablation_suite(corpus[:30], corpus[30:], cfg,
                            variants=(("Full", ()), ("-Angle", ("Angle",))))
    names = [n for n, _ in result.rows]
    assert names == ["Full", "-Angle", "Upperbound", "Random"]
    assert set(result.curves) == {"Full", "-Angle", "Upperbound", "Random"}
    assert result.models["-Angle"].dropped == ("Angle",)
    assert all(0.0 <= auc <= 1.0 for _, auc in result.rows)


# --- disagreement rate ------------------------------------------------------


def _records():
    return [
        DatasetRecord("a/0", [DepthPair(0, 0, 1, 1, "a"), DepthPair(1, 1, 2, 2, "b")]),
        DatasetRecord("b/0", [DepthPair(0, 0, 3, 3, "a")]),
    ]


def test_whdr_identities():
    recs = _records()
    perfect = {"a/0": ["a", "b"], "b/0": ["a"]}
    inverted = {"a/0": ["b", "a"], "b/0": ["b"]}
    assert whdr(perfect, recs) == 0.0
    assert whdr(inverted, recs) == 1.0


def test_whdr_partial_disagreement():
    assert whdr({"a/0": ["a", "a"], "b/0": ["a"]}, _records()) == pytest.approx(1 / 3)


def test_whdr_missing_image():
    with pytest.raises(MissingPrediction):
        whdr({"a/0": ["a", "b"]}, _records())


def test_whdr_short_prediction_list():
    with pytest.raises(MissingPrediction):
        whdr({"a/0": ["a"], "b/0": ["a"]}, _records())


def test_whdr_empty():
    with pytest.raises(EmptyCorpus):
        whdr({}, [])
    with pytest.raises(EmptyCorpus):
        whdr({"a/0": []}, [DatasetRecord("a/0", [])])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(["a", "b"]), min_size=1, max_size=60),
       st.integers(0, 2**16))
def test_whdr_flip_complement(closers, seed):
    recs = [DatasetRecord("img", [DepthPair(0, 0, 1, 1, c) for c in closers])]
    rng = np.random.default_rng(seed)
    preds = [str(rng.choice(["a", "b"])) for _ in closers]
    flipped = ["b" if p == "a" else "a" for p in preds]
    assert whdr({"img": preds}, recs) + whdr({"img": flipped}, recs) == pytest.approx(1.0)

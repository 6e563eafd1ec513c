"""Shared fixtures.

The labeled corpora used by the end-to-end ranking and ablation gates are
expensive (thousands of reconstructions), so they are built once per session
and shared.  Generation wall time is recorded because the end-to-end gate's
runtime budget includes it.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from depthforge.geometry import SfmConfig, reconstruct_pair
from depthforge.pipeline import build_labeled_corpus
from depthforge.quality_net import TrainConfig
from depthforge.scenes import SceneSpec, generate_scene

# One scorer config for the end-to-end and ablation gates: identical seeds and
# schedule across every variant so AUC differences come from the cues alone.
GATE_TRAIN_CFG = TrainConfig(epochs=24, pairs_per_epoch=4096, seed=0)

GATE_TRAIN_N = 1500
GATE_HELDOUT_N = 2000


@pytest.fixture(scope="session")
def clean_scene():
    """Noiseless 200-point scene plus its ground truth."""
    spec = SceneSpec(pair_id="clean0", n_points=200, rot_deg=6.0, seed=7)
    return generate_scene(spec)


@pytest.fixture(scope="session")
def clean_recon(clean_scene):
    pair, _ = clean_scene
    return reconstruct_pair(pair, SfmConfig())


@pytest.fixture(scope="session")
def noisy_scene():
    spec = SceneSpec(
        pair_id="noisy0", n_points=220, rot_deg=7.0, noise_px=0.8,
        depth_range=(3.0, 14.0), seed=19,
    )
    return generate_scene(spec)


@pytest.fixture(scope="session")
def noisy_recon(noisy_scene):
    pair, _ = noisy_scene
    return reconstruct_pair(pair, SfmConfig())


@pytest.fixture(scope="session")
def gate_corpora():
    """Labeled train/held-out corpora for the ranking gates.

    Returns a dict with the two corpora and the generation wall time in
    seconds; disjoint seed streams keep the held-out set genuinely unseen.
    """
    t0 = time.time()
    train_corpus = build_labeled_corpus(GATE_TRAIN_N, seed=1000, prefix="tr")
    heldout = build_labeled_corpus(GATE_HELDOUT_N, seed=2000, prefix="ho")
    gen_seconds = time.time() - t0
    quals = np.array([q for _, q in heldout])
    return {
        "train": train_corpus,
        "heldout": heldout,
        "gen_seconds": gen_seconds,
        "heldout_mean_quality": float(quals.mean()),
    }

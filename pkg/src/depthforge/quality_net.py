"""Learned reconstruction-quality scorer, trained on ranked pairs.

The network is permutation invariant over matches: a shared per-point branch
feeds a coordinate-wise max pool, whose output is concatenated with a small
reconstruction-wise branch and pushed through a dense head to one scalar.
Bigger scores mean better expected quality.

Gradients are derived by hand (the max pool routes each coordinate's gradient
to its argmax row, ties to the lowest row index) and checked against central
finite differences in the test suite, so keep forward and backward in exact
correspondence when editing.  Everything runs in float64.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .cues import CueVector
from .errors import (
    DimMismatch,
    EmptyCorpus,
    EmptyCues,
    NoEligiblePairs,
    NonFiniteGradient,
    TiedGroundTruth,
)


@dataclass
class Layer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)


@dataclass
class QualityModel:
    """Scorer parameters plus the cue layout they were built for."""

    point_layers: list[Layer]
    recon_layers: list[Layer]   # empty when the recon branch is disabled
    head_layers: list[Layer]
    point_fields: tuple[str, ...]
    recon_fields: tuple[str, ...]
    dropped: tuple[str, ...] = ()

    @property
    def point_dim(self) -> int:
        return self.point_layers[0].W.shape[1]

    @property
    def recon_dim(self) -> int:
        return self.recon_layers[0].W.shape[1] if self.recon_layers else 0


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 40
    pairs_per_epoch: int = 4096
    delta_pair: float = 0.05        # minimum quality gap for a training pair
    val_fraction: float = 0.15
    point_hidden: tuple[int, ...] = (32, 64, 128)
    recon_hidden: tuple[int, ...] = (16, 32)
    head_hidden: tuple[int, ...] = (64, 32)
    seed: int = 0


@dataclass(frozen=True)
class TrainPair:
    cue_a: CueVector
    cue_b: CueVector
    quality_a: float
    quality_b: float


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> Layer:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return Layer(W=rng.uniform(-a, a, (fan_out, fan_in)), b=np.zeros(fan_out))


def init_model(
    point_dim: int,
    recon_dim: int,
    cfg: TrainConfig,
    rng: np.random.Generator,
    point_fields: tuple[str, ...] = (),
    recon_fields: tuple[str, ...] = (),
    dropped: tuple[str, ...] = (),
) -> QualityModel:
    """Fresh model with uniform Glorot weights and zero biases.

    Layers are initialized in a fixed order (point branch, recon branch,
    head), so one rng seed pins every parameter.
    """
    if point_dim < 1:
        raise DimMismatch("point branch needs at least one input cue")
    point_layers = []
    prev = point_dim
    for h in cfg.point_hidden:
        point_layers.append(_glorot(rng, h, prev))
        prev = h
    recon_layers = []
    if recon_dim > 0:
        prev_r = recon_dim
        for h in cfg.recon_hidden:
            recon_layers.append(_glorot(rng, h, prev_r))
            prev_r = h
        head_in = cfg.point_hidden[-1] + cfg.recon_hidden[-1]
    else:
        head_in = cfg.point_hidden[-1]
    head_layers = []
    prev = head_in
    for h in cfg.head_hidden:
        head_layers.append(_glorot(rng, h, prev))
        prev = h
    head_layers.append(_glorot(rng, 1, prev))
    return QualityModel(
        point_layers=point_layers,
        recon_layers=recon_layers,
        head_layers=head_layers,
        point_fields=tuple(point_fields),
        recon_fields=tuple(recon_fields),
        dropped=tuple(dropped),
    )


def _check_dims(model: QualityModel, cv: CueVector) -> None:
    if cv.point_cues.ndim != 2 or cv.point_cues.shape[1] != model.point_dim:
        raise DimMismatch(
            f"{cv.pair_id}: point cues have width {cv.point_cues.shape[-1]}, "
            f"model expects {model.point_dim}"
        )
    if len(cv.recon_cues) != model.recon_dim:
        raise DimMismatch(
            f"{cv.pair_id}: recon cues have width {len(cv.recon_cues)}, "
            f"model expects {model.recon_dim}"
        )


@dataclass
class _Tape:
    """Forward activations needed by the backward pass."""

    point_inputs: list[np.ndarray]
    point_pres: list[np.ndarray]
    pool_argmax: np.ndarray
    recon_inputs: list[np.ndarray]
    recon_pres: list[np.ndarray]
    head_inputs: list[np.ndarray]
    head_pres: list[np.ndarray]


def _forward(model: QualityModel, cv: CueVector) -> tuple[float, _Tape]:
    _check_dims(model, cv)
    if cv.point_cues.shape[0] == 0:
        raise EmptyCues(f"{cv.pair_id}: cannot score an empty point set")

    H = cv.point_cues
    p_in, p_pre = [], []
    for layer in model.point_layers:
        p_in.append(H)
        pre = H @ layer.W.T + layer.b
        p_pre.append(pre)
        H = np.maximum(pre, 0.0)
    pooled = H.max(axis=0)
    argmax = H.argmax(axis=0)           # first occurrence: ties to lowest row

    r = cv.recon_cues
    r_in, r_pre = [], []
    for layer in model.recon_layers:
        r_in.append(r)
        pre = layer.W @ r + layer.b
        r_pre.append(pre)
        r = np.maximum(pre, 0.0)

    z = np.concatenate([pooled, r]) if model.recon_layers else pooled
    h_in, h_pre = [], []
    last = len(model.head_layers) - 1
    for li, layer in enumerate(model.head_layers):
        h_in.append(z)
        pre = layer.W @ z + layer.b
        h_pre.append(pre)
        z = pre if li == last else np.maximum(pre, 0.0)

    tape = _Tape(p_in, p_pre, argmax, r_in, r_pre, h_in, h_pre)
    return float(z[0]), tape


def score(model: QualityModel, cv: CueVector) -> float:
    """Scalar quality score; higher should mean better reconstruction.

    Pure function of (model, cues) and invariant to the row order of the
    point cues.

    Raises:
        DimMismatch: cue widths do not fit the model.
        EmptyCues: no point rows.
    """
    return _forward(model, cv)[0]


# --- ranking loss -----------------------------------------------------------


def _softplus(z: float) -> float:
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def _sigmoid(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def ranking_loss(p1: float, p2: float, s1: float, s2: float) -> float:
    """Pairwise ranking loss: log(1 + exp(loser_score - winner_score)).

    The item with the larger ground-truth quality (``s``) is the winner; the
    overflow-safe softplus form is used, so scores of any magnitude are fine.

    Raises:
        TiedGroundTruth: s1 == s2 leaves the loss undefined.
    """
    if s1 == s2:
        raise TiedGroundTruth(f"both items have quality {s1}")
    z = (p2 - p1) if s1 > s2 else (p1 - p2)
    return _softplus(z)


# --- backward pass ----------------------------------------------------------


def _params(model: QualityModel) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for layer in model.point_layers + model.recon_layers + model.head_layers:
        out.append(layer.W)
        out.append(layer.b)
    return out


def _zero_grads(model: QualityModel) -> list[np.ndarray]:
    return [np.zeros_like(p) for p in _params(model)]


def _backward(
    model: QualityModel, cv: CueVector, tape: _Tape, dscore: float, grads: list[np.ndarray]
) -> None:
    """Accumulate d(dscore * score)/d(params) into ``grads`` (same layout as _params)."""
    n_point = len(model.point_layers)
    n_recon = len(model.recon_layers)

    def gW(i: int) -> np.ndarray:
        return grads[2 * i]

    def gb(i: int) -> np.ndarray:
        return grads[2 * i + 1]

    # Head, last layer is linear.
    delta = np.array([dscore])
    last = len(model.head_layers) - 1
    for li in range(last, -1, -1):
        layer = model.head_layers[li]
        d_pre = delta if li == last else delta * (tape.head_pres[li] > 0.0)
        k = n_point + n_recon + li
        gW(k)[...] += np.outer(d_pre, tape.head_inputs[li])
        gb(k)[...] += d_pre
        delta = layer.W.T @ d_pre

    pool_width = model.point_layers[-1].W.shape[0]
    d_pooled = delta[:pool_width]
    d_recon = delta[pool_width:]

    for li in range(n_recon - 1, -1, -1):
        layer = model.recon_layers[li]
        d_pre = d_recon * (tape.recon_pres[li] > 0.0)
        k = n_point + li
        gW(k)[...] += np.outer(d_pre, tape.recon_inputs[li])
        gb(k)[...] += d_pre
        d_recon = layer.W.T @ d_pre

    # Route each pooled coordinate's gradient to its argmax row.
    n_rows = cv.point_cues.shape[0]
    dH = np.zeros((n_rows, pool_width))
    dH[tape.pool_argmax, np.arange(pool_width)] = d_pooled
    for li in range(n_point - 1, -1, -1):
        layer = model.point_layers[li]
        d_pre = dH * (tape.point_pres[li] > 0.0)
        gW(li)[...] += d_pre.T @ tape.point_inputs[li]
        gb(li)[...] += d_pre.sum(axis=0)
        dH = d_pre @ layer.W


def pair_loss_and_grads(
    model: QualityModel, pair: TrainPair, grads: list[np.ndarray] | None = None
) -> tuple[float, list[np.ndarray]]:
    """Ranking loss of one pair and its parameter gradients."""
    if grads is None:
        grads = _zero_grads(model)
    p_a, tape_a = _forward(model, pair.cue_a)
    p_b, tape_b = _forward(model, pair.cue_b)
    loss = ranking_loss(p_a, p_b, pair.quality_a, pair.quality_b)
    if pair.quality_a > pair.quality_b:
        z = p_b - p_a
        sig = _sigmoid(z)
        d_a, d_b = -sig, sig
    else:
        z = p_a - p_b
        sig = _sigmoid(z)
        d_a, d_b = sig, -sig
    _backward(model, pair.cue_a, tape_a, d_a, grads)
    _backward(model, pair.cue_b, tape_b, d_b, grads)
    return loss, grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_model(cls, model: QualityModel) -> "AdamState":
        return cls(m=_zero_grads(model), v=_zero_grads(model))


def grad_step(
    model: QualityModel,
    batch: list[TrainPair],
    cfg: TrainConfig,
    state: AdamState,
) -> tuple[QualityModel, float]:
    """One adaptive-moments update on the summed batch gradient.

    The model is updated in place (and returned); pairs are accumulated in
    list order so a fixed batch gives bit-identical parameters.

    Raises:
        NonFiniteGradient: backprop produced NaN or inf.
    """
    if not batch:
        raise EmptyCorpus("empty batch")
    grads = _zero_grads(model)
    total = 0.0
    for pair in batch:
        loss, _ = pair_loss_and_grads(model, pair, grads)
        total += loss
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient contains NaN or inf")

    state.t += 1
    b1c = 1.0 - cfg.beta1**state.t
    b2c = 1.0 - cfg.beta2**state.t
    for p, g, m, v in zip(_params(model), grads, state.m, state.v):
        m[...] = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v[...] = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        p[...] -= cfg.lr * (m / b1c) / (np.sqrt(v / b2c) + cfg.eps)
    return model, total / len(batch)


# --- training loop ----------------------------------------------------------


def _pairwise_accuracy(
    scores: np.ndarray, quals: np.ndarray, pairs: np.ndarray
) -> float:
    ds = scores[pairs[:, 0]] - scores[pairs[:, 1]]
    dq = quals[pairs[:, 0]] - quals[pairs[:, 1]]
    return float((np.sign(ds) == np.sign(dq)).mean())


def _eligible_pairs(quals: np.ndarray, delta: float, cap: int) -> np.ndarray:
    i, j = np.triu_indices(len(quals), 1)
    keep = np.abs(quals[i] - quals[j]) >= delta
    pairs = np.stack([i[keep], j[keep]], axis=1)
    return pairs[:cap]


def _sample_pairs(
    rng: np.random.Generator, quals: np.ndarray, need: int, delta: float
) -> np.ndarray:
    """Uniform eligible index pairs, by rejection with an enumeration fallback."""
    out = np.empty((0, 2), dtype=np.int64)
    n = len(quals)
    for _ in range(200):
        if len(out) >= need:
            break
        i = rng.integers(0, n, 2 * need)
        j = rng.integers(0, n, 2 * need)
        ok = (i != j) & (np.abs(quals[i] - quals[j]) >= delta)
        out = np.concatenate([out, np.stack([i[ok], j[ok]], axis=1)])
    if len(out) < need:
        pool = _eligible_pairs(quals, delta, cap=10_000_000)
        if len(pool) == 0:
            raise NoEligiblePairs(f"no quality gap reaches {delta}")
        pick = rng.integers(0, len(pool), need - len(out))
        out = np.concatenate([out, pool[pick]])
    return out[:need]


def train(
    corpus: list[tuple[CueVector, float]],
    cfg: TrainConfig | None = None,
    dropped: tuple[str, ...] = (),
) -> tuple[QualityModel, list[tuple[int, float, float]]]:
    """Train a scorer on (cues, quality) items.

    Each epoch samples ``cfg.pairs_per_epoch`` index pairs whose quality gap
    is at least ``cfg.delta_pair`` from the train split and applies
    adaptive-moments updates batch by batch.  The returned model is the
    snapshot with the best validation pairwise-ordering accuracy; the log rows
    are (epoch, mean train loss, val accuracy).

    Raises:
        EmptyCorpus: no items.
        NoEligiblePairs: quality spread below ``cfg.delta_pair`` in a split.
        DimMismatch: inconsistent cue widths across the corpus.
    """
    cfg = cfg or TrainConfig()
    if not corpus:
        raise EmptyCorpus("training corpus is empty")
    point_dim = corpus[0][0].point_cues.shape[1]
    recon_dim = len(corpus[0][0].recon_cues)
    for cv, _ in corpus:
        if cv.point_cues.shape[1] != point_dim or len(cv.recon_cues) != recon_dim:
            raise DimMismatch(f"{cv.pair_id}: inconsistent cue widths in corpus")

    rng = np.random.default_rng(cfg.seed)
    model = init_model(
        point_dim,
        recon_dim,
        cfg,
        rng,
        point_fields=corpus[0][0].point_fields,
        recon_fields=corpus[0][0].recon_fields,
        dropped=dropped,
    )

    n = len(corpus)
    # split drawn from its own stream: init consumes a width-dependent number
    # of draws, and cue-ablated variants must share one split under one seed
    split_rng = np.random.default_rng([cfg.seed, 1])
    perm = split_rng.permutation(n)
    n_val = max(1, int(round(cfg.val_fraction * n)))
    if n - n_val < 2:
        raise EmptyCorpus(f"corpus of {n} items leaves no train split")
    val_idx = perm[:n_val]
    tr_idx = perm[n_val:]
    quals = np.array([q for _, q in corpus])
    q_tr = quals[tr_idx]
    q_val = quals[val_idx]

    if np.ptp(q_tr) < cfg.delta_pair:
        raise NoEligiblePairs(
            f"train split quality spread {np.ptp(q_tr):.4f} < delta {cfg.delta_pair}"
        )
    val_pairs = _eligible_pairs(q_val, cfg.delta_pair, cap=20_000)
    if len(val_pairs) == 0:
        raise NoEligiblePairs("validation split has no rankable pair")

    state = AdamState.for_model(model)
    best_acc = -1.0
    best_model = copy.deepcopy(model)
    log: list[tuple[int, float, float]] = []
    for epoch in range(cfg.epochs):
        pair_idx = _sample_pairs(rng, q_tr, cfg.pairs_per_epoch, cfg.delta_pair)
        losses = []
        for start in range(0, len(pair_idx), cfg.batch_size):
            chunk = pair_idx[start : start + cfg.batch_size]
            batch = [
                TrainPair(
                    cue_a=corpus[tr_idx[a]][0],
                    cue_b=corpus[tr_idx[b]][0],
                    quality_a=quals[tr_idx[a]],
                    quality_b=quals[tr_idx[b]],
                )
                for a, b in chunk
            ]
            _, loss = grad_step(model, batch, cfg, state)
            losses.append(loss)
        val_scores = np.array([score(model, corpus[i][0]) for i in val_idx])
        acc = _pairwise_accuracy(val_scores, q_val, val_pairs)
        log.append((epoch, float(np.mean(losses)), acc))
        if acc > best_acc:
            best_acc = acc
            best_model = copy.deepcopy(model)
    return best_model, log

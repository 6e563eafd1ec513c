"""Release gate: ten checks at their stated tolerances, one verdict line each.

Each test prints a single [PASS]/[FAIL] line outside pytest's capture so the
full gate reads as a checklist in the terminal.  The two corpus-scale checks
(7 and 8) share the session corpora from conftest and include their stated
runtime budgets.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
from click.testing import CliRunner

from depthforge.cli import main as cli_main
from depthforge.cues import CueVector
from depthforge.evaluation import ScoredItem, baselines, quality_curve, whdr
from depthforge.geometry import SfmConfig, estimate_fundamental, focal_grid, reconstruct_pair
from depthforge.pipeline import DatasetRecord, DepthPair
from depthforge.quality_net import TrainConfig, init_model, ranking_loss, score, train
from depthforge.scenes import SceneSpec, generate_scene, gt_quality, perfect_reconstruction

from conftest import GATE_TRAIN_CFG
from gradcheck import gradient_check

ALL_POINT_FIELDS = ("x1", "y1", "x2", "y2", "sampson", "angle", "reproj")
RECON_FIELDS = ("focal", "mean_reproj")


def _verdict(capsys, num: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d} ({name}): {detail}"
    with capsys.disabled():
        print(line)
    assert ok, line


def test_criterion_01_ranking_loss_exactness(capsys):
    err_ln2 = abs(ranking_loss(0.0, 0.0, 0.9, 0.3) - math.log(2.0))
    worst = 0.0
    for z in np.linspace(-30.0, 30.0, 121):
        stable = ranking_loss(float(z), 0.0, 0.9, 0.3)
        naive = math.log(1.0 + math.exp(-float(z)))
        worst = max(worst, abs(stable - naive))
    ok = err_ln2 <= 1e-12 and worst <= 1e-12
    _verdict(capsys, 1, "ranking-loss exactness", ok,
             f"ln2 err {err_ln2:.1e}, stable-vs-naive err {worst:.1e} (tol 1e-12)")


def test_criterion_02_gradient_oracle(capsys):
    t0 = time.time()
    worst = gradient_check(n_draws=100, h=1e-3, seed=0)
    dt = time.time() - t0
    ok = worst < 1e-4 and dt < 60.0
    _verdict(capsys, 2, "gradient oracle", ok,
             f"worst rel err {worst:.2e} over 100 draws (tol 1e-4), {dt:.1f}s")


def test_criterion_03_geometry_oracle(capsys):
    cfg = SfmConfig()
    grid = focal_grid(640, 480, cfg)
    log_grid = np.log(grid)
    rng = np.random.default_rng(30)
    t0 = time.time()
    worst_step = 0
    worst_sampson = 0.0
    worst_ratio_dev = 0.0
    for k in range(100):
        idx = int(rng.integers(8, 36))
        near = float(rng.uniform(3.0, 10.0))
        spec = SceneSpec(
            pair_id=f"geo{k:03d}",
            f_true=float(grid[idx]),       # on a hypothesis, so recovery can be exact
            n_points=int(rng.integers(60, 200)),
            rot_deg=float(rng.uniform(4.0, 12.0)),
            depth_range=(near, near * float(rng.uniform(1.8, 3.0))),
            seed=k,
        )
        pair, gt = generate_scene(spec)
        recon = reconstruct_pair(pair, cfg)
        rec_idx = int(np.argmin(np.abs(log_grid - math.log(recon.camera.focal))))
        worst_step = max(worst_step, abs(rec_idx - idx))
        worst_sampson = max(worst_sampson, max(p.sampson for p in recon.points))
        true_a = dict(zip(gt.ids.tolist(), gt.depth_a.tolist()))
        true_b = dict(zip(gt.ids.tolist(), gt.depth_b.tolist()))
        for true_of, rec_of in (
            (true_a, lambda p: p.depth_a),
            (true_b, lambda p: p.depth_b),
        ):
            r = np.array([rec_of(p) / true_of[p.corr_id] for p in recon.points])
            worst_ratio_dev = max(worst_ratio_dev, float(np.max(np.abs(r / r.mean() - 1.0))))
    dt = time.time() - t0
    ok = worst_step <= 1 and worst_sampson < 1e-10 and worst_ratio_dev < 1e-6 and dt < 60.0
    _verdict(capsys, 3, "geometry oracle", ok,
             f"focal step {worst_step} (<=1), sampson {worst_sampson:.1e} (<1e-10), "
             f"depth-ratio dev {worst_ratio_dev:.1e} (<1e-6), {dt:.1f}s over 100 scenes")


def test_criterion_04_robust_estimation(capsys):
    cfg = SfmConfig()     # tau_f = 1.0
    t0 = time.time()
    n_true_inliers = 0
    n_kept_inliers = 0
    n_kept_outliers = 0
    for seed in range(100):
        spec = SceneSpec(
            pair_id=f"rq{seed:03d}", n_points=200, rot_deg=8.0,
            noise_px=0.5, noise_kind="uniform", outlier_frac=0.3,
            depth_range=(3.0, 12.0), seed=seed,
        )
        pair, gt = generate_scene(spec)
        kept = set(int(i) for i in estimate_fundamental(pair.matches, cfg).inlier_ids)
        true_in = {int(i) for i, lab in zip(gt.ids, gt.labels) if lab == "inlier"}
        true_out = {int(i) for i, lab in zip(gt.ids, gt.labels) if lab == "outlier"}
        n_true_inliers += len(true_in)
        n_kept_inliers += len(kept & true_in)
        n_kept_outliers += len(kept & true_out)
    dt = time.time() - t0
    recall = n_kept_inliers / n_true_inliers
    ok = recall >= 0.99 and n_kept_outliers == 0 and dt < 120.0
    _verdict(capsys, 4, "robust estimation", ok,
             f"inlier recall {recall:.4f} (>=0.99), planted outliers kept "
             f"{n_kept_outliers} (=0), 100 seeds in {dt:.1f}s")


def test_criterion_05_quality_identities(capsys):
    spec = SceneSpec(pair_id="qid", n_points=100, depth_range=(3.0, 15.0), seed=9)
    one = gt_quality(*perfect_reconstruction(spec))

    recon, gt = perfect_reconstruction(spec)
    hi_a = max(p.depth_a for p in recon.points) + min(p.depth_a for p in recon.points)
    hi_b = max(p.depth_b for p in recon.points) + min(p.depth_b for p in recon.points)
    for p in recon.points:
        p.depth_a = hi_a - p.depth_a
        p.depth_b = hi_b - p.depth_b
    zero = gt_quality(recon, gt)

    vals = []
    for s in range(50):
        rec_p, gt_p = perfect_reconstruction(spec)
        perm = np.random.default_rng(s).permutation(len(rec_p.points))
        da = np.array([p.depth_a for p in rec_p.points])
        db = np.array([p.depth_b for p in rec_p.points])
        for p, j in zip(rec_p.points, perm):
            p.depth_a = float(da[j])
            p.depth_b = float(db[j])
        vals.append(gt_quality(rec_p, gt_p))
    mean_perm = float(np.mean(vals))
    ok = one == 1.0 and zero == 0.0 and abs(mean_perm - 0.5) <= 0.05
    _verdict(capsys, 5, "quality identities", ok,
             f"exact {one}, flipped {zero}, permuted mean {mean_perm:.4f} "
             f"over 50 seeds (0.5 +- 0.05)")


def test_criterion_06_permutation_invariance(capsys):
    identical = True
    for m_seed in range(10):
        rng = np.random.default_rng(100 + m_seed)
        model = init_model(7, 2, TrainConfig(), rng,
                           point_fields=ALL_POINT_FIELDS, recon_fields=RECON_FIELDS)
        cv = CueVector(
            pair_id=f"perm{m_seed}",
            recon_cues=rng.standard_normal(2),
            point_cues=rng.standard_normal((40, 7)),
            point_fields=ALL_POINT_FIELDS,
            recon_fields=RECON_FIELDS,
        )
        base = score(model, cv)
        for _ in range(100):
            shuffled = CueVector(
                pair_id=cv.pair_id,
                recon_cues=cv.recon_cues,
                point_cues=cv.point_cues[rng.permutation(40)],
                point_fields=cv.point_fields,
                recon_fields=cv.recon_fields,
            )
            identical = identical and (score(model, shuffled) == base)
    _verdict(capsys, 6, "permutation invariance", identical,
             "scores bit-identical under 100 row shuffles x 10 models")


def test_criterion_07_filtering_efficacy(capsys, gate_corpora):
    t0 = time.time()
    model, _ = train(gate_corpora["train"], GATE_TRAIN_CFG)
    items = [
        ScoredItem(cv.pair_id, score(model, cv), q)
        for cv, q in gate_corpora["heldout"]
    ]
    qc = quality_curve(items)
    upper, rand = baselines(items, seed=0)
    order = sorted(items, key=lambda it: (-it.score, it.item_id))
    k = len(order) // 5
    top_mean = float(np.mean([it.quality for it in order[:k]]))
    corpus_mean = gate_corpora["heldout_mean_quality"]
    dt = gate_corpora["gen_seconds"] + (time.time() - t0)

    gap = qc.auc - rand.auc
    need = 0.6 * (upper.auc - rand.auc)
    ok = gap >= need and top_mean >= corpus_mean + 0.05 and dt < 600.0
    _verdict(capsys, 7, "filtering efficacy", ok,
             f"AUC {qc.auc:.4f} (random {rand.auc:.4f}, upper {upper.auc:.4f}, "
             f"gap {gap:.4f} >= {need:.4f}), top-20% quality {top_mean:.4f} >= "
             f"corpus {corpus_mean:.4f} + 0.05, {dt:.0f}s < 600s")


def test_criterion_08_ablation_direction(capsys, gate_corpora):
    from depthforge.evaluation import ablation_suite

    t0 = time.time()
    result = ablation_suite(gate_corpora["train"], gate_corpora["heldout"], GATE_TRAIN_CFG)
    dt = time.time() - t0
    aucs = dict(result.rows)
    full = aucs["Full"]
    ablated = {n: a for n, a in aucs.items() if n.startswith("-")}
    min_margin = min(full - a for a in ablated.values())
    ok = all(full >= a - 0.005 for a in ablated.values()) and dt < 1800.0
    table = ", ".join(f"{n} {a:.4f}" for n, a in aucs.items())
    _verdict(capsys, 8, "ablation direction", ok,
             f"Full {full:.4f} vs ablated (min margin {min_margin:+.4f} >= -0.005); "
             f"{table}; {dt:.0f}s < 1800s")


def test_criterion_09_pipeline_determinism(capsys, tmp_path):
    runner = CliRunner()
    corpus = tmp_path / "corpus"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train": {
        "point_hidden": [8, 12], "recon_hidden": [4], "head_hidden": [8],
        "epochs": 2, "pairs_per_epoch": 96,
    }}))

    def run(*args):
        res = runner.invoke(cli_main, list(args), catch_exceptions=False)
        assert res.exit_code == 0, res.output
        return res

    run("synth", "--out", str(corpus), "--count", "12", "--seed", "5")
    run("reconstruct", "--matches", str(corpus), "--out", str(tmp_path / "rec.jsonl"))
    run("cues", "--matches", str(corpus), "--records", str(tmp_path / "rec.jsonl"),
        "--out", str(tmp_path / "cues.jsonl"))
    run("train-qanet", "--cues", str(tmp_path / "cues.jsonl"),
        "--labels", str(corpus / "manifest.json"), "--out", str(tmp_path / "model.json"),
        "--config", str(cfg))
    for k in (1, 2):
        run("forge", "--matches", str(corpus), "--model", str(tmp_path / "model.json"),
            "--out", str(tmp_path / f"d{k}.jsonl"), "--report", str(tmp_path / f"r{k}.json"),
            "--top-fraction", "0.6", "--pairs-per-image", "40")
    data_same = (tmp_path / "d1.jsonl").read_bytes() == (tmp_path / "d2.jsonl").read_bytes()
    report_same = (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()
    ok = data_same and report_same
    _verdict(capsys, 9, "pipeline determinism", ok,
             f"dataset bytes identical {data_same}, report bytes identical {report_same}")


def test_criterion_10_ordinal_metric_identities(capsys):
    rng = np.random.default_rng(0)
    closers = [str(c) for c in rng.choice(["a", "b"], size=10_000)]
    recs = [DatasetRecord("img", [DepthPair(0.0, 0.0, 1.0, 1.0, c) for c in closers])]
    exact = whdr({"img": closers}, recs)
    inverted = whdr({"img": ["b" if c == "a" else "a" for c in closers]}, recs)
    coin = whdr({"img": [str(c) for c in rng.choice(["a", "b"], size=10_000)]}, recs)
    ok = exact == 0.0 and inverted == 1.0 and abs(coin - 0.5) <= 0.02
    _verdict(capsys, 10, "ordinal metric identities", ok,
             f"self {exact}, inverted {inverted}, coin-flip {coin:.4f} (0.5 +- 0.02)")

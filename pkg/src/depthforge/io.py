"""On-disk formats: match files, reconstruction records, cue vectors,
model files, dataset records, ground-truth sidecars, and report CSVs.

Floats are written with Python's shortest round-trip repr (the json module's
default), so serialize -> parse -> serialize is byte-identical and values
survive bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cues import CueVector
from .errors import EmptyCorpus
from .evaluation import QualityCurve
from .geometry import (
    CameraModel,
    Correspondence,
    FramePair,
    ReconPoint,
    Reconstruction,
    RelativePose,
)
from .quality_net import Layer, QualityModel
from .scenes import GroundTruth, SceneSpec

MODEL_FORMAT_VERSION = 1


# --- match files ------------------------------------------------------------


def write_match_file(path: Path | str, pair: FramePair) -> None:
    """One frame pair per file: a header line, then one line per match."""
    lines = [f"PAIR {pair.pair_id} {pair.width} {pair.height} {len(pair.matches)}"]
    for m in pair.matches:
        lines.append(f"{m.x1!r} {m.y1!r} {m.x2!r} {m.y2!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_match_file(path: Path | str) -> FramePair:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("PAIR "):
        raise ValueError(f"{path}: missing PAIR header")
    head = lines[0].split()
    if len(head) != 5:
        raise ValueError(f"{path}: malformed header {lines[0]!r}")
    _, pair_id, w, h, n = head
    n = int(n)
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n:
        raise ValueError(f"{path}: header promises {n} matches, found {len(body)}")
    matches = []
    for i, ln in enumerate(body):
        vals = ln.split()
        if len(vals) != 4:
            raise ValueError(f"{path}: bad match line {ln!r}")
        x1, y1, x2, y2 = (float(v) for v in vals)
        matches.append(Correspondence(corr_id=i, x1=x1, y1=y1, x2=x2, y2=y2))
    return FramePair(pair_id=pair_id, width=int(w), height=int(h), matches=matches)


def match_files(directory: Path | str) -> list[Path]:
    """Match files under a directory, sorted by name for stable batch order."""
    return sorted(Path(directory).glob("*.txt"))


# --- reconstruction records -------------------------------------------------


def recon_to_obj(recon: Reconstruction) -> dict:
    return {
        "pair_id": recon.pair_id,
        "focal": float(recon.camera.focal),
        "mean_reproj": float(recon.mean_reproj),
        "pose": {
            "R": [float(v) for v in np.asarray(recon.pose.R).ravel()],
            "t": [float(v) for v in np.asarray(recon.pose.t).ravel()],
        },
        "points": [
            {
                "id": int(p.corr_id),
                "x1": float(p.x1),
                "y1": float(p.y1),
                "x2": float(p.x2),
                "y2": float(p.y2),
                "X": [float(v) for v in np.asarray(p.X).ravel()],
                "depth_a": float(p.depth_a),
                "depth_b": float(p.depth_b),
                "reproj": float(p.reproj),
                "sampson": float(p.sampson),
                "angle": float(p.angle),
            }
            for p in recon.points
        ],
    }


def obj_to_recon(obj: dict, width: float, height: float) -> Reconstruction:
    """Rebuild a Reconstruction from its record.

    The record stores no image dimensions, so the caller supplies them (from
    the match file the record was built from).  F is not stored and comes
    back as None.
    """
    pose = RelativePose(
        R=np.array(obj["pose"]["R"], dtype=float).reshape(3, 3),
        t=np.array(obj["pose"]["t"], dtype=float),
    )
    points = [
        ReconPoint(
            corr_id=int(p["id"]),
            x1=float(p["x1"]),
            y1=float(p["y1"]),
            x2=float(p["x2"]),
            y2=float(p["y2"]),
            X=np.array(p["X"], dtype=float),
            depth_a=float(p["depth_a"]),
            depth_b=float(p["depth_b"]),
            reproj=float(p["reproj"]),
            sampson=float(p["sampson"]),
            angle=float(p["angle"]),
        )
        for p in obj["points"]
    ]
    return Reconstruction(
        pair_id=obj["pair_id"],
        camera=CameraModel(focal=float(obj["focal"]), cx=width / 2.0, cy=height / 2.0),
        pose=pose,
        F=None,
        points=points,
        mean_reproj=float(obj["mean_reproj"]),
    )


def write_recon_records(path: Path | str, recons: Iterable[Reconstruction]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in recons:
            fh.write(json.dumps(recon_to_obj(r), separators=(",", ":")) + "\n")


def read_recon_records(
    path: Path | str, sizes: Mapping[str, tuple[float, float]]
) -> list[Reconstruction]:
    """Load records; ``sizes`` maps pair_id to (width, height)."""
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            pid = obj["pair_id"]
            if pid not in sizes:
                raise KeyError(f"no image dimensions known for pair {pid!r}")
            w, h = sizes[pid]
            out.append(obj_to_recon(obj, w, h))
    return out


# --- cue vectors ------------------------------------------------------------


def write_cue_records(path: Path | str, cues: Iterable[CueVector]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for cv in cues:
            obj = {
                "pair_id": cv.pair_id,
                "recon_fields": list(cv.recon_fields),
                "point_fields": list(cv.point_fields),
                "dropped": list(cv.dropped),
                "recon_cues": [float(v) for v in cv.recon_cues],
                "point_cues": [[float(v) for v in row] for row in cv.point_cues],
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_cue_records(path: Path | str) -> list[CueVector]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            n_pt = len(obj["point_fields"])
            out.append(
                CueVector(
                    pair_id=obj["pair_id"],
                    recon_cues=np.array(obj["recon_cues"], dtype=float),
                    point_cues=np.array(obj["point_cues"], dtype=float).reshape(-1, n_pt),
                    point_fields=tuple(obj["point_fields"]),
                    recon_fields=tuple(obj["recon_fields"]),
                    dropped=tuple(obj["dropped"]),
                )
            )
    return out


# --- model files ------------------------------------------------------------


def _layer_obj(layer: Layer) -> dict:
    return {
        "rows": int(layer.W.shape[0]),
        "cols": int(layer.W.shape[1]),
        "W": [float(v) for v in layer.W.ravel()],
        "b": [float(v) for v in layer.b],
    }


def _obj_layer(obj: dict) -> Layer:
    rows, cols = int(obj["rows"]), int(obj["cols"])
    W = np.array(obj["W"], dtype=float).reshape(rows, cols)
    b = np.array(obj["b"], dtype=float)
    if b.shape != (rows,):
        raise ValueError(f"bias length {b.shape[0]} != rows {rows}")
    return Layer(W=W, b=b)


def write_model(path: Path | str, model: QualityModel) -> None:
    obj = {
        "format_version": MODEL_FORMAT_VERSION,
        "arch": {
            "point_dim": model.point_dim,
            "recon_dim": model.recon_dim,
            "point_fields": list(model.point_fields),
            "recon_fields": list(model.recon_fields),
            "dropped": list(model.dropped),
        },
        "point_layers": [_layer_obj(l) for l in model.point_layers],
        "recon_layers": [_layer_obj(l) for l in model.recon_layers],
        "head_layers": [_layer_obj(l) for l in model.head_layers],
    }
    Path(path).write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def read_model(path: Path | str) -> QualityModel:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    version = obj.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {version!r}")
    arch = obj["arch"]
    model = QualityModel(
        point_layers=[_obj_layer(l) for l in obj["point_layers"]],
        recon_layers=[_obj_layer(l) for l in obj["recon_layers"]],
        head_layers=[_obj_layer(l) for l in obj["head_layers"]],
        point_fields=tuple(arch["point_fields"]),
        recon_fields=tuple(arch["recon_fields"]),
        dropped=tuple(arch["dropped"]),
    )
    if model.point_dim != int(arch["point_dim"]) or model.recon_dim != int(arch["recon_dim"]):
        raise ValueError("arch dims disagree with stored layer shapes")
    return model


# --- ground truth sidecars and manifests ------------------------------------


def write_ground_truth(path: Path | str, gt: GroundTruth) -> None:
    obj = {
        "pair_id": gt.pair_id,
        "f_true": float(gt.f_true),
        "pose": {
            "R": [float(v) for v in np.asarray(gt.pose.R).ravel()],
            "t": [float(v) for v in np.asarray(gt.pose.t).ravel()],
        },
        "ids": [int(v) for v in gt.ids],
        "depth_a": [float(v) for v in gt.depth_a],
        "depth_b": [float(v) for v in gt.depth_b],
        "labels": list(gt.labels),
    }
    Path(path).write_text(json.dumps(obj, separators=(",", ":")) + "\n", encoding="utf-8")


def read_ground_truth(path: Path | str) -> GroundTruth:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return GroundTruth(
        pair_id=obj["pair_id"],
        f_true=float(obj["f_true"]),
        pose=RelativePose(
            R=np.array(obj["pose"]["R"], dtype=float).reshape(3, 3),
            t=np.array(obj["pose"]["t"], dtype=float),
        ),
        ids=np.array(obj["ids"], dtype=int),
        depth_a=np.array(obj["depth_a"], dtype=float),
        depth_b=np.array(obj["depth_b"], dtype=float),
        labels=list(obj["labels"]),
    )


def spec_hash(spec: SceneSpec) -> str:
    blob = json.dumps(asdict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_manifest(path: Path | str, rows: Sequence[dict]) -> None:
    """Corpus manifest: one entry per pair with spec hash and realized quality
    (or the rejection reason when the pair did not survive)."""
    Path(path).write_text(json.dumps(list(rows), indent=1) + "\n", encoding="utf-8")


def read_manifest(path: Path | str) -> list[dict]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# --- dataset records --------------------------------------------------------


def write_dataset_records(path: Path | str, records: Iterable) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "image_id": rec.image_id,
                "pairs": [
                    {
                        "xa": float(p.xa),
                        "ya": float(p.ya),
                        "xb": float(p.xb),
                        "yb": float(p.yb),
                        "closer": p.closer,
                    }
                    for p in rec.pairs
                ],
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_dataset_records(path: Path | str) -> list:
    from .pipeline import DatasetRecord, DepthPair  # avoid import cycle

    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            pairs = [
                DepthPair(
                    xa=float(p["xa"]),
                    ya=float(p["ya"]),
                    xb=float(p["xb"]),
                    yb=float(p["yb"]),
                    closer=p["closer"],
                )
                for p in obj["pairs"]
            ]
            out.append(DatasetRecord(image_id=obj["image_id"], pairs=pairs))
    return out


# --- report CSVs ------------------------------------------------------------


def write_curve_csv(path: Path | str, curve: QualityCurve) -> None:
    lines = ["n_percent,mean_quality"]
    for pct, q in zip(curve.percent, curve.mean_quality):
        lines.append(f"{int(pct)},{float(q)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_curve_summary(path: Path | str, curve: QualityCurve) -> None:
    obj = {"auc": float(curve.auc), "n_items": int(curve.n_items)}
    Path(path).write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def read_curve_csv(path: Path | str) -> QualityCurve:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "n_percent,mean_quality":
        raise ValueError(f"{path}: not a curve CSV")
    pct, mean = [], []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        a, b = ln.split(",")
        pct.append(int(a))
        mean.append(float(b))
    if not pct:
        raise EmptyCorpus(f"{path}: curve CSV has no rows")
    mean_arr = np.array(mean)
    return QualityCurve(
        percent=np.array(pct),
        mean_quality=mean_arr,
        auc=float(mean_arr.mean()),
        n_items=0,
    )


def write_ablation_csv(path: Path | str, rows: Sequence[tuple[str, float]]) -> None:
    lines = ["variant,auc"]
    for name, auc in rows:
        lines.append(f"{name},{float(auc)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_training_log(
    path: Path | str, log: Sequence[tuple[int, float, float]]
) -> None:
    lines = ["epoch,loss,val_acc"]
    for epoch, loss, acc in log:
        lines.append(f"{int(epoch)},{float(loss)!r},{float(acc)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

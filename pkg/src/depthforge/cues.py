"""Geometric cue extraction for reconstruction quality scoring.

Cues are computed from the reconstruction alone; no pixel data is ever read,
so the scorer cannot overfit to image content.  Reconstruction-wise cues are
the inferred focal length and the mean reprojection error; point-wise cues are
the match coordinates in both views, the Sampson distance, the ray angle, and
the per-point reprojection error.  Heavy-tailed error cues are compressed with
log1p; coordinates are mapped into [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyCues, NonFiniteCue
from .geometry import Reconstruction

CUE_COORDS = "Coords2D"
CUE_SAMPSON = "Sampson"
CUE_ANGLE = "Angle"
CUE_FOCAL = "Focal"
CUE_REPERR = "RepErr"
ALL_CUES = (CUE_COORDS, CUE_SAMPSON, CUE_ANGLE, CUE_FOCAL, CUE_REPERR)

_FULL_POINT_FIELDS = ("x1", "y1", "x2", "y2", "sampson", "angle", "reproj")
_FULL_RECON_FIELDS = ("focal", "mean_reproj")

# Which columns each droppable cue owns.
_POINT_COLS = {
    CUE_COORDS: ("x1", "y1", "x2", "y2"),
    CUE_SAMPSON: ("sampson",),
    CUE_ANGLE: ("angle",),
    CUE_REPERR: ("reproj",),
}
_RECON_COLS = {
    CUE_FOCAL: ("focal",),
    CUE_REPERR: ("mean_reproj",),
}


@dataclass
class CueVector:
    """Scorer input for one reconstruction.

    ``point_cues`` rows follow corr-id order; ``point_fields`` and
    ``recon_fields`` name the active columns so ablated vectors stay
    self-describing.
    """

    pair_id: str
    recon_cues: np.ndarray
    point_cues: np.ndarray
    point_fields: tuple[str, ...]
    recon_fields: tuple[str, ...]
    dropped: tuple[str, ...] = ()


def _check_finite(cv: CueVector) -> CueVector:
    if cv.point_cues.shape[0] == 0:
        raise EmptyCues(f"{cv.pair_id}: no point cues")
    if not np.all(np.isfinite(cv.point_cues)) or not np.all(np.isfinite(cv.recon_cues)):
        raise NonFiniteCue(f"{cv.pair_id}: cue vector contains NaN or inf")
    return cv


def extract_cues(recon: Reconstruction, include_point_reproj: bool = True) -> CueVector:
    """Build the full cue vector for a reconstruction.

    Coordinates x are mapped via (2x - W) / max(W, H) (y analogously with H),
    Sampson and reprojection errors via log1p, the ray angle stays in radians,
    and the focal length is expressed as a fraction of max(W, H).

    ``include_point_reproj=False`` drops only the per-point reprojection
    column while keeping the reconstruction-wise mean, for the strict
    three-point-cue variant.

    Raises:
        EmptyCues: reconstruction has no points.
        NonFiniteCue: any cue value is NaN or infinite.
    """
    W, H = recon.width, recon.height
    m = max(W, H)
    pts = sorted(recon.points, key=lambda p: p.corr_id)
    rows = np.array(
        [
            [
                (2.0 * p.x1 - W) / m,
                (2.0 * p.y1 - H) / m,
                (2.0 * p.x2 - W) / m,
                (2.0 * p.y2 - H) / m,
                np.log1p(p.sampson),
                p.angle,
                np.log1p(p.reproj),
            ]
            for p in pts
        ],
        dtype=np.float64,
    ).reshape(len(pts), 7)
    recon_cues = np.array(
        [recon.camera.focal / m, np.log1p(recon.mean_reproj)], dtype=np.float64
    )
    cv = CueVector(
        pair_id=recon.pair_id,
        recon_cues=recon_cues,
        point_cues=rows,
        point_fields=_FULL_POINT_FIELDS,
        recon_fields=_FULL_RECON_FIELDS,
    )
    if not include_point_reproj:
        keep = [i for i, f in enumerate(cv.point_fields) if f != "reproj"]
        cv = replace(
            cv,
            point_cues=cv.point_cues[:, keep],
            point_fields=tuple(f for f in cv.point_fields if f != "reproj"),
        )
    return _check_finite(cv)


def ablate_cues(cv: CueVector, drop: set[str] | tuple[str, ...]) -> CueVector:
    """Remove cue groups from a vector; dimensionality shrinks accordingly.

    Dropping ``RepErr`` removes the reprojection error wherever it appears,
    both the point column and the reconstruction-wise mean.  Dropping
    everything reconstruction-wise leaves ``recon_cues`` empty, which disables
    that branch of a model built for the resulting shape.
    """
    drop = set(drop)
    unknown = drop - set(ALL_CUES)
    if unknown:
        raise ValueError(f"unknown cue names: {sorted(unknown)}")
    point_gone = {c for cue in drop for c in _POINT_COLS.get(cue, ())}
    recon_gone = {c for cue in drop for c in _RECON_COLS.get(cue, ())}
    keep_p = [i for i, f in enumerate(cv.point_fields) if f not in point_gone]
    keep_r = [i for i, f in enumerate(cv.recon_fields) if f not in recon_gone]
    if not keep_p:
        raise EmptyCues(f"{cv.pair_id}: ablation removed every point cue")
    return CueVector(
        pair_id=cv.pair_id,
        recon_cues=cv.recon_cues[keep_r],
        point_cues=cv.point_cues[:, keep_p],
        point_fields=tuple(cv.point_fields[i] for i in keep_p),
        recon_fields=tuple(cv.recon_fields[i] for i in keep_r),
        dropped=tuple(sorted(set(cv.dropped) | drop)),
    )


def cue_dims(dropped: set[str] | tuple[str, ...] = (), include_point_reproj: bool = True) -> tuple[int, int]:
    """(point, recon) input widths for a given ablation mask."""
    point_gone = {c for cue in dropped for c in _POINT_COLS.get(cue, ())}
    recon_gone = {c for cue in dropped for c in _RECON_COLS.get(cue, ())}
    pf = [f for f in _FULL_POINT_FIELDS if f not in point_gone]
    if not include_point_reproj and "reproj" in pf:
        pf.remove("reproj")
    rf = [f for f in _FULL_RECON_FIELDS if f not in recon_gone]
    return len(pf), len(rf)

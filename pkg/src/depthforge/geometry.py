"""Two-view epipolar geometry and metric reconstruction.

The estimation chain is: robust fundamental-matrix fit (normalized 8-point
inside RANSAC), epipolar outlier removal, then a grid search over focal length
candidates with essential-matrix decomposition, cheirality-based pose
selection, and linear triangulation.  Everything is plain numpy and
deterministic for a fixed config seed.

Depths are expressed in baseline units: the relative translation is scaled to
unit norm, so only depth ratios are meaningful downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCamera,
    DegenerateConfiguration,
    InsufficientMatches,
    NoCheiralPose,
    RejectedPair,
    ZeroDenominator,
)

# Relative singular-value cutoff below which the 8-point system is treated as
# rank deficient (coplanar / collinear / homography-consistent input).
_RANK_TOL = 1e-10

# RANSAC models are evaluated in chunks of this many samples so the linear
# algebra stays batched; adaptive-exit semantics are still per iteration.
_RANSAC_CHUNK = 256

_LO_REFIT_ROUNDS = 10


@dataclass(frozen=True)
class Correspondence:
    """One match: pixel coordinates in frame A and frame B."""

    corr_id: int
    x1: float
    y1: float
    x2: float
    y2: float


@dataclass
class FramePair:
    """Two frames of one video clip plus their point matches."""

    pair_id: str
    width: int
    height: int
    matches: list[Correspondence]


@dataclass
class FundamentalMatrix:
    """Rank-2, unit-Frobenius fundamental matrix with its consensus set."""

    F: np.ndarray
    inlier_ids: np.ndarray


@dataclass
class CameraModel:
    """Pinhole intrinsics shared by both frames; principal point at the image center."""

    focal: float
    cx: float
    cy: float

    def K(self) -> np.ndarray:
        return np.array(
            [[self.focal, 0.0, self.cx], [0.0, self.focal, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass
class RelativePose:
    """Frame-B-from-frame-A rigid motion, X_b = R @ X_a + t, with unit-norm t."""

    R: np.ndarray
    t: np.ndarray


@dataclass
class ReconPoint:
    """One triangulated match with its per-point diagnostics.

    ``reproj`` is the mean of the two per-view pixel reprojection errors,
    ``sampson`` the Sampson distance under the recovered fundamental matrix,
    and ``angle`` the ray angle (radians) at the 3D point between the
    directions to the two camera centers.
    """

    corr_id: int
    x1: float
    y1: float
    x2: float
    y2: float
    X: np.ndarray
    depth_a: float
    depth_b: float
    reproj: float
    sampson: float
    angle: float


@dataclass
class Reconstruction:
    """A reconstructed frame pair.

    ``F`` is None for instances deserialized from the on-disk record, which
    stores only the pose and intrinsics.
    """

    pair_id: str
    camera: CameraModel
    pose: RelativePose
    F: FundamentalMatrix | None
    points: list[ReconPoint]
    mean_reproj: float

    @property
    def width(self) -> float:
        return 2.0 * self.camera.cx

    @property
    def height(self) -> float:
        return 2.0 * self.camera.cy


@dataclass(frozen=True)
class SfmConfig:
    """Thresholds and seeds for the reconstruction chain."""

    tau_f: float = 1.0              # RANSAC inlier threshold on Sampson distance (px^2)
    ransac_iters: int = 2000
    ransac_confidence: float = 0.999
    min_inliers: int = 30
    focal_low: float = 0.3          # grid bounds, multiples of max(width, height)
    focal_high: float = 3.0
    focal_steps: int = 40
    min_cheiral_frac: float = 0.8
    min_median_angle_deg: float = 0.5
    seed: int = 0


def focal_grid(width: int, height: int, cfg: SfmConfig | None = None) -> np.ndarray:
    """Log-spaced focal length candidates in pixels."""
    cfg = cfg or SfmConfig()
    m = float(max(width, height))
    return np.geomspace(cfg.focal_low * m, cfg.focal_high * m, cfg.focal_steps)


def match_arrays(matches: list[Correspondence]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unpack matches into (ids, frame-A points, frame-B points) arrays."""
    ids = np.array([m.corr_id for m in matches], dtype=np.int64)
    p1 = np.array([[m.x1, m.y1] for m in matches], dtype=np.float64)
    p2 = np.array([[m.x2, m.y2] for m in matches], dtype=np.float64)
    return ids, p1, p2


# --- fundamental matrix -----------------------------------------------------


def _normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hartley normalization: centroid to origin, mean distance to sqrt(2).

    Works on (..., m, 2) stacks; returns normalized points, the 3x3
    transforms, and a validity mask (False where all points coincide).
    """
    centroid = pts.mean(axis=-2, keepdims=True)
    centered = pts - centroid
    mean_dist = np.linalg.norm(centered, axis=-1).mean(axis=-1)
    valid = mean_dist > 0.0
    scale = np.where(valid, math.sqrt(2.0) / np.where(valid, mean_dist, 1.0), 1.0)

    lead = pts.shape[:-2]
    T = np.zeros(lead + (3, 3))
    T[..., 0, 0] = scale
    T[..., 1, 1] = scale
    T[..., 0, 2] = -scale * centroid[..., 0, 0]
    T[..., 1, 2] = -scale * centroid[..., 0, 1]
    T[..., 2, 2] = 1.0
    return centered * scale[..., None, None], T, valid


def _eight_point_batch(p1: np.ndarray, p2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalized 8-point fit on (..., m, 2) stacks of matches.

    Returns rank-2, unit-Frobenius F matrices and a validity mask; entries are
    invalid when the linear system is rank deficient.
    """
    n1, T1, v1 = _normalize_points(p1)
    n2, T2, v2 = _normalize_points(p2)
    x1, y1 = n1[..., 0], n1[..., 1]
    x2, y2 = n2[..., 0], n2[..., 1]
    A = np.stack(
        [x2 * x1, x2 * y1, x2, y2 * x1, y2 * y1, y2, x1, y1, np.ones_like(x1)],
        axis=-1,
    )

    _, s, Vh = np.linalg.svd(A, full_matrices=True)
    # A unique null vector needs rank exactly 8.
    valid = v1 & v2 & (s[..., 7] > _RANK_TOL * s[..., 0])
    Fhat = Vh[..., 8, :].reshape(A.shape[:-2] + (3, 3))

    U, sf, Vfh = np.linalg.svd(Fhat)
    sf = sf.copy()
    sf[..., 2] = 0.0
    F = (U * sf[..., None, :]) @ Vfh
    F = np.swapaxes(T2, -1, -2) @ F @ T1

    norm = np.linalg.norm(F, axis=(-2, -1), keepdims=True)
    valid = valid & (norm[..., 0, 0] > 0.0)
    F = F / np.where(norm > 0.0, norm, 1.0)
    # Deterministic sign: the largest-magnitude entry is positive.
    flat = F.reshape(F.shape[:-2] + (9,))
    lead_idx = np.argmax(np.abs(flat), axis=-1)
    signs = np.sign(np.take_along_axis(flat, lead_idx[..., None], axis=-1))[..., 0]
    signs = np.where(signs == 0.0, 1.0, signs)
    F = F * signs[..., None, None]
    return F, valid


def _homogeneous(pts: np.ndarray) -> np.ndarray:
    return np.concatenate([pts, np.ones(pts.shape[:-1] + (1,))], axis=-1)


def _sampson_batch(F: np.ndarray, p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """Sampson distances for F stacks of shape (..., 3, 3) against all matches."""
    x1h = _homogeneous(p1).T                       # (3, n)
    x2h = _homogeneous(p2).T
    l2 = F @ x1h                                   # (..., 3, n) epipolar lines in B
    l1 = np.swapaxes(F, -1, -2) @ x2h              # lines in A
    num = (x2h * l2).sum(axis=-2)
    den = l2[..., 0, :] ** 2 + l2[..., 1, :] ** 2 + l1[..., 0, :] ** 2 + l1[..., 1, :] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        d = num**2 / den
    return np.where(den > 0.0, d, np.inf)


def sampson_distance(F: FundamentalMatrix | np.ndarray, c: Correspondence) -> float:
    """First-order geometric epipolar residual (squared pixels) for one match.

    Raises:
        ZeroDenominator: if both epipolar line gradients vanish for this match.
    """
    mat = F.F if isinstance(F, FundamentalMatrix) else np.asarray(F, dtype=np.float64)
    p1 = np.array([[c.x1, c.y1]])
    p2 = np.array([[c.x2, c.y2]])
    d = _sampson_batch(mat, p1, p2)[0]
    if not np.isfinite(d):
        raise ZeroDenominator(f"Sampson denominator vanished for corr {c.corr_id}")
    return float(d)


def _required_iters(inlier_ratio: float, confidence: float, cap: int) -> int:
    if inlier_ratio >= 1.0:
        return 1
    p_good = inlier_ratio**8
    if p_good <= 1e-12:
        return cap
    need = math.log(1.0 - confidence) / math.log(1.0 - p_good)
    return min(cap, max(1, math.ceil(need)))


def estimate_fundamental(
    matches: list[Correspondence], cfg: SfmConfig | None = None
) -> FundamentalMatrix:
    """Robust fundamental-matrix estimate with its largest consensus set.

    RANSAC draws minimal 8-match samples, scores every candidate by Sampson
    distance at threshold ``cfg.tau_f``, and exits early once the adaptive
    iteration bound for ``cfg.ransac_confidence`` is met.  The best consensus
    set is then refit (and locally re-grown while that enlarges it); the
    returned matrix is the refit on the final consensus set.

    Raises:
        InsufficientMatches: fewer than 8 matches.
        DegenerateConfiguration: no minimal sample admitted a unique solution.
    """
    cfg = cfg or SfmConfig()
    n = len(matches)
    if n < 8:
        raise InsufficientMatches(f"need at least 8 matches, got {n}")

    ids, p1, p2 = match_arrays(matches)
    rng = np.random.default_rng(cfg.seed)

    best_count = 0
    best_mask: np.ndarray | None = None
    required = cfg.ransac_iters
    done = 0
    while done < min(required, cfg.ransac_iters):
        chunk = min(_RANSAC_CHUNK, cfg.ransac_iters - done)
        if n == 8:
            samples = np.broadcast_to(np.arange(8), (chunk, 8))
        else:
            keys = rng.random((chunk, n))
            samples = np.argpartition(keys, 8, axis=1)[:, :8]
        Fc, valid = _eight_point_batch(p1[samples], p2[samples])
        dists = _sampson_batch(Fc, p1, p2)
        masks = dists <= cfg.tau_f
        counts = np.where(valid, masks.sum(axis=1), 0)

        stop = False
        for i in range(chunk):
            if counts[i] > best_count:
                best_count = int(counts[i])
                best_mask = masks[i]
                required = _required_iters(
                    best_count / n, cfg.ransac_confidence, cfg.ransac_iters
                )
            if done + i + 1 >= required:
                stop = True
                break
        done += chunk
        if stop:
            break

    if best_mask is None or best_count < 8:
        raise DegenerateConfiguration("no RANSAC sample produced a valid model")

    # Refit on the consensus set; keep growing while the refit enlarges it.
    mask = best_mask
    F_final: np.ndarray | None = None
    for _ in range(_LO_REFIT_ROUNDS):
        Fr, ok = _eight_point_batch(p1[mask][None], p2[mask][None])
        if not ok[0]:
            break
        F_final = Fr[0]
        new_mask = _sampson_batch(F_final, p1, p2) <= cfg.tau_f
        if new_mask.sum() > mask.sum():
            mask = new_mask
        else:
            break
    if F_final is None:
        raise DegenerateConfiguration("consensus refit is rank deficient")

    return FundamentalMatrix(F=F_final, inlier_ids=np.sort(ids[mask]))


# --- essential matrix and pose ----------------------------------------------


def decompose_essential(E: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """The four (R, t) candidates of an essential matrix, unit-norm t."""
    U, _, Vh = np.linalg.svd(E)
    if np.linalg.det(U) < 0.0:
        U = -U
    if np.linalg.det(Vh) < 0.0:
        Vh = -Vh
    W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    R1 = U @ W @ Vh
    R2 = U @ W.T @ Vh
    t = U[:, 2]
    return [(R1, t), (R1, -t), (R2, t), (R2, -t)]


# --- triangulation ----------------------------------------------------------


def _triangulate_normalized(
    R: np.ndarray, t: np.ndarray, q1: np.ndarray, q2: np.ndarray
) -> np.ndarray:
    """Linear triangulation in normalized camera coordinates.

    ``R``/``t`` are (M, 3, 3) and (M, 3) pose stacks, ``q1``/``q2`` are
    (M, n, 2) normalized image points.  Solves the stacked projection
    equations in least squares; rows with a singular normal system come back
    as NaN.
    """
    M, n = q1.shape[0], q1.shape[1]
    A = np.empty((M, n, 4, 3))
    b = np.zeros((M, n, 4))
    A[..., 0, 0] = -1.0
    A[..., 0, 1] = 0.0
    A[..., 0, 2] = q1[..., 0]
    A[..., 1, 0] = 0.0
    A[..., 1, 1] = -1.0
    A[..., 1, 2] = q1[..., 1]
    A[..., 2, :] = q2[..., 0, None] * R[:, None, 2, :] - R[:, None, 0, :]
    A[..., 3, :] = q2[..., 1, None] * R[:, None, 2, :] - R[:, None, 1, :]
    b[..., 2] = -(q2[..., 0] * t[:, None, 2] - t[:, None, 0])
    b[..., 3] = -(q2[..., 1] * t[:, None, 2] - t[:, None, 1])

    AtA = np.einsum("mnij,mnik->mnjk", A, A)
    Atb = np.einsum("mnij,mni->mnj", A, b)
    det = np.linalg.det(AtA)
    bad = ~np.isfinite(det) | (np.abs(det) < 1e-250)
    if bad.any():
        AtA = AtA.copy()
        AtA[bad] = np.eye(3)
    X = np.linalg.solve(AtA, Atb[..., None])[..., 0]
    if bad.any():
        X[bad] = np.nan
    return X


def _pixel_reproj_errors(
    camera_f: np.ndarray,
    cx: float,
    cy: float,
    R: np.ndarray,
    t: np.ndarray,
    X: np.ndarray,
    p1: np.ndarray,
    p2: np.ndarray,
) -> np.ndarray:
    """Mean of the two per-view pixel reprojection errors, shape (M, n)."""
    f = camera_f[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        u1 = f * X[..., 0] / X[..., 2] + cx
        v1 = f * X[..., 1] / X[..., 2] + cy
        Xb = np.einsum("mij,mnj->mni", R, X) + t[:, None, :]
        u2 = f * Xb[..., 0] / Xb[..., 2] + cx
        v2 = f * Xb[..., 1] / Xb[..., 2] + cy
    e1 = np.hypot(u1 - p1[..., 0], v1 - p1[..., 1])
    e2 = np.hypot(u2 - p2[..., 0], v2 - p2[..., 1])
    return 0.5 * (e1 + e2)


def _ray_angles(R: np.ndarray, t: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Angle (radians) at each point between the rays to the two camera centers."""
    center_b = -R.T @ t
    v1 = -X
    v2 = center_b[None, :] - X
    n1 = np.linalg.norm(v1, axis=-1)
    n2 = np.linalg.norm(v2, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cosang = np.einsum("ni,ni->n", v1, v2) / (n1 * n2)
    return np.arccos(np.clip(cosang, -1.0, 1.0))


def _pose_fundamental(camera: CameraModel, pose: RelativePose) -> np.ndarray:
    """Fundamental matrix implied by known intrinsics and relative pose."""
    t = pose.t
    tx = np.array([[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]])
    Kinv = np.linalg.inv(camera.K())
    F = Kinv.T @ tx @ pose.R @ Kinv
    norm = np.linalg.norm(F)
    return F / norm if norm > 0.0 else F


def triangulate(camera: CameraModel, pose: RelativePose, c: Correspondence) -> ReconPoint:
    """Triangulate one match under a known camera and relative pose.

    The Sampson residual is computed against the fundamental matrix implied by
    the pose and intrinsics.

    Raises:
        BehindCamera: non-positive depth in either view.
    """
    q1 = np.array([[[(c.x1 - camera.cx) / camera.focal, (c.y1 - camera.cy) / camera.focal]]])
    q2 = np.array([[[(c.x2 - camera.cx) / camera.focal, (c.y2 - camera.cy) / camera.focal]]])
    R = pose.R[None]
    t = pose.t[None]
    X = _triangulate_normalized(R, t, q1, q2)[0, 0]
    if not np.all(np.isfinite(X)):
        raise BehindCamera(f"triangulation is degenerate for corr {c.corr_id}")
    depth_a = float(X[2])
    depth_b = float((pose.R @ X + pose.t)[2])
    if depth_a <= 0.0 or depth_b <= 0.0:
        raise BehindCamera(
            f"corr {c.corr_id} has non-positive depth ({depth_a:.4g}, {depth_b:.4g})"
        )
    p1 = np.array([[c.x1, c.y1]])
    p2 = np.array([[c.x2, c.y2]])
    reproj = _pixel_reproj_errors(
        np.array([camera.focal]), camera.cx, camera.cy, R, t, X[None, None], p1[None], p2[None]
    )[0, 0]
    angle = _ray_angles(pose.R, pose.t, X[None])[0]
    samp = _sampson_batch(_pose_fundamental(camera, pose), p1, p2)[0]
    return ReconPoint(
        corr_id=c.corr_id,
        x1=c.x1,
        y1=c.y1,
        x2=c.x2,
        y2=c.y2,
        X=X,
        depth_a=depth_a,
        depth_b=depth_b,
        reproj=float(reproj),
        sampson=float(samp),
        angle=float(angle),
    )


# --- focal search -----------------------------------------------------------


@dataclass
class _FocalSearchResult:
    camera: CameraModel
    pose: RelativePose
    X: np.ndarray            # (n, 3), NaN where triangulation failed
    depth_a: np.ndarray
    depth_b: np.ndarray
    cheiral: np.ndarray      # bool (n,)
    reproj: np.ndarray       # (n,) pixel errors
    mean_reproj: float


def _search_focal_full(
    F: np.ndarray,
    p1: np.ndarray,
    p2: np.ndarray,
    width: int,
    height: int,
    grid: np.ndarray,
    cfg: SfmConfig,
) -> _FocalSearchResult:
    n = p1.shape[0]
    cx, cy = width / 2.0, height / 2.0
    G = grid.shape[0]

    R_all = np.empty((G, 4, 3, 3))
    t_all = np.empty((G, 4, 3))
    for gi, f in enumerate(grid):
        K = np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])
        E = K.T @ F @ K
        for ci, (R, t) in enumerate(decompose_essential(E)):
            R_all[gi, ci] = R
            t_all[gi, ci] = t

    q1 = (p1[None] - (cx, cy)) / grid[:, None, None]     # (G, n, 2)
    q2 = (p2[None] - (cx, cy)) / grid[:, None, None]
    q1_rep = np.repeat(q1, 4, axis=0)
    q2_rep = np.repeat(q2, 4, axis=0)

    X = _triangulate_normalized(
        R_all.reshape(-1, 3, 3), t_all.reshape(-1, 3), q1_rep, q2_rep
    ).reshape(G, 4, n, 3)
    za = X[..., 2]
    zb = np.einsum("gcij,gcnj->gcni", R_all, X)[..., 2] + t_all[..., None, 2]
    finite = np.all(np.isfinite(X), axis=-1)
    cheiral = finite & (za > 0.0) & (zb > 0.0)
    counts = cheiral.sum(axis=-1)                         # (G, 4)

    best_cand = np.argmax(counts, axis=1)                 # ties: lowest index
    gsel = np.arange(G)
    counts_sel = counts[gsel, best_cand]
    X_sel = X[gsel, best_cand]
    cheiral_sel = cheiral[gsel, best_cand]
    R_sel = R_all[gsel, best_cand]
    t_sel = t_all[gsel, best_cand]

    admissible = (counts_sel >= cfg.min_cheiral_frac * n - 1e-9) & (counts_sel > 0)
    if not admissible.any():
        raise NoCheiralPose(
            f"best candidate places only {counts.max()}/{n} points in front of both cameras"
        )

    errors = _pixel_reproj_errors(grid, cx, cy, R_sel, t_sel, X_sel, p1[None], p2[None])
    masked = np.where(cheiral_sel, errors, np.nan)
    with np.errstate(invalid="ignore"):
        mean_reproj = np.nanmean(masked, axis=1)
    mean_reproj = np.where(np.isfinite(mean_reproj) & admissible, mean_reproj, np.inf)
    win = int(np.argmin(mean_reproj))
    if not np.isfinite(mean_reproj[win]):
        raise NoCheiralPose("no admissible focal candidate yields finite reprojection")

    return _FocalSearchResult(
        camera=CameraModel(focal=float(grid[win]), cx=cx, cy=cy),
        pose=RelativePose(R=R_sel[win], t=t_sel[win]),
        X=X_sel[win],
        depth_a=za[win, best_cand[win]],
        depth_b=zb[win, best_cand[win]],
        cheiral=cheiral_sel[win],
        reproj=errors[win],
        mean_reproj=float(mean_reproj[win]),
    )


def search_focal(
    F: FundamentalMatrix | np.ndarray,
    pair: FramePair,
    grid: np.ndarray | None = None,
    cfg: SfmConfig | None = None,
) -> tuple[CameraModel, RelativePose]:
    """Pick the focal length (and pose) that minimizes mean reprojection error.

    For every grid candidate the essential matrix is decomposed, the pose with
    the highest cheirality count is kept, and candidates that leave fewer than
    ``cfg.min_cheiral_frac`` of the points in front of both cameras are
    discarded.

    Raises:
        NoCheiralPose: no candidate passes the cheirality fraction.
    """
    cfg = cfg or SfmConfig()
    mat = F.F if isinstance(F, FundamentalMatrix) else np.asarray(F, dtype=np.float64)
    if grid is None:
        grid = focal_grid(pair.width, pair.height, cfg)
    _, p1, p2 = match_arrays(pair.matches)
    res = _search_focal_full(mat, p1, p2, pair.width, pair.height, grid, cfg)
    return res.camera, res.pose


# --- full reconstruction ----------------------------------------------------


def _validate_pair(pair: FramePair) -> None:
    if pair.width <= 0 or pair.height <= 0:
        raise ValueError(f"{pair.pair_id}: non-positive image size")
    if not pair.matches:
        raise ValueError(f"{pair.pair_id}: no matches")
    ids = [m.corr_id for m in pair.matches]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{pair.pair_id}: duplicate corr ids")
    for m in pair.matches:
        coords = (m.x1, m.y1, m.x2, m.y2)
        if not all(math.isfinite(v) for v in coords):
            raise ValueError(f"{pair.pair_id}: non-finite coordinates at corr {m.corr_id}")
        if not (0.0 <= m.x1 < pair.width and 0.0 <= m.x2 < pair.width):
            raise ValueError(f"{pair.pair_id}: x out of bounds at corr {m.corr_id}")
        if not (0.0 <= m.y1 < pair.height and 0.0 <= m.y2 < pair.height):
            raise ValueError(f"{pair.pair_id}: y out of bounds at corr {m.corr_id}")


def reconstruct_pair(
    pair: FramePair, cfg: SfmConfig | None = None, grid: np.ndarray | None = None
) -> Reconstruction:
    """Reconstruct one frame pair end to end.

    Matches outside the RANSAC consensus are dropped before reconstruction
    (the emitted point set never contains epipolar outliers), points behind
    either camera are excluded, and pairs with near-zero parallax are
    rejected.

    Raises:
        RejectedPair: with reason ``insufficient_matches``,
            ``degenerate_configuration``, ``no_cheiral_pose``, or
            ``low_parallax``.
        ValueError: malformed input pair.
    """
    cfg = cfg or SfmConfig()
    _validate_pair(pair)

    try:
        fm = estimate_fundamental(pair.matches, cfg)
    except InsufficientMatches as e:
        raise RejectedPair("insufficient_matches", str(e)) from e
    except DegenerateConfiguration as e:
        raise RejectedPair("degenerate_configuration", str(e)) from e

    keep = set(int(i) for i in fm.inlier_ids)
    survivors = sorted((m for m in pair.matches if m.corr_id in keep), key=lambda m: m.corr_id)
    if len(survivors) < cfg.min_inliers:
        raise RejectedPair(
            "insufficient_matches",
            f"{len(survivors)} consensus matches < min_inliers={cfg.min_inliers}",
        )

    ids, p1, p2 = match_arrays(survivors)
    if grid is None:
        grid = focal_grid(pair.width, pair.height, cfg)
    try:
        res = _search_focal_full(fm.F, p1, p2, pair.width, pair.height, grid, cfg)
    except NoCheiralPose as e:
        raise RejectedPair("no_cheiral_pose", str(e)) from e

    mask = res.cheiral
    if not mask.any():
        raise RejectedPair("no_cheiral_pose", "no point passed cheirality")

    angles = np.full(mask.shape, np.nan)
    angles[mask] = _ray_angles(res.pose.R, res.pose.t, res.X[mask])
    median_angle = float(np.median(angles[mask]))
    if math.degrees(median_angle) < cfg.min_median_angle_deg:
        raise RejectedPair(
            "low_parallax",
            f"median ray angle {math.degrees(median_angle):.4f} deg "
            f"< {cfg.min_median_angle_deg} deg",
        )

    samp = _sampson_batch(fm.F, p1, p2)
    points = [
        ReconPoint(
            corr_id=int(ids[i]),
            x1=float(p1[i, 0]),
            y1=float(p1[i, 1]),
            x2=float(p2[i, 0]),
            y2=float(p2[i, 1]),
            X=res.X[i].copy(),
            depth_a=float(res.depth_a[i]),
            depth_b=float(res.depth_b[i]),
            reproj=float(res.reproj[i]),
            sampson=float(samp[i]),
            angle=float(angles[i]),
        )
        for i in range(len(survivors))
        if mask[i]
    ]
    mean_reproj = float(np.mean([p.reproj for p in points]))
    return Reconstruction(
        pair_id=pair.pair_id,
        camera=res.camera,
        pose=res.pose,
        F=fm,
        points=points,
        mean_reproj=mean_reproj,
    )

"""Exception taxonomy shared across the library.

Every failure mode that callers are expected to branch on gets its own class;
batch drivers catch :class:`DepthForgeError` and record the reason instead of
aborting the run.
"""

from __future__ import annotations


class DepthForgeError(Exception):
    """Base class for all library-specific failures."""


# --- two-view geometry ---


class InsufficientMatches(DepthForgeError):
    """Fewer correspondences than the estimator or policy requires."""


class DegenerateConfiguration(DepthForgeError):
    """The linear system is rank deficient (coplanar/collinear points, pure rotation)."""


class ZeroDenominator(DepthForgeError):
    """Sampson denominator vanished; the residual is undefined for this match."""


class NoCheiralPose(DepthForgeError):
    """No focal/pose candidate places enough points in front of both cameras."""


class BehindCamera(DepthForgeError):
    """Triangulated point has non-positive depth in at least one view."""


class RejectedPair(DepthForgeError):
    """A frame pair was dropped by the reconstruction policy.

    ``reason`` is a stable machine-readable code used by batch reports.
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


# --- synthetic scenes ---


class FrustumExhausted(DepthForgeError):
    """Could not place the requested number of jointly visible points."""


class NoEligiblePairs(DepthForgeError):
    """Every point pair falls inside the ordering margin; quality is undefined."""


# --- cue extraction ---


class NonFiniteCue(DepthForgeError):
    """A cue value came out NaN or infinite."""


class EmptyCues(DepthForgeError):
    """Cue matrix has no rows; a score cannot be formed."""


# --- quality network ---


class DimMismatch(DepthForgeError):
    """Cue dimensionality does not match the model architecture."""


class TiedGroundTruth(DepthForgeError):
    """Ranking loss is undefined when both items share one quality value."""


class NonFiniteGradient(DepthForgeError):
    """Backpropagation produced a NaN or infinite gradient."""


# --- evaluation ---


class EmptyCorpus(DepthForgeError):
    """An operation that needs at least one scored item received none."""


class MissingPrediction(DepthForgeError):
    """An annotated pair has no matching prediction."""


# --- dataset pipeline ---


class ModelArchMismatch(DepthForgeError):
    """Stored model architecture disagrees with the cues it is asked to score."""


class TargetUnreachable(DepthForgeError):
    """No retention threshold achieves the requested mean quality."""

"""Azimuth discretization, pose prediction rules and angular accuracy metrics.

Angles are in degrees unless a name says otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PoseBinning:
    """``num_bins`` equal half-open arcs ``[i*w, (i+1)*w)`` of the viewing circle."""

    num_bins: int = 16

    def __post_init__(self):
        if self.num_bins < 1:
            raise ValueError("need at least one pose bin")

    @property
    def bin_width(self) -> float:
        return 360.0 / self.num_bins

    @property
    def centers(self) -> np.ndarray:
        return np.arange(self.num_bins) * self.bin_width + self.bin_width / 2.0

    def center(self, i):
        return np.asarray(i) * self.bin_width + self.bin_width / 2.0


@dataclass(frozen=True)
class LossWeights:
    category: float = 1.0
    pose: float = 1.0

    def __post_init__(self):
        if self.category < 0 or self.pose < 0:
            raise ValueError("loss weights must be nonnegative")


def wrap360(angle):
    return np.mod(angle, 360.0)


def bin_of(angle, binning: PoseBinning = PoseBinning()):
    """Bin index of ``angle`` (scalar or array), after reducing it mod 360."""
    a = wrap360(np.asarray(angle, dtype=np.float64))
    idx = np.floor(a / binning.bin_width).astype(np.int64)
    # mod can round -tiny up to exactly 360.0
    idx = np.minimum(idx, binning.num_bins - 1)
    return int(idx) if idx.ndim == 0 else idx


def _check_dist(dist: np.ndarray, binning: PoseBinning) -> np.ndarray:
    dist = np.asarray(dist, dtype=np.float64)
    if dist.shape[-1] != binning.num_bins:
        raise ValueError(f"distribution has {dist.shape[-1]} entries, binning has {binning.num_bins}")
    return dist


def argmax_pose(dist, binning: PoseBinning = PoseBinning()):
    """Center of the most probable bin; ties go to the lowest index. Works row-wise."""
    dist = _check_dist(dist, binning)
    out = binning.center(dist.argmax(axis=-1))
    return float(out) if out.ndim == 0 else out


def expected_pose(dist, binning: PoseBinning = PoseBinning(), circular: bool = False):
    """Probability-weighted bin center.

    The default is the plain linear expectation ``sum_i p_i * center_i``, which
    ignores the 0/360 seam (mass split between the first and last bins averages
    to 180). ``circular=True`` averages unit vectors instead.
    """
    dist = _check_dist(dist, binning)
    c = binning.centers
    if not circular:
        out = dist @ c
    else:
        r = np.deg2rad(c)
        out = wrap360(np.rad2deg(np.arctan2(dist @ np.sin(r), dist @ np.cos(r))))
    return float(out) if np.ndim(out) == 0 else out


def abs_angular_error(estimate, truth):
    """Geodesic distance on the circle, in [0, 180]."""
    d = wrap360(np.asarray(estimate, dtype=np.float64) - np.asarray(truth, dtype=np.float64))
    out = np.minimum(d, 360.0 - d)
    return float(out) if out.ndim == 0 else out


def aaai_accuracy(theta_i, theta_j):
    """``1 - geodesic distance / 180``; 1 for agreeing angles, 0 for antipodal ones."""
    out = 1.0 - np.asarray(abs_angular_error(theta_i, theta_j)) / 180.0
    return float(out) if out.ndim == 0 else out


def threshold_accuracy(errors, tau: float) -> float:
    """Fraction of errors strictly below ``tau``."""
    if tau <= 0:
        raise ValueError("threshold must be positive")
    errors = np.asarray(errors, dtype=np.float64).ravel()
    if errors.size == 0:
        raise ValueError("no errors to score")
    return float(np.mean(errors < tau))


def joint_loss(loss_c: float, loss_p: float, w: LossWeights = LossWeights()) -> float:
    if not (np.isfinite(loss_c) and np.isfinite(loss_p)):
        raise ValueError("joint loss needs finite task losses")
    return w.category * loss_c + w.pose * loss_p


def circular_mean(angles, weights=None) -> float:
    """Direction of the (weighted) sum of unit vectors at ``angles``."""
    r = np.deg2rad(np.asarray(angles, dtype=np.float64))
    w = np.ones_like(r) if weights is None else np.asarray(weights, dtype=np.float64)
    return float(wrap360(np.rad2deg(np.arctan2(np.sum(w * np.sin(r)), np.sum(w * np.cos(r))))))


def pose_scores(predicted, truth) -> dict[str, float]:
    """Mean AAAI accuracy, MAE and the two threshold accuracies of a set of predictions."""
    err = np.atleast_1d(abs_angular_error(predicted, truth))
    return {
        "aaai": float(np.mean(1.0 - err / 180.0)),
        "mae": float(np.mean(err)),
        "acc_22_5": threshold_accuracy(err, 22.5),
        "acc_45": threshold_accuracy(err, 45.0),
    }

"""Sequence evaluation metrics: MPJPE, P-MPJPE, Accel.Err, Col.Rate@C.

All position metrics are unit-agnostic (output in the input length unit);
the CLI feeds millimeters. Collision rates count frames whose penetrating
vertex count exceeds a threshold C.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body import SkinnedModel
from .collision import self_intersection_count
from .errors import ValidationError


@dataclass
class MetricsReport:
    """The four headline sequence metrics."""

    mpjpe: float
    p_mpjpe: float
    accel_err: float
    col_rate_at: dict  # C -> percentage of frames

    def to_dict(self) -> dict:
        return {
            "mpjpe": self.mpjpe,
            "p_mpjpe": self.p_mpjpe,
            "accel_err": self.accel_err,
            "col_rate_at": {str(c): v for c, v in sorted(self.col_rate_at.items())},
        }


def _check_joint_arrays(pred, gt, min_frames=1):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 3 or pred.shape[2] != 3:
        raise ValidationError(
            f"metrics: joint arrays must share shape (T, J, 3); got {pred.shape} vs {gt.shape}"
        )
    if pred.shape[0] < min_frames:
        raise ValidationError(f"metrics: need at least {min_frames} frames, got {pred.shape[0]}")
    return pred, gt


def mpjpe(pred_joints, gt_joints, root_align: bool = True) -> float:
    """Mean per-joint position error over frames and joints.

    Parameters
    ----------
    pred_joints, gt_joints : ndarray, (T, J, 3)
    root_align : bool
        Subtract joint 0 from both before comparing (default on).

    Returns
    -------
    float, in the input length unit
    """
    pred, gt = _check_joint_arrays(pred_joints, gt_joints)
    if root_align:
        pred = pred - pred[:, :1]
        gt = gt - gt[:, :1]
    return float(np.linalg.norm(pred - gt, axis=2).mean())


def _similarity_align(p, g):
    """Best s R p + t onto g in least squares; p, g are (J, 3)."""
    mu_p = p.mean(axis=0)
    mu_g = g.mean(axis=0)
    X = p - mu_p
    Y = g - mu_g
    A = X.T @ Y
    U, S, Vt = np.linalg.svd(A)
    if S[1] <= 1e-12 * max(S[0], 1e-300):
        raise ValidationError("p_mpjpe: degenerate (collinear) joint set")
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ D @ U.T
    denom = (X * X).sum()
    s = np.trace(np.diag(S) @ D) / denom
    t = mu_g - s * R @ mu_p
    return s * p @ R.T + t


def p_mpjpe(pred_joints, gt_joints) -> float:
    """MPJPE after per-frame similarity Procrustes alignment of the prediction.

    Parameters
    ----------
    pred_joints, gt_joints : ndarray, (T, J, 3), J >= 3 non-collinear

    Returns
    -------
    float, in the input length unit
    """
    pred, gt = _check_joint_arrays(pred_joints, gt_joints)
    if pred.shape[1] < 3:
        raise ValidationError("p_mpjpe: need at least 3 joints")
    errs = []
    for p, g in zip(pred, gt):
        aligned = _similarity_align(p, g)
        errs.append(np.linalg.norm(aligned - g, axis=1).mean())
    return float(np.mean(errs))


def accel_err(pred_joints, gt_joints, fps: float) -> float:
    """Mean acceleration error of second central differences.

    a_t = (p_{t+1} - 2 p_t + p_{t-1}) fps^2; mean over interior frames and
    joints of ||a_pred - a_gt||.

    Parameters
    ----------
    pred_joints, gt_joints : ndarray, (T, J, 3), T >= 3
    fps : float

    Returns
    -------
    float, input length unit per second squared
    """
    pred, gt = _check_joint_arrays(pred_joints, gt_joints, min_frames=3)
    if fps <= 0:
        raise ValidationError("accel_err: fps must be positive")
    d2 = lambda x: (x[2:] - 2.0 * x[1:-1] + x[:-2]) * fps * fps
    return float(np.linalg.norm(d2(pred) - d2(gt), axis=2).mean())


def collision_counts(model: SkinnedModel, poses) -> np.ndarray:
    """Penetrating-vertex count per frame, (T,) int."""
    return np.array(
        [self_intersection_count(model, theta).count for theta in poses], dtype=np.int64
    )


def col_rate_from_counts(counts, C: int) -> float:
    """Percentage of frames with more than C penetrating vertices."""
    counts = np.asarray(counts)
    if counts.size == 0:
        raise ValidationError("col_rate: empty sequence")
    return float(100.0 * np.count_nonzero(counts > C) / counts.size)


def col_rate(poses, model: SkinnedModel, C: int) -> float:
    """Col.Rate@C of a pose sequence.

    Parameters
    ----------
    poses : iterable of (d,) pose vectors
    model : SkinnedModel
    C : int
        Per-frame vertex-count threshold.

    Returns
    -------
    float, percent
    """
    return col_rate_from_counts(collision_counts(model, poses), C)


def sequence_metrics(pred_joints, gt_joints, fps: float, counts,
                     thresholds=(0,)) -> MetricsReport:
    """Bundle the four metrics for aligned joint sequences.

    Parameters
    ----------
    pred_joints, gt_joints : ndarray, (T, J, 3)
    fps : float
    counts : ndarray, (T,)
        Per-frame penetrating vertex counts of the predicted sequence.
    thresholds : iterable of int
        C values for Col.Rate@C.

    Returns
    -------
    MetricsReport
    """
    return MetricsReport(
        mpjpe=mpjpe(pred_joints, gt_joints),
        p_mpjpe=p_mpjpe(pred_joints, gt_joints),
        accel_err=accel_err(pred_joints, gt_joints, fps),
        col_rate_at={int(c): col_rate_from_counts(counts, int(c)) for c in thresholds},
    )

"""MPJPE / P-MPJPE / Accel.Err / Col.Rate against closed-form cases and oracles."""

import numpy as np
import pytest

from bodyflow import (
    ValidationError,
    accel_err,
    col_rate,
    col_rate_from_counts,
    collision_counts,
    mpjpe,
    p_mpjpe,
    sequence_metrics,
    zero_pose,
)
from bodyflow.rotations import axis_angle_to_matrix

from conftest import collision_pose


def _random_joints(rng, T=6, J=16):
    return rng.standard_normal((T, J, 3))


# ====== MPJPE ======


def test_mpjpe_identical_zero():
    rng = np.random.default_rng(0)
    g = _random_joints(rng)
    assert mpjpe(g, g) == 0.0
    assert mpjpe(g, g, root_align=False) == 0.0


def test_mpjpe_constant_offset():
    rng = np.random.default_rng(1)
    g = _random_joints(rng)
    p = g + np.array([6.0, 8.0, 0.0]) * 1e-3
    assert abs(mpjpe(p, g, root_align=False) - 0.01) < 1e-15
    assert mpjpe(p, g, root_align=True) < 1e-15  # offset cancels


def test_mpjpe_hand_value():
    g = np.zeros((1, 3, 3))
    p = np.zeros((1, 3, 3))
    p[0, 1] = [3.0, 4.0, 0.0]  # joint 1 off by 5; root and joint 2 exact
    assert abs(mpjpe(p, g, root_align=False) - 5.0 / 3.0) < 1e-15


def test_mpjpe_shape_mismatch():
    with pytest.raises(ValidationError):
        mpjpe(np.zeros((2, 4, 3)), np.zeros((2, 5, 3)))
    with pytest.raises(ValidationError):
        mpjpe(np.zeros((0, 4, 3)), np.zeros((0, 4, 3)))


# ====== P-MPJPE ======


def test_p_mpjpe_similarity_invariance():
    rng = np.random.default_rng(2)
    g = _random_joints(rng, T=4)
    R = axis_angle_to_matrix(np.array([0.4, -1.1, 0.8]))
    p = 1.7 * g @ R.T + np.array([5.0, -3.0, 2.0])
    assert p_mpjpe(p, g) < 1e-9
    assert p_mpjpe(g, g) < 1e-15


def test_p_mpjpe_matches_reference_procrustes():
    rng = np.random.default_rng(3)
    g = _random_joints(rng, T=5)
    p = g + 0.1 * rng.standard_normal(g.shape)

    # independent Kabsch-with-scale per frame
    errs = []
    for pf, gf in zip(p, g):
        X = pf - pf.mean(axis=0)
        Y = gf - gf.mean(axis=0)
        U, S, Vt = np.linalg.svd(X.T @ Y)
        d = np.sign(np.linalg.det(Vt.T @ U.T))
        S_adj = S.copy()
        S_adj[-1] *= d
        D = np.diag([1.0, 1.0, d])
        R = Vt.T @ D @ U.T
        s = S_adj.sum() / (X * X).sum()
        aligned = s * X @ R.T + gf.mean(axis=0)
        errs.append(np.linalg.norm(aligned - gf, axis=1).mean())
    assert abs(p_mpjpe(p, g) - np.mean(errs)) < 1e-9


def test_p_mpjpe_never_exceeds_root_aligned_mpjpe():
    rng = np.random.default_rng(4)
    for _ in range(10):
        g = _random_joints(rng, T=3)
        p = g + 0.3 * rng.standard_normal(g.shape)
        assert p_mpjpe(p, g) <= mpjpe(p, g, root_align=True) + 1e-12


def test_p_mpjpe_degenerate_joints():
    t = np.linspace(0, 1, 5)
    collinear = np.stack([t, 2 * t, -t], axis=1)[None, :, :]
    rng = np.random.default_rng(5)
    p = rng.standard_normal(collinear.shape)
    with pytest.raises(ValidationError, match="collinear"):
        p_mpjpe(p, collinear)
    with pytest.raises(ValidationError, match="3 joints"):
        p_mpjpe(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)))


# ====== Accel.Err ======


def test_accel_identical_and_offset():
    rng = np.random.default_rng(6)
    g = _random_joints(rng, T=8)
    assert accel_err(g, g, fps=30.0) == 0.0
    assert accel_err(g + 5.0, g, fps=30.0) < 1e-12  # affine terms vanish
    drift = np.arange(8)[:, None, None] * np.array([1.0, 0.0, 0.0])
    assert accel_err(g + drift, g, fps=30.0) < 1e-11


def test_accel_quadratic_hand_value():
    # pred = gt + t^2 (1,0,0): second difference is exactly 2 per frame
    g = np.zeros((6, 4, 3))
    t = np.arange(6, dtype=np.float64)
    p = g.copy()
    p[:, :, 0] += (t ** 2)[:, None]
    assert abs(accel_err(p, g, fps=1.0) - 2.0) < 1e-12
    assert abs(accel_err(p, g, fps=2.0) - 8.0) < 1e-11


def test_accel_needs_three_frames():
    with pytest.raises(ValidationError):
        accel_err(np.zeros((2, 4, 3)), np.zeros((2, 4, 3)), fps=30.0)
    with pytest.raises(ValidationError):
        accel_err(np.zeros((5, 4, 3)), np.zeros((5, 4, 3)), fps=0.0)


# ====== Col.Rate ======


def test_col_rate_from_counts():
    counts = np.array([0, 3, 0, 7, 1, 0, 0, 0, 0, 12])
    assert col_rate_from_counts(counts, 0) == 40.0
    assert col_rate_from_counts(counts, 2) == 30.0
    assert col_rate_from_counts(counts, 100) == 0.0
    with pytest.raises(ValidationError):
        col_rate_from_counts(np.empty(0), 0)


def test_col_rate_on_model_sequence(model):
    rest = zero_pose(model)
    dirty = collision_pose(model, "arm_into_torso")
    poses = [rest, dirty, rest, rest, dirty]
    counts = collision_counts(model, poses)
    assert counts[0] == 0 and counts[2] == 0 and counts[3] == 0
    assert counts[1] > 0 and counts[4] > 0
    assert col_rate(poses, model, 0) == 40.0
    assert col_rate(poses, model, int(counts.max())) == 0.0


def test_sequence_metrics_bundle():
    rng = np.random.default_rng(7)
    g = _random_joints(rng, T=5)
    p = g + 0.05 * rng.standard_normal(g.shape)
    counts = np.array([0, 2, 0, 0, 5])
    report = sequence_metrics(p, g, fps=30.0, counts=counts, thresholds=(0, 3))
    assert report.mpjpe == mpjpe(p, g)
    assert report.p_mpjpe == p_mpjpe(p, g)
    assert report.accel_err == accel_err(p, g, 30.0)
    assert report.col_rate_at == {0: 40.0, 3: 20.0}
    d = report.to_dict()
    assert d["col_rate_at"] == {"0": 40.0, "3": 20.0}
    assert all(v >= 0 for v in (d["mpjpe"], d["p_mpjpe"], d["accel_err"]))

"""Damped least-squares projection and the relative-error probe."""

import numpy as np
import pytest

from bodyflow import (
    NumericalError,
    ProjectionConfig,
    ValidationError,
    pose_jacobian,
    project_velocity,
    relative_error,
    sample_surface,
    skin_vertices,
    vertex_jacobian,
    zero_pose,
)

from conftest import family_pose


def _model_system(model, S=120, seed=7, pose_seed=31):
    rng = np.random.default_rng(pose_seed)
    theta = family_pose(model, rng)
    s = sample_surface(model, S, seed)
    return theta, pose_jacobian(model, theta, s.face, s.bary)


def test_zero_field_gives_zero_velocity(model):
    _, J = _model_system(model)
    f = np.zeros(J.shape[0])
    for cfg in (ProjectionConfig(damping=0.0, solver="qr"), ProjectionConfig()):
        assert np.allclose(project_velocity(J, f, cfg), 0.0)


def test_consistent_system_recovered_exactly(model):
    _, J = _model_system(model)
    rng = np.random.default_rng(1)
    v = rng.standard_normal(J.shape[1])
    v_hat = project_velocity(J, J @ v, ProjectionConfig(damping=0.0, solver="qr"))
    assert np.linalg.norm(v_hat - v) / np.linalg.norm(v) < 1e-10


def test_damped_solution_matches_normal_equations():
    rng = np.random.default_rng(5)
    J = rng.standard_normal((3000, 51))
    f = rng.standard_normal(3000)
    lam = 1e-8
    v = project_velocity(J, f, ProjectionConfig(damping=lam, solver="svd"))
    ref = np.linalg.solve(J.T @ J + lam * np.eye(51), J.T @ f)
    assert np.linalg.norm(v - ref) / np.linalg.norm(ref) < 1e-8


def test_singular_jacobian_raises_without_damping():
    rng = np.random.default_rng(2)
    J = rng.standard_normal((300, 20))
    J[:, 7] = J[:, 3]  # exact rank deficiency
    f = rng.standard_normal(300)
    with pytest.raises(NumericalError, match="singular Jacobian; enable damping"):
        project_velocity(J, f, ProjectionConfig(damping=0.0, solver="qr"))
    # the damped path stays finite on the same system
    v = project_velocity(J, f, ProjectionConfig(damping=1e-8))
    assert np.all(np.isfinite(v))


def test_damping_continuity(model):
    _, J = _model_system(model)
    rng = np.random.default_rng(3)
    f = rng.standard_normal(J.shape[0])
    v_qr = project_velocity(J, f, ProjectionConfig(damping=0.0, solver="qr"))
    v_svd = project_velocity(J, f, ProjectionConfig(damping=1e-12, solver="svd"))
    assert np.linalg.norm(v_qr - v_svd) < 1e-6


def test_scale_equivariance(model):
    _, J = _model_system(model)
    rng = np.random.default_rng(4)
    f = rng.standard_normal(J.shape[0])
    cfg = ProjectionConfig(damping=0.0, solver="qr")
    a = project_velocity(J, 3.7 * f, cfg)
    b = 3.7 * project_velocity(J, f, cfg)
    assert np.max(np.abs(a - b)) < 1e-12


def test_return_info_singular_values(model):
    _, J = _model_system(model)
    rng = np.random.default_rng(6)
    f = rng.standard_normal(J.shape[0])
    s_true = np.linalg.svd(J, compute_uv=False)
    for cfg in (ProjectionConfig(damping=0.0, solver="qr"), ProjectionConfig()):
        _, info = project_velocity(J, f, cfg, return_info=True)
        assert abs(info["max_singular"] - s_true[0]) < 1e-9 * s_true[0]
        assert abs(info["min_singular"] - s_true[-1]) < 1e-9 * s_true[0]


def test_validation_errors():
    rng = np.random.default_rng(0)
    J = rng.standard_normal((30, 10))
    with pytest.raises(ValidationError):
        project_velocity(J, np.zeros(29))
    with pytest.raises(ValidationError):
        project_velocity(rng.standard_normal((9, 10)), np.zeros(9))
    with pytest.raises(ValidationError):
        ProjectionConfig(damping=-1.0)
    with pytest.raises(ValidationError):
        ProjectionConfig(damping=1e-3, solver="qr")
    with pytest.raises(ValidationError):
        ProjectionConfig(solver="cholesky")


def test_relative_error_linear_regime(model):
    theta = zero_pose(model)
    rng = np.random.default_rng(8)
    delta = rng.standard_normal(model.dim)
    delta *= 1e-6 / np.linalg.norm(delta)
    # linearity first: at this magnitude J*delta must match the actual
    # displacement, otherwise a small RE would not mean much
    J = vertex_jacobian(model, theta)
    disp = (skin_vertices(model, theta + delta) - skin_vertices(model, theta)).ravel()
    assert np.max(np.abs(J @ delta - disp)) < 1e-9
    assert relative_error(model, theta, delta) < 1e-3


def test_relative_error_magnitude_ordering(model):
    theta = zero_pose(model)
    rng = np.random.default_rng(9)
    direction = rng.standard_normal(model.dim)
    direction /= np.linalg.norm(direction)
    re_small = relative_error(model, theta, 1e-2 * direction)
    re_large = relative_error(model, theta, 1e-1 * direction)
    assert re_small < 1.5e-1
    assert re_large > 3.0 * re_small


def test_relative_error_improves_with_samples(model):
    theta = zero_pose(model)
    rng = np.random.default_rng(10)
    direction = rng.standard_normal(model.dim)
    direction /= np.linalg.norm(direction)
    delta = 1e-2 * direction
    med = []
    for S in (100, 1000):
        res = [relative_error(model, theta, delta, S=S, seed=k) for k in range(5)]
        med.append(np.median(res))
    assert med[1] < med[0]


def test_relative_error_rejects_zero_delta(model):
    with pytest.raises(ValidationError):
        relative_error(model, zero_pose(model), np.zeros(model.dim))

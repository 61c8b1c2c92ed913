"""Damped least-squares projection of coordinate velocities onto pose space.

The projection solves argmin_v ||J v - f||^2 + lam ||v||^2 for the stacked
(3S,) field f and the (3S, d) skinning Jacobian J. With lam = 0 this is the
Moore-Penrose solution, computed by QR; with lam > 0 the SVD filter
s / (s^2 + lam) is applied, which keeps the map bounded at kinematic
singularities (straight limbs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body import SkinnedModel, check_pose, pose_jacobian, skin_vertices, vertex_jacobian
from .errors import NumericalError, ValidationError
from .sampling import SampleSet, evaluate_attachments, sample_surface


@dataclass
class ProjectionConfig:
    """How to solve the least-squares projection.

    Attributes
    ----------
    damping : float
        Tikhonov weight lam >= 0. 0 selects a plain QR solve.
    solver : str
        "qr" or "svd". QR requires damping == 0.
    min_singular_ratio : float
        Rank-deficiency threshold: with damping == 0, a smallest singular
        value below this fraction of the largest raises NumericalError.
    """

    damping: float = 1e-8
    solver: str = "svd"
    min_singular_ratio: float = 1e-12

    def __post_init__(self):
        if self.damping < 0:
            raise ValidationError("projection: damping must be non-negative")
        if self.solver not in ("qr", "svd"):
            raise ValidationError(f"projection: unknown solver '{self.solver}'")
        if self.solver == "qr" and self.damping != 0.0:
            raise ValidationError("projection: QR solver supports damping = 0 only")


def project_velocity(J: np.ndarray, f: np.ndarray, cfg: ProjectionConfig = None,
                     return_info: bool = False):
    """Pose-space velocity best reproducing the sampled field f.

    Parameters
    ----------
    J : ndarray, (3S, d)
        Skinning Jacobian at the current pose, 3S >= d.
    f : ndarray, (3S,)
        Stacked coordinate-space velocities at the samples.
    cfg : ProjectionConfig, optional
        Defaults to SVD with damping 1e-8.
    return_info : bool
        Also return {"min_singular", "max_singular"} of J.

    Returns
    -------
    ndarray, (d,), or (ndarray, dict) with return_info

    Raises
    ------
    NumericalError
        Rank-deficient J with damping 0.
    """
    if cfg is None:
        cfg = ProjectionConfig()
    J = np.asarray(J, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64).ravel()
    if J.ndim != 2 or f.shape[0] != J.shape[0]:
        raise ValidationError(f"projection: J is {J.shape}, f has {f.shape[0]} rows")
    if J.shape[0] < J.shape[1]:
        raise ValidationError("projection: system must be over-constrained (3S >= d)")
    if cfg.solver == "qr" or cfg.damping == 0.0:
        q, r = np.linalg.qr(J)
        diag = np.abs(np.diag(r))
        if diag.min() < cfg.min_singular_ratio * diag.max():
            raise NumericalError("singular Jacobian; enable damping")
        v = np.linalg.solve(r, q.T @ f)
        if not return_info:
            return v
        # R shares J's singular values and is only d x d
        s = np.linalg.svd(r, compute_uv=False)
        return v, {"min_singular": float(s[-1]), "max_singular": float(s[0])}
    u, s, vt = np.linalg.svd(J, full_matrices=False)
    filt = s / (s * s + cfg.damping)
    v = vt.T @ (filt * (u.T @ f))
    if not return_info:
        return v
    return v, {"min_singular": float(s[-1]), "max_singular": float(s[0])}


def relative_error(model: SkinnedModel, theta, delta, S=None, seed: int = 0) -> float:
    """Reconstruction error of a known pose perturbation through J-dagger.

    Evaluates the surface displacement produced by `delta`, projects it back
    with the undamped pseudo-inverse at `theta`, and reports
    ||delta_hat - delta|| / ||delta||.

    Parameters
    ----------
    model : SkinnedModel
    theta : ndarray, (d,)
        Base pose.
    delta : ndarray, (d,)
        Perturbation, nonzero.
    S : int or None
        Number of surface samples; None uses every mesh vertex.
    seed : int
        Sampling seed (ignored when S is None).

    Returns
    -------
    float
    """
    theta = check_pose(model, theta)
    delta = np.asarray(delta, dtype=np.float64)
    nd = np.linalg.norm(delta)
    if nd == 0.0:
        raise ValidationError("relative_error: delta must be nonzero")
    if S is None:
        J = vertex_jacobian(model, theta)
        f = (skin_vertices(model, theta + delta) - skin_vertices(model, theta)).ravel()
    else:
        samples = sample_surface(model, S, seed)
        J = pose_jacobian(model, theta, samples.face, samples.bary)
        f = (
            evaluate_attachments(model, theta + delta, samples)
            - evaluate_attachments(model, theta, samples)
        ).ravel()
    cfg = ProjectionConfig(damping=0.0, solver="qr")
    delta_hat = project_velocity(J, f, cfg)
    return float(np.linalg.norm(delta_hat - delta) / nd)

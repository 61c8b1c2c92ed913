"""Coordinate-space velocity fields evaluated at surface samples.

Every field exposes evaluate(model, samples, positions, theta, t) -> (S, 3)
velocities in m per unit trajectory time. Four variants:

- LinearField: velocities induced by a constant parametric velocity between
  two poses (the straight-path interpolant realized through the Jacobian).
- TargetField: fixed-magnitude pull of a body region toward a world point.
- BlendedField: a base field faded by Bernstein ramps around its source
  region and zeroed inside (and within a standoff of) obstacle volumes.
- NeuralField: inference through 6-layer MLP weights with per-layer input
  re-concatenation and Fourier-encoded inputs, scaled by expected speed.

Blending weights are continuous with flat tangents at both radii, so every
composite field stays Lipschitz across region boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body import SkinnedModel, check_pose, pose_jacobian
from .errors import ValidationError
from .sampling import RegionMask, SampleSet, evaluate_attachments


# ====== Bernstein blending ======


def bezier_blend(r, r_in: float, r_out: float):
    """Quartic Bernstein ramp from 0 at r_in to 1 at r_out.

    b(u) = sum_p alpha_p C(4,p) u^p (1-u)^(4-p) with alpha = (0,0,0,1,1) and
    u the clamped normalized radius; collapses to u^3 (4 - 3u). Both one-sided
    derivatives vanish at the endpoints.

    Parameters
    ----------
    r : float or ndarray
        Radii, any shape.
    r_in, r_out : float
        Ramp interval, r_in < r_out.

    Returns
    -------
    float or ndarray, same shape as r
    """
    if r_in >= r_out:
        raise ValidationError("bezier_blend: r_in must be strictly below r_out")
    u = np.clip((np.asarray(r, dtype=np.float64) - r_in) / (r_out - r_in), 0.0, 1.0)
    b = u * u * u * (4.0 - 3.0 * u)
    return float(b) if np.isscalar(r) else b


def blend_field(base, r, r_in: float, r_out: float):
    """Fade a sampled field by distance-to-region: full inside r_in, zero past r_out.

    Parameters
    ----------
    base : ndarray, (S, 3) or (3S,)
        Field values at the samples.
    r : ndarray, (S,)
        Per-sample distances.
    r_in, r_out : float
        Blend band.

    Returns
    -------
    ndarray, same shape as base
    """
    base = np.asarray(base, dtype=np.float64)
    w = 1.0 - bezier_blend(np.asarray(r, dtype=np.float64), r_in, r_out)
    if base.ndim == 2:
        return base * w[:, None]
    return (base.reshape(-1, 3) * w[:, None]).ravel()


# ====== Obstacle volumes ======


@dataclass
class BoxObstacle:
    """Axis-aligned box; the field is zeroed inside and near its boundary."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if self.lo.shape != (3,) or self.hi.shape != (3,) or np.any(self.hi <= self.lo):
            raise ValidationError("box obstacle: need lo < hi componentwise")

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return np.all((p > self.lo) & (p < self.hi), axis=-1)

    def boundary_distance(self, points) -> np.ndarray:
        """Euclidean distance to the box, 0 inside, (S,)."""
        p = np.asarray(points, dtype=np.float64)
        d = np.maximum(np.maximum(self.lo - p, p - self.hi), 0.0)
        return np.linalg.norm(d, axis=-1)


@dataclass
class SphereObstacle:
    """Solid ball; the field is zeroed inside and near its boundary."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.center.shape != (3,) or self.radius <= 0:
            raise ValidationError("sphere obstacle: need a 3-vector center and radius > 0")

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return np.linalg.norm(p - self.center, axis=-1) < self.radius

    def boundary_distance(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return np.maximum(np.linalg.norm(p - self.center, axis=-1) - self.radius, 0.0)


# ====== Field variants ======


@dataclass
class LinearField:
    """Field induced by constant parametric velocity (theta1 - theta0)/(t1 - t0).

    At a state theta the sampled velocities are J(theta) (theta1 - theta0)/T,
    i.e. how the samples move when the pose slides along the straight
    parameter path. With interp_state the Jacobian is instead taken at the
    linear interpolant pose for the current time (the training-time
    stabilization); default off.
    """

    theta0: np.ndarray
    theta1: np.ndarray
    t0: float = 0.0
    t1: float = 1.0
    interp_state: bool = False

    def __post_init__(self):
        self.theta0 = np.asarray(self.theta0, dtype=np.float64)
        self.theta1 = np.asarray(self.theta1, dtype=np.float64)
        if self.t1 <= self.t0:
            raise ValidationError("linear field: t1 must exceed t0")
        if self.t1 - self.t0 > 1.0 + 1e-12:
            raise ValidationError("linear field: span t1 - t0 must not exceed 1")

    def interpolant(self, t: float) -> np.ndarray:
        a = (t - self.t0) / (self.t1 - self.t0)
        return self.theta0 + a * (self.theta1 - self.theta0)

    def evaluate(self, model: SkinnedModel, samples: SampleSet, positions, theta, t,
                 jacobian=None) -> np.ndarray:
        vel = (self.theta1 - self.theta0) / (self.t1 - self.t0)
        if self.interp_state:
            J = pose_jacobian(model, self.interpolant(t), samples.face, samples.bary)
        elif jacobian is not None:
            J = jacobian
        else:
            J = pose_jacobian(model, check_pose(model, theta), samples.face, samples.bary)
        return (J @ vel).reshape(-1, 3)


@dataclass
class TargetField:
    """Fixed-magnitude pull of region samples toward a world-space target.

    f(x) = magnitude (x_T - x) / (||x_T - x|| + eps) on the region's members,
    exactly zero elsewhere (wrap in BlendedField for a continuous falloff).
    """

    target: np.ndarray
    region: RegionMask
    magnitude: float = 1e-3
    eps: float = 1e-6

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.float64)
        if self.target.shape != (3,):
            raise ValidationError("target field: target must be a 3-vector")
        if self.magnitude <= 0 or self.eps <= 0:
            raise ValidationError("target field: magnitude and eps must be positive")

    def evaluate_raw(self, positions) -> np.ndarray:
        """Pull applied to every sample, ignoring region membership, (S, 3)."""
        p = np.asarray(positions, dtype=np.float64)
        diff = self.target[None, :] - p
        dist = np.linalg.norm(diff, axis=1)
        return self.magnitude * diff / (dist + self.eps)[:, None]

    def evaluate(self, model, samples, positions, theta, t, jacobian=None) -> np.ndarray:
        f = self.evaluate_raw(positions)
        mask = np.zeros(f.shape[0], dtype=bool)
        mask[self.region.members] = True
        f[~mask] = 0.0
        return f


@dataclass
class BlendedField:
    """Base field faded around its source region and zeroed inside obstacles.

    Region weight is 1 below r_in of the region's samples, Bernstein-ramped
    to 0 at r_out. Each obstacle multiplies by the opposite ramp of the
    distance to its boundary: exactly 0 inside and within r_in of the wall,
    1 beyond r_out. A base without a region (e.g. LinearField) gets obstacle
    weights only.
    """

    base: object
    obstacles: tuple = ()
    r_in: float = 0.010
    r_out: float = 0.030

    def __post_init__(self):
        self.obstacles = tuple(self.obstacles)
        if self.r_in >= self.r_out:
            raise ValidationError("blended field: r_in must be strictly below r_out")
        if self.r_in < 0:
            raise ValidationError("blended field: r_in must be non-negative")

    def evaluate(self, model, samples, positions, theta, t, jacobian=None) -> np.ndarray:
        positions = np.asarray(positions, dtype=np.float64)
        if hasattr(self.base, "evaluate_raw"):
            f = self.base.evaluate_raw(positions)
        else:
            f = self.base.evaluate(model, samples, positions, theta, t, jacobian)
        w = np.ones(positions.shape[0], dtype=np.float64)
        region = getattr(self.base, "region", None)
        if region is not None:
            src = positions[region.members]
            r = np.sqrt(
                ((positions[:, None, :] - src[None, :, :]) ** 2).sum(axis=2)
            ).min(axis=1)
            w *= 1.0 - bezier_blend(r, self.r_in, self.r_out)
        for obs in self.obstacles:
            w *= bezier_blend(obs.boundary_distance(positions), self.r_in, self.r_out)
        return f * w[:, None]


# ====== Fourier features and the MLP field ======


def fourier_encode(v, n_f: int) -> np.ndarray:
    """Per-scalar Fourier features: [s, sin(2^k pi s), cos(2^k pi s), k < n_f].

    Parameters
    ----------
    v : array-like, (k,)
    n_f : int
        Number of octave frequencies; 0 returns v unchanged.

    Returns
    -------
    ndarray, (k * (2 n_f + 1),), blocks in input order
    """
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if n_f < 0:
        raise ValidationError("fourier_encode: n_f must be non-negative")
    if n_f == 0:
        return v.copy()
    ang = v[:, None] * (np.pi * np.exp2(np.arange(n_f)))[None, :]  # (k, n_f)
    block = np.empty((v.shape[0], 2 * n_f + 1), dtype=np.float64)
    block[:, 0] = v
    block[:, 1::2] = np.sin(ang)
    block[:, 2::2] = np.cos(ang)
    return block.ravel()


@dataclass
class MlpWeights:
    """Weights of the 6-layer field network with input re-concatenation.

    layers holds (W, b) pairs, W of shape (out, in). Layer 1 consumes the
    encoded input; layers 2..6 consume the previous activation concatenated
    with the encoded input; the last layer emits 3 values and has no
    activation.
    """

    layers: list
    n_f: int = 20

    def __post_init__(self):
        if len(self.layers) != 6:
            raise ValidationError(f"mlp weights: expected 6 layers, got {len(self.layers)}")
        self.layers = [
            (np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for W, b in self.layers
        ]
        E = self.layers[0][0].shape[1]
        prev_out = None
        for li, (W, b) in enumerate(self.layers):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValidationError(f"mlp weights: layer {li} shapes inconsistent")
            expect_in = E if li == 0 else prev_out + E
            if W.shape[1] != expect_in:
                raise ValidationError(
                    f"mlp weights: layer {li} expects input {expect_in}, has {W.shape[1]}"
                )
            prev_out = W.shape[0]
        if prev_out != 3:
            raise ValidationError("mlp weights: final layer must emit 3 values")

    @property
    def encoded_size(self) -> int:
        return int(self.layers[0][0].shape[1])


def mlp_field_eval(weights: MlpWeights, model: SkinnedModel, samples: SampleSet,
                   positions, theta_t, theta1, t: float, t1: float) -> np.ndarray:
    """Forward pass of the MLP field, scaled by the expected speed.

    Inputs per point are the Fourier encodings of [x, theta(t), theta1,
    time left]; the raw 3-vector outputs are multiplied by the mean
    straight-line speed to the endpoint, mean_i ||x_i(theta1) - x_i|| / dt,
    so the field annihilates as the state reaches the target.

    Parameters
    ----------
    weights : MlpWeights
    model : SkinnedModel
    samples : SampleSet
    positions : ndarray, (S, 3)
        Current sample positions x_i(theta(t)).
    theta_t, theta1 : ndarray, (d,)
    t, t1 : float
        Current time and end time; dt = t1 - t must be positive.

    Returns
    -------
    ndarray, (S, 3)
    """
    dt = t1 - t
    if dt <= 0:
        raise ValidationError("mlp field: time left t1 - t must be positive")
    positions = np.asarray(positions, dtype=np.float64)
    theta_t = check_pose(model, theta_t)
    theta1 = check_pose(model, theta1)
    shared = fourier_encode(np.concatenate([theta_t, theta1, [dt]]), weights.n_f)
    enc_x = np.stack([fourier_encode(p, weights.n_f) for p in positions])
    z0 = np.concatenate([enc_x, np.broadcast_to(shared, (len(positions), shared.size))], axis=1)
    if z0.shape[1] != weights.encoded_size:
        raise ValidationError(
            f"mlp field: encoded input is {z0.shape[1]}, weights expect {weights.encoded_size}"
        )
    h = np.tanh(z0 @ weights.layers[0][0].T + weights.layers[0][1])
    for W, b in weights.layers[1:-1]:
        h = np.tanh(np.concatenate([h, z0], axis=1) @ W.T + b)
    W, b = weights.layers[-1]
    raw = np.concatenate([h, z0], axis=1) @ W.T + b
    target_pts = evaluate_attachments(model, theta1, samples)
    speed = float(np.mean(np.linalg.norm(target_pts - positions, axis=1))) / dt
    return raw * speed


@dataclass
class NeuralField:
    """MLP motion field integrated toward a fixed endpoint pose."""

    weights: MlpWeights
    theta1: np.ndarray
    t0: float = 0.0
    t1: float = 1.0
    theta0: np.ndarray = None
    interp_state: bool = False

    def __post_init__(self):
        self.theta1 = np.asarray(self.theta1, dtype=np.float64)
        if self.t1 <= self.t0:
            raise ValidationError("neural field: t1 must exceed t0")
        if self.t1 - self.t0 > 1.0 + 1e-12:
            raise ValidationError("neural field: span t1 - t0 must not exceed 1")
        if self.interp_state and self.theta0 is None:
            raise ValidationError("neural field: interp_state requires theta0")

    def evaluate(self, model, samples, positions, theta, t, jacobian=None) -> np.ndarray:
        if self.interp_state:
            a = (t - self.t0) / (self.t1 - self.t0)
            state = np.asarray(self.theta0) + a * (self.theta1 - np.asarray(self.theta0))
        else:
            state = theta
        return mlp_field_eval(
            self.weights, model, samples, positions, state, self.theta1, t, self.t1
        )

"""Adaptive Dormand-Prince 5(4) integration of the projected pose ODE.

The right-hand side realizes dtheta/dt = J-dagger f(X(theta), t): evaluate
the attachments at the current pose, build the skinning Jacobian there,
evaluate the field at the attachment positions, and project. Integration is
guarded: each accepted pose is collision-checked and the trajectory halts at
the last clean state when a trial step would penetrate, which is what keeps
every emitted pose self-intersection free even when the target is not.

The raw stepper is exposed as integrate_ode for plain vector ODEs (used by
the convergence-order tests); integrate wraps it with pose canonicalization,
the collision guard, and the quiescence stop.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .body import SkinnedModel, canonicalize_pose, check_pose, pose_jacobian
from .collision import self_intersection_count
from .errors import NumericalError, ValidationError
from .projection import ProjectionConfig, project_velocity
from .sampling import SampleSet, evaluate_attachments, sample_surface

# Dormand-Prince 5(4) tableau; row 7 doubles as the 5th-order weights (FSAL).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_DP_ERR = _DP_B5 - _DP_B4


@dataclass
class SolverConfig:
    """Step control for the embedded 5(4) pair.

    Attributes
    ----------
    rtol, atol : float
        Per-component error tolerances; a step is accepted when
        max_i |e_i| / (atol + rtol max(|y_i|, |y_new_i|)) <= 1.
    h_init, h_max : float
        First and largest step size, trajectory-time units.
    max_steps : int
        Attempt budget (accepted + rejected).
    dense_output : bool
        Kept for configuration compatibility; trajectories interpolate
        linearly between accepted steps either way.
    quiescence_tol : float or None
        Mean sampled field speed below which 3 consecutive accepted steps
        end the integration early (target-field scenarios).
    """

    rtol: float = 1e-5
    atol: float = 1e-7
    h_init: float = 1e-3
    h_max: float = 0.1
    max_steps: int = 10000
    dense_output: bool = False
    quiescence_tol: float = None

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValidationError("solver: rtol and atol must be positive")
        if self.max_steps < 1:
            raise ValidationError("solver: max_steps must be at least 1")
        if self.h_init <= 0 or self.h_max <= 0:
            raise ValidationError("solver: h_init and h_max must be positive")


@dataclass
class IntegrationProblem:
    """A pose ODE: model, field, samples, and the projection settings."""

    model: SkinnedModel
    field: object
    theta0: np.ndarray
    samples: SampleSet
    t0: float = 0.0
    t1: float = 1.0
    projection: ProjectionConfig = dc_field(default_factory=ProjectionConfig)
    collision_guard: bool = True
    resample_every_step: bool = False

    def __post_init__(self):
        self.theta0 = check_pose(self.model, self.theta0)
        if self.t1 < self.t0:
            raise ValidationError("integration: t1 must not precede t0")
        if self.resample_every_step and getattr(self.field, "region", None) is not None:
            raise ValidationError(
                "integration: resample_every_step is incompatible with region fields "
                "(membership is defined over the t0 sample indices)"
            )

    def validate_start(self):
        report = self_intersection_count(self.model, self.theta0)
        if report.count > 0:
            raise ValidationError(
                f"integration: starting pose has {report.count} penetrating vertices"
            )


@dataclass
class Trajectory:
    """Accepted integration states with per-step diagnostics."""

    times: np.ndarray
    poses: np.ndarray  # (T, d)
    diagnostics: list
    stop_reason: str = "completed"

    @property
    def final(self) -> np.ndarray:
        return self.poses[-1]

    def at(self, t: float) -> np.ndarray:
        """Pose at time t, linear between accepted steps, clamped at the ends."""
        times = self.times
        if t <= times[0]:
            return self.poses[0].copy()
        if t >= times[-1]:
            return self.poses[-1].copy()
        i = int(np.searchsorted(times, t, side="right")) - 1
        a = (t - times[i]) / (times[i + 1] - times[i])
        return (1.0 - a) * self.poses[i] + a * self.poses[i + 1]


def rhs(problem: IntegrationProblem, theta, t: float, samples: SampleSet = None,
        return_info: bool = False):
    """Projected parametric velocity at (theta, t).

    Parameters
    ----------
    problem : IntegrationProblem
    theta : ndarray, (d,)
    t : float
    samples : SampleSet, optional
        Overrides problem.samples (resampling mode).
    return_info : bool
        Also return {"field_speed", "min_singular", "max_singular"}.

    Returns
    -------
    ndarray, (d,), or (ndarray, dict)
    """
    theta = check_pose(problem.model, theta)
    ss = problem.samples if samples is None else samples
    positions = evaluate_attachments(problem.model, theta, ss)
    J = pose_jacobian(problem.model, theta, ss.face, ss.bary)
    f = problem.field.evaluate(problem.model, ss, positions, theta, t, jacobian=J)
    if not return_info:
        return project_velocity(J, np.asarray(f).ravel(), problem.projection)
    v, info = project_velocity(J, np.asarray(f).ravel(), problem.projection, return_info=True)
    info["field_speed"] = float(np.mean(np.linalg.norm(np.asarray(f), axis=1)))
    return v, info


def _dp_step(f, t, y, h, k1):
    """One embedded 5(4) step. Returns (y5, err_vec, k7)."""
    k = [k1]
    for i in range(1, 7):
        yi = y + h * (np.stack(k, axis=0).T @ _DP_A[i])
        k.append(f(t + _DP_C[i] * h, yi))
    K = np.stack(k, axis=0)  # (7, n)
    y5 = y + h * (K.T @ _DP_B5)
    err = h * (K.T @ _DP_ERR)
    return y5, err, k[6]


def integrate_ode(f, y0, t0: float, t1: float, cfg: SolverConfig,
                  on_accept=None) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) for a generic vector ODE y' = f(t, y).

    Parameters
    ----------
    f : callable (t, y) -> ndarray
    y0 : ndarray
    t0, t1 : float
    cfg : SolverConfig
    on_accept : callable (t, y) -> (y, halt_reason or None), optional
        Applied to every accepted state; may adjust it (canonicalization) or
        end the integration (collision guard, quiescence).

    Returns
    -------
    Trajectory

    Raises
    ------
    NumericalError
        On non-finite states or when max_steps is exhausted; the partial
        trajectory is attached as the exception's `trajectory` attribute.
    """
    y = np.asarray(y0, dtype=np.float64).copy()
    t = float(t0)
    times = [t]
    poses = [y.copy()]
    diagnostics = []
    if t1 == t0:
        return Trajectory(np.asarray(times), np.stack(poses), diagnostics)
    h = min(cfg.h_init, cfg.h_max, t1 - t0)
    k1 = f(t, y)
    attempts = 0
    # a guard rejection halves this cap; halting only when it underflows lets
    # the trajectory creep up to the boundary instead of stopping a full step
    # short of it
    h_cap = cfg.h_max
    guard_floor = max(1e-2 * cfg.h_max, 1e-14)
    while t < t1:
        if attempts >= cfg.max_steps:
            err = NumericalError(f"integration: max_steps = {cfg.max_steps} exhausted at t = {t:.6g}")
            err.trajectory = Trajectory(np.asarray(times), np.stack(poses), diagnostics, "max_steps")
            raise err
        attempts += 1
        h = min(h, t1 - t)
        y_new, err_vec, k_last = _dp_step(f, t, y, h, k1)
        if not np.all(np.isfinite(y_new)):
            err = NumericalError(f"integration: field blow-up at t = {t:.6g}")
            err.trajectory = Trajectory(np.asarray(times), np.stack(poses), diagnostics, "blow-up")
            raise err
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err_vec) / scale))
        if err_norm <= 1.0:
            t_new = t + h
            halt = None
            if on_accept is not None:
                y_adj, halt = on_accept(t_new, y_new)
                if y_adj is not None:
                    if not np.array_equal(y_adj, y_new):
                        y_new = y_adj
                        k_last = None  # FSAL slope is stale after adjustment
                    else:
                        y_new = y_adj
            if halt == "reject":
                h_cap = h / 2.0
                if h_cap < guard_floor:
                    return Trajectory(
                        np.asarray(times), np.stack(poses), diagnostics, "collision_guard"
                    )
                h = h_cap
                continue
            t = t_new
            y = y_new
            times.append(t)
            poses.append(y.copy())
            diagnostics.append({"t": t, "h": h, "err_norm": err_norm})
            if halt is not None:
                return Trajectory(np.asarray(times), np.stack(poses), diagnostics, halt)
            if t >= t1:
                break
            k1 = f(t, y) if k_last is None else k_last
            grow = 5.0 if err_norm == 0.0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
            h = min(h * grow, h_cap)
        else:
            h *= max(0.2, 0.9 * err_norm ** -0.2)
    return Trajectory(np.asarray(times), np.stack(poses), diagnostics)


def integrate(problem: IntegrationProblem, cfg: SolverConfig = None) -> Trajectory:
    """Integrate the projected pose ODE from theta0 over [t0, t1].

    The starting pose must be collision-free. Every accepted pose is
    re-canonicalized (axis-angle branch) and, with collision_guard on,
    winding-checked; a penetrating trial state ends the trajectory at the
    previous clean pose with stop_reason "collision_guard". With
    quiescence_tol set, three consecutive accepted steps below that mean
    field speed stop the integration with stop_reason "quiescence".

    Parameters
    ----------
    problem : IntegrationProblem
    cfg : SolverConfig, optional

    Returns
    -------
    Trajectory
    """
    if cfg is None:
        cfg = SolverConfig()
    problem.validate_start()
    state = {"samples": problem.samples, "accepted": 0, "quiet_streak": 0, "speed": None}

    def f(t, y):
        return rhs(problem, y, t, samples=state["samples"])

    def on_accept(t, y):
        y = canonicalize_pose(problem.model, y)
        if problem.collision_guard:
            report = self_intersection_count(problem.model, y)
            if report.count > 0:
                return None, "reject"
        state["accepted"] += 1
        if problem.resample_every_step:
            state["samples"] = sample_surface(
                problem.model, problem.samples.size, problem.samples.seed + state["accepted"]
            )
        if cfg.quiescence_tol is not None:
            _, info = rhs(problem, y, t, samples=state["samples"], return_info=True)
            if info["field_speed"] < cfg.quiescence_tol:
                state["quiet_streak"] += 1
                if state["quiet_streak"] >= 3:
                    return y, "quiescence"
            else:
                state["quiet_streak"] = 0
        return y, None

    traj = integrate_ode(f, problem.theta0, problem.t0, problem.t1, cfg, on_accept=on_accept)
    return traj


def trajectory_loss(traj: Trajectory, theta0, theta1, M: int, model: SkinnedModel) -> float:
    """Mean squared vertex deviation from the straight-path interpolant.

    Checkpoints t_m = t0 + (m/M)(t1 - t0), m = 1..M, compare the skinned
    trajectory pose against the skinned linear pose interpolant; returns the
    mean over checkpoints of the squared stacked-vertex distance. Diagnostic
    only.

    Parameters
    ----------
    traj : Trajectory
    theta0, theta1 : ndarray, (d,)
    M : int
        Number of checkpoints, >= 1.
    model : SkinnedModel

    Returns
    -------
    float
    """
    from .body import skin_vertices

    if M < 1:
        raise ValidationError("trajectory_loss: M must be at least 1")
    theta0 = check_pose(model, theta0)
    theta1 = check_pose(model, theta1)
    t0, t1 = float(traj.times[0]), float(traj.times[-1])
    total = 0.0
    for m in range(1, M + 1):
        tm = t0 + (m / M) * (t1 - t0)
        a = (tm - t0) / (t1 - t0) if t1 > t0 else 0.0
        x_traj = skin_vertices(model, traj.at(tm))
        x_lin = skin_vertices(model, theta0 + a * (theta1 - theta0))
        total += float(((x_traj - x_lin) ** 2).sum())
    return total / M

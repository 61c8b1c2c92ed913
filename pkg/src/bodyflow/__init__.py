"""Self-intersection-free motion of a skinned articulated body.

Coordinate-space velocity fields are projected onto pose-space velocities
through the skinning Jacobian of a set of surface samples, then integrated
as an ODE in pose space. Because every intermediate state is a valid pose
of the body model, the surface can slide along itself but never cross.
"""

from .body import (
    KinematicTree,
    SkinnedModel,
    canonicalize_pose,
    check_pose,
    compose_root_rigid,
    forward_kinematics,
    joint_positions,
    pose_jacobian,
    skin_vertices,
    split_pose,
    vertex_jacobian,
    zero_pose,
)
from .capsule import make_capsule_human
from .collision import CollisionReport, excluded_winding, self_intersection_count, winding_number
from .errors import NumericalError, ValidationError
from .fields import (
    BlendedField,
    BoxObstacle,
    LinearField,
    MlpWeights,
    NeuralField,
    SphereObstacle,
    TargetField,
    bezier_blend,
    blend_field,
    fourier_encode,
    mlp_field_eval,
)
from .fileio import (
    export_obj,
    load_keyposes,
    load_mlp_weights,
    load_model,
    load_obj,
    load_pose,
    load_sampleset,
    load_sequence,
    load_trajectory,
    save_keyposes,
    save_mlp_weights,
    save_model,
    save_pose,
    save_sampleset,
    save_sequence,
    save_trajectory,
)
from .init_strategies import (
    KeyposeDictionary,
    build_keypose_dict,
    cascade_init,
    jitter_init,
    keypose_init,
    successive_frame_init,
)
from .integrate import (
    IntegrationProblem,
    SolverConfig,
    Trajectory,
    integrate,
    integrate_ode,
    rhs,
    trajectory_loss,
)
from .metrics import (
    MetricsReport,
    accel_err,
    col_rate,
    col_rate_from_counts,
    collision_counts,
    mpjpe,
    p_mpjpe,
    sequence_metrics,
)
from .projection import ProjectionConfig, project_velocity, relative_error
from .rotations import axis_angle_to_matrix, matrix_to_axis_angle
from .sampling import (
    RegionMask,
    SampleSet,
    evaluate_attachments,
    face_areas,
    sample_surface,
    select_region,
)

__version__ = "0.1.0"

__all__ = [
    "BlendedField",
    "BoxObstacle",
    "CollisionReport",
    "IntegrationProblem",
    "KeyposeDictionary",
    "KinematicTree",
    "LinearField",
    "MetricsReport",
    "MlpWeights",
    "NeuralField",
    "NumericalError",
    "ProjectionConfig",
    "RegionMask",
    "SampleSet",
    "SkinnedModel",
    "SolverConfig",
    "SphereObstacle",
    "TargetField",
    "Trajectory",
    "ValidationError",
    "accel_err",
    "axis_angle_to_matrix",
    "bezier_blend",
    "blend_field",
    "build_keypose_dict",
    "canonicalize_pose",
    "cascade_init",
    "check_pose",
    "col_rate",
    "col_rate_from_counts",
    "collision_counts",
    "compose_root_rigid",
    "evaluate_attachments",
    "excluded_winding",
    "export_obj",
    "face_areas",
    "forward_kinematics",
    "fourier_encode",
    "integrate",
    "integrate_ode",
    "jitter_init",
    "joint_positions",
    "keypose_init",
    "load_keyposes",
    "load_mlp_weights",
    "load_model",
    "load_obj",
    "load_pose",
    "load_sampleset",
    "load_sequence",
    "load_trajectory",
    "make_capsule_human",
    "matrix_to_axis_angle",
    "mlp_field_eval",
    "mpjpe",
    "p_mpjpe",
    "pose_jacobian",
    "project_velocity",
    "relative_error",
    "rhs",
    "sample_surface",
    "save_keyposes",
    "save_mlp_weights",
    "save_model",
    "save_pose",
    "save_sampleset",
    "save_sequence",
    "save_trajectory",
    "select_region",
    "self_intersection_count",
    "sequence_metrics",
    "skin_vertices",
    "split_pose",
    "successive_frame_init",
    "trajectory_loss",
    "vertex_jacobian",
    "winding_number",
    "zero_pose",
]

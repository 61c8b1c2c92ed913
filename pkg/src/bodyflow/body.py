"""Skinned articulated body: kinematic tree, linear blend skinning, and the
analytic Jacobian of surface points with respect to the pose vector.

Pose layout
-----------
A pose is a flat float64 vector of dimension d = 3 + 3J:

    theta = [root translation (m), axis-angle of joint 0, ..., joint J-1]

joint-major, rotations in radians. Joint 0 is the root; its transform also
carries the global translation. In the zero pose every joint transform has
identity rotation and the joints sit at the cumulative rest offsets.

All arithmetic is double precision; Jacobians are exact derivatives of the
skinning map, not finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .rotations import (
    axis_angle_jacobian,
    axis_angle_to_matrix,
    canonicalize_axis_angle,
    matrix_to_axis_angle,
)


# ====== Types ======


@dataclass
class KinematicTree:
    """Joint hierarchy. parent[0] = -1 and parent[j] < j for j > 0."""

    parent: np.ndarray  # (J,) int
    rest_offset: np.ndarray  # (J, 3) float, offset from parent joint at rest

    def __post_init__(self):
        self.parent = np.asarray(self.parent, dtype=np.int64)
        self.rest_offset = np.asarray(self.rest_offset, dtype=np.float64)
        if self.parent.ndim != 1:
            raise ValidationError("kinematic tree: parent must be a flat index array")
        J = self.parent.shape[0]
        if self.rest_offset.shape != (J, 3):
            raise ValidationError(
                f"kinematic tree: rest_offset shape {self.rest_offset.shape}, expected ({J}, 3)"
            )
        if J == 0 or self.parent[0] != -1:
            raise ValidationError("kinematic tree: joint 0 must be the root (parent -1)")
        for j in range(1, J):
            if not (0 <= self.parent[j] < j):
                raise ValidationError(
                    f"kinematic tree: parent[{j}] = {self.parent[j]} is not a lower index"
                )

    @property
    def n_joints(self) -> int:
        return int(self.parent.shape[0])

    def rest_joint_positions(self) -> np.ndarray:
        """Joint positions in the zero pose, (J, 3)."""
        J = self.n_joints
        pos = np.empty((J, 3), dtype=np.float64)
        pos[0] = self.rest_offset[0]
        for j in range(1, J):
            pos[j] = pos[self.parent[j]] + self.rest_offset[j]
        return pos


@dataclass
class SkinnedModel:
    """Triangle mesh bound to a kinematic tree by per-vertex blend weights."""

    tree: KinematicTree
    template_vertices: np.ndarray  # (V, 3) rest-pose vertices, meters
    faces: np.ndarray  # (F, 3) int, outward-oriented triangles
    skin_weights: np.ndarray  # (V, J), rows sum to 1
    exclusion_faces: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.template_vertices = np.asarray(self.template_vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.skin_weights = np.asarray(self.skin_weights, dtype=np.float64)
        self.exclusion_faces = np.asarray(self.exclusion_faces, dtype=np.int64)
        V = self.template_vertices.shape[0]
        if self.template_vertices.ndim != 2 or self.template_vertices.shape[1] != 3:
            raise ValidationError("model: template_vertices must be (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValidationError("model: faces must be (F, 3)")
        if self.skin_weights.shape != (V, self.tree.n_joints):
            raise ValidationError(
                f"model: skin_weights shape {self.skin_weights.shape}, expected ({V}, {self.tree.n_joints})"
            )

    @property
    def n_vertices(self) -> int:
        return int(self.template_vertices.shape[0])

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    @property
    def n_joints(self) -> int:
        return self.tree.n_joints

    @property
    def dim(self) -> int:
        """Pose vector dimension d = 3 + 3J."""
        return 3 + 3 * self.tree.n_joints

    def rest_joints(self) -> np.ndarray:
        if "rest_joints" not in self._cache:
            self._cache["rest_joints"] = self.tree.rest_joint_positions()
        return self._cache["rest_joints"]

    def dominant_joint(self) -> np.ndarray:
        """Per-vertex joint of maximum skin weight, (V,) int."""
        if "dominant_joint" not in self._cache:
            self._cache["dominant_joint"] = np.argmax(self.skin_weights, axis=1)
        return self._cache["dominant_joint"]

    def bounding_box_diagonal(self) -> float:
        v = self.template_vertices
        return float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))


# ====== Pose helpers ======


def zero_pose(model: SkinnedModel) -> np.ndarray:
    return np.zeros(model.dim, dtype=np.float64)


def check_pose(model: SkinnedModel, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (model.dim,):
        raise ValidationError(
            f"pose/model dimension mismatch: expected ({model.dim},), got {theta.shape}"
        )
    if not np.all(np.isfinite(theta)):
        raise ValidationError("pose contains non-finite entries")
    return theta


def split_pose(model: SkinnedModel, theta):
    """Split a pose into (translation (3,), axis-angles (J, 3))."""
    theta = check_pose(model, theta)
    return theta[:3], theta[3:].reshape(model.n_joints, 3)


def canonicalize_pose(model: SkinnedModel, theta) -> np.ndarray:
    """Clamp every joint's axis-angle onto the |v| < pi branch."""
    trans, aa = split_pose(model, theta)
    out = np.concatenate([trans, canonicalize_axis_angle(aa).ravel()])
    return out


def compose_root_rigid(model: SkinnedModel, theta, R, t) -> np.ndarray:
    """Pose realizing the rigid map x -> R x + t applied after `theta`."""
    trans, aa = split_pose(model, theta)
    R = np.asarray(R, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    o0 = model.tree.rest_offset[0]
    new_aa0 = matrix_to_axis_angle(R @ axis_angle_to_matrix(aa[0]))
    new_trans = R @ (o0 + trans) + t - o0
    out = theta.copy()
    out[:3] = new_trans
    out[3:6] = new_aa0
    return out


# ====== Kinematics and skinning ======


def forward_kinematics(model: SkinnedModel, theta):
    """World transforms of every joint: (R (J, 3, 3), t (J, 3))."""
    trans, aa = split_pose(model, theta)
    J = model.n_joints
    R_local = axis_angle_to_matrix(aa)
    offs = model.tree.rest_offset
    R = np.empty((J, 3, 3), dtype=np.float64)
    t = np.empty((J, 3), dtype=np.float64)
    R[0] = R_local[0]
    t[0] = offs[0] + trans
    parent = model.tree.parent
    for j in range(1, J):
        p = parent[j]
        R[j] = R[p] @ R_local[j]
        t[j] = R[p] @ offs[j] + t[p]
    return R, t


def joint_positions(model: SkinnedModel, theta) -> np.ndarray:
    """Posed joint positions, (J, 3)."""
    return forward_kinematics(model, theta)[1]


def _blend_matrices(model: SkinnedModel, fk):
    """Per-vertex blended 3x4 skinning matrices (V, 3, 4)."""
    R, t = fk
    p = model.rest_joints()
    # Fold the inverse bind translation into each joint transform: the
    # joint-j map sends a rest point v to R_j (v - p_j) + t_j.
    G = np.concatenate([R, (t - np.einsum("jab,jb->ja", R, p))[:, :, None]], axis=2)  # (J, 3, 4)
    return np.einsum("vj,jak->vak", model.skin_weights, G)


def skin_vertices(model: SkinnedModel, theta) -> np.ndarray:
    """Pose the template: (V, 3) posed vertex positions."""
    fk = forward_kinematics(model, theta)
    M = _blend_matrices(model, fk)
    v = model.template_vertices
    return np.einsum("vab,vb->va", M[:, :, :3], v) + M[:, :, 3]


def _weighted_homogeneous(model: SkinnedModel, fk) -> np.ndarray:
    """Per vertex and joint, skin weight times homogeneous posed point.

    h[v, j] = w_vj * [R_j (v - p_j) + t_j, 1], shape (V, J, 4). Summing h
    over j gives the skinned position with trailing 1.
    """
    R, t = fk
    p = model.rest_joints()
    rel = model.template_vertices[:, None, :] - p[None, :, :]  # (V, J, 3)
    q = np.einsum("jab,vjb->vja", R, rel) + t[None, :, :]
    h = np.empty((model.n_vertices, model.n_joints, 4), dtype=np.float64)
    w = model.skin_weights
    h[:, :, :3] = w[:, :, None] * q
    h[:, :, 3] = w
    return h


def _subtree_sums(model: SkinnedModel, h: np.ndarray) -> np.ndarray:
    """Accumulate h over each joint's subtree: H[., k] = sum_{j in sub(k)} h[., j]."""
    H = h.copy()
    parent = model.tree.parent
    for j in range(model.n_joints - 1, 0, -1):
        H[:, parent[j]] += H[:, j]
    return H


def _rotation_column_maps(model: SkinnedModel, theta, fk):
    """Affine maps giving d(world transform)/d(axis-angle component).

    For joint k and component c, the derivative of any descendant's world
    transform G_j is A_kc @ G_j with A_kc = G_par (dL/dtheta_kc) L^-1 G_par^-1.
    Returns (A_rot (J, 3, 3, 3), A_tr (J, 3, 3)) indexed [k, c].
    """
    _, aa = split_pose(model, theta)
    R_w, t_w = fk
    parent = model.tree.parent
    offs = model.tree.rest_offset
    J = model.n_joints
    R_local = axis_angle_to_matrix(aa)
    dR = axis_angle_jacobian(aa)  # (J, 3, 3, 3), [j, c] = dR_j/daa_jc
    A_rot = np.empty((J, 3, 3, 3), dtype=np.float64)
    A_tr = np.empty((J, 3, 3), dtype=np.float64)
    trans = theta[:3]
    for k in range(J):
        if k == 0:
            Rp = np.eye(3)
            tp = np.zeros(3)
            o = offs[0] + trans
        else:
            p = parent[k]
            Rp = R_w[p]
            tp = t_w[p]
            o = offs[k]
        B = np.einsum("cab,db->cad", dR[k], R_local[k])  # dR_kc R_k^T, (3, 3, 3)
        A_rot[k] = np.einsum("ab,cbd,ed->cae", Rp, B, Rp)
        A_tr[k] = np.einsum("ab,cb->ca", Rp, -np.einsum("cab,b->ca", B, o)) - np.einsum(
            "cab,b->ca", A_rot[k], tp
        )
    return A_rot, A_tr


def _jacobian_from_sums(model, A_rot, A_tr, H):
    """Assemble the (3N, d) Jacobian from subtree sums H (N, J, 4)."""
    N = H.shape[0]
    d = model.dim
    U = H[:, :, :3]
    m = H[:, :, 3]
    jac = np.zeros((N, 3, d), dtype=np.float64)
    # Root translation moves every point identically (weights sum to ~1).
    jac[:, 0, 0] = m[:, 0]
    jac[:, 1, 1] = m[:, 0]
    jac[:, 2, 2] = m[:, 0]
    cols = np.einsum("kcab,nkb->nakc", A_rot, U) + np.einsum("kca,nk->nakc", A_tr, m)
    jac[:, :, 3:] = cols.reshape(N, 3, 3 * model.n_joints)
    return jac.reshape(3 * N, d)


def vertex_jacobian(model: SkinnedModel, theta) -> np.ndarray:
    """d(skinned vertices)/d(pose), (3V, d), rows x0 y0 z0 x1 ..."""
    theta = check_pose(model, theta)
    fk = forward_kinematics(model, theta)
    h = _weighted_homogeneous(model, fk)
    H = _subtree_sums(model, h)
    A_rot, A_tr = _rotation_column_maps(model, theta, fk)
    return _jacobian_from_sums(model, A_rot, A_tr, H)


def pose_jacobian(model: SkinnedModel, theta, face_idx, bary) -> np.ndarray:
    """d(surface samples)/d(pose) at barycentric attachments, (3S, d).

    face_idx is (S,) int and bary (S, 3); each sample is the barycentric
    combination of its face's skinned vertices, so its Jacobian is the same
    combination of vertex Jacobians.
    """
    theta = check_pose(model, theta)
    face_idx = np.asarray(face_idx, dtype=np.int64)
    bary = np.asarray(bary, dtype=np.float64)
    fk = forward_kinematics(model, theta)
    h = _weighted_homogeneous(model, fk)
    tri = model.faces[face_idx]  # (S, 3)
    h_s = np.einsum("sa,sajh->sjh", bary, h[tri])
    H = _subtree_sums(model, h_s)
    A_rot, A_tr = _rotation_column_maps(model, theta, fk)
    return _jacobian_from_sums(model, A_rot, A_tr, H)

"""Procedural humanoid test body built from blended capsules.

The body is the zero level set of a smooth-union signed distance field over
per-joint capsules, polygonized with marching cubes on a regular grid, so
the mesh is closed and watertight by construction (and validated, not
assumed). Skin weights come from a softmax over the per-joint capsule
distances, with tiny weights snapped to zero so the middle of every limb is
bound rigidly to exactly one joint.

The skeleton is a fixed 16-joint humanoid standing in a wide A-pose: arms
angled 40 degrees away from the body and legs apart, which keeps the rest
mesh free of self-contact and genus zero. Everything is deterministic for a
given configuration; there is no randomness in the generator.
"""

from __future__ import annotations

import numpy as np
from skimage.measure import marching_cubes

from .body import KinematicTree, SkinnedModel
from .errors import NumericalError, ValidationError

# ====== Skeleton layout (meters, Y up, X left, Z forward) ======

# Arms hang 65 degrees away from the body axis: junction fillets large
# enough to keep every crease below the winding classifier's curvature
# budget also merge nearby surfaces, so arms and legs get wide clearances.
_ARM_S, _ARM_C = np.sin(np.deg2rad(80.0)), np.cos(np.deg2rad(80.0))

_JOINT_NAMES = [
    "pelvis", "spine", "chest", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
]

_PARENT = np.array([-1, 0, 1, 2, 2, 4, 5, 2, 7, 8, 0, 10, 11, 0, 13, 14])


def _joint_rest_positions():
    p = np.zeros((16, 3))
    arm = np.array([_ARM_S, -_ARM_C, 0.0])
    p[0] = (0.0, 0.95, 0.0)            # pelvis
    p[1] = (0.0, 1.10, 0.0)            # spine
    p[2] = (0.0, 1.25, 0.0)            # chest
    p[3] = (0.0, 1.47, 0.0)            # head (neck base)
    p[4] = (0.21, 1.40, 0.0)           # l_shoulder
    p[5] = p[4] + 0.27 * arm           # l_elbow
    p[6] = p[5] + 0.25 * arm           # l_wrist
    p[7:10] = p[4:7] * np.array([-1.0, 1.0, 1.0])   # right arm
    p[10] = (0.13, 0.90, 0.0)          # l_hip
    p[11] = (0.24, 0.50, 0.0)          # l_knee
    p[12] = (0.31, 0.09, 0.0)          # l_ankle
    p[13:16] = p[10:13] * np.array([-1.0, 1.0, 1.0])  # right leg
    return p


def _capsules(joints):
    """(owner joint, endpoint a, endpoint b, radius) for every body part.

    Consecutive limb segments share radii and are collinear at rest, so the
    only union creases are the grazing junctions where limbs leave the
    trunk; those stay shallow enough for the blend fillet to round off.
    """
    arm = np.array([_ARM_S, -_ARM_C, 0.0])
    caps = [
        # Legs splay outward so the inner thigh walls fall away below the
        # crotch; parallel legs leave crotch vertices in a concave valley
        # whose excluded winding drifts above 1/2 even without contact.
        (0, np.array([-0.055, 0.90, 0.0]), np.array([0.055, 0.90, 0.0]), 0.112),
        (1, np.array([0.0, 0.93, 0.0]), np.array([0.0, 1.10, 0.0]), 0.105),
        (2, np.array([0.0, 1.10, 0.0]), np.array([0.0, 1.38, 0.0]), 0.105),
        (3, np.array([0.0, 1.43, 0.0]), np.array([0.0, 1.50, 0.0]), 0.06),
        (3, np.array([0.0, 1.565, 0.0]), np.array([0.0, 1.625, 0.0]), 0.084),
    ]
    for side, (sh, el, wr) in (("l", (4, 5, 6)), ("r", (7, 8, 9))):
        mirror = np.array([1.0 if side == "l" else -1.0, 1.0, 1.0])
        adir = arm * mirror
        # Upper arm extends well past the shoulder joint so its end cap is
        # buried inside the trunk top; the blend then flares the junction
        # instead of carving an armpit pocket against the chest wall. A
        # pectoral capsule fills the remaining pocket under the arm.
        caps.append((sh, joints[sh] - 0.20 * adir, joints[el], 0.052))
        caps.append((el, joints[el], joints[wr], 0.052))
        caps.append((wr, joints[wr], joints[wr] + 0.10 * adir, 0.052))
        caps.append((2, np.array([0.0, 1.27, 0.0]) * mirror, np.array([0.15, 1.33, 0.0]) * mirror, 0.08))
    for hip, knee, ank in ((10, 11, 12), (13, 14, 15)):
        caps.append((hip, joints[hip], joints[knee], 0.066))
        caps.append((knee, joints[knee], joints[ank], 0.066))
        caps.append((ank, joints[ank], joints[ank] + [0.0, -0.02, 0.105], 0.05))
    return caps


# ====== Implicit field ======


def _segment_distance(points, a, b):
    """Distance from each point (N, 3) to segment ab."""
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.linalg.norm(points - closest, axis=1)


def _capsule_distances(points, caps):
    """Signed distance to each capsule (negative inside), (N, n_caps)."""
    out = np.empty((points.shape[0], len(caps)), dtype=np.float64)
    for i, (_, a, b, r) in enumerate(caps):
        out[:, i] = _segment_distance(points, np.asarray(a, float), np.asarray(b, float)) - r
    return out


def _smooth_union(dists, k):
    """Smooth minimum across capsules: -k log sum exp(-d/k)."""
    m = dists.min(axis=1, keepdims=True)
    return (m - k * np.log(np.exp(-(dists - m) / k).sum(axis=1, keepdims=True)))[:, 0]


# ====== Mesh bookkeeping ======


def mesh_edges(faces):
    """Undirected edges as a sorted (E, 2) array plus per-edge face counts."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    edges, counts = np.unique(e, axis=0, return_counts=True)
    return edges, counts


def validate_closed_manifold(vertices, faces):
    """Raise unless every edge bounds exactly two faces; return edge count."""
    if np.any(faces < 0) or np.any(faces >= len(vertices)):
        bad = int(np.argwhere((faces < 0) | (faces >= len(vertices)))[0, 0])
        raise ValidationError(f"face {bad} references a vertex out of range")
    degenerate = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
    if np.any(degenerate):
        raise ValidationError(f"face {int(np.argwhere(degenerate)[0, 0])} is degenerate")
    edges, counts = mesh_edges(faces)
    if np.any(counts != 2):
        i = int(np.argwhere(counts != 2)[0, 0])
        raise ValidationError(
            f"edge ({edges[i, 0]}, {edges[i, 1]}) belongs to {counts[i]} faces, expected 2"
        )
    return len(edges)


def euler_characteristic(vertices, faces):
    edges, _ = mesh_edges(faces)
    return len(vertices) - len(edges) + len(faces)


def _signed_volume(vertices, faces):
    v = vertices[faces]
    return float(np.einsum("fi,fi->", v[:, 0], np.cross(v[:, 1], v[:, 2]))) / 6.0


def _connected_components(n_vertices, faces):
    """Label vertices by connected component via union-find."""
    parent = np.arange(n_vertices)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for f in faces:
        a = find(f[0])
        for v in (f[1], f[2]):
            b = find(v)
            if a != b:
                parent[b] = a
    return np.array([find(i) for i in range(n_vertices)])


# ====== Generator ======


def make_capsule_human(
    voxel_size: float = 0.03,
    blend: float = 0.05,
    weight_softness: float = 0.015,
    weight_floor: float = 0.02,
    name: str = "capsule-human",
) -> SkinnedModel:
    """Build the 16-joint capsule humanoid.

    voxel_size controls mesh resolution (the default lands near 4000
    vertices; supported configurations stay within 2000..8000), blend the
    fillet radius of the smooth capsule union, weight_softness the softmax
    temperature of the skin weights, and weight_floor the threshold below
    which weights snap to zero before renormalization.

    The default stance and blend are tuned together so that at rest every
    vertex's local-disk-excluded winding number stays below 1/2 (no false
    self-contact): limbs splay away from the trunk, junction pockets are
    filled, and the fillet rounds what remains. Tightening the stance or
    shrinking the blend re-introduces concave pockets whose vertices the
    collision classifier would flag.
    """
    joints = _joint_rest_positions()
    caps = _capsules(joints)

    radii = np.array([c[3] for c in caps])
    ends = np.concatenate([[c[1], c[2]] for c in caps])
    lo = ends.min(axis=0) - (radii.max() + 4.0 * voxel_size)
    hi = ends.max(axis=0) + (radii.max() + 4.0 * voxel_size)
    nx, ny, nz = (np.ceil((hi - lo) / voxel_size).astype(int) + 1)

    gx = lo[0] + voxel_size * np.arange(nx)
    gy = lo[1] + voxel_size * np.arange(ny)
    gz = lo[2] + voxel_size * np.arange(nz)
    grid = np.stack(np.meshgrid(gx, gy, gz, indexing="ij"), axis=-1).reshape(-1, 3)
    sdf = _smooth_union(_capsule_distances(grid, caps), blend).reshape(nx, ny, nz)

    verts, faces, _, _ = marching_cubes(sdf, level=0.0, spacing=(voxel_size,) * 3)
    verts = verts + lo

    # Weld exact duplicates and drop degenerate faces, then insist on a
    # single closed genus-zero surface rather than assuming one.
    verts, inverse = np.unique(verts.round(decimals=9), axis=0, return_inverse=True)
    faces = inverse[faces]
    faces = faces[
        (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    ]
    if _signed_volume(verts, faces) < 0.0:
        faces = faces[:, [0, 2, 1]]
    validate_closed_manifold(verts, faces)
    labels = _connected_components(len(verts), faces)
    if len(np.unique(labels)) != 1:
        raise NumericalError(
            f"capsule body polygonized into {len(np.unique(labels))} components; adjust voxel_size"
        )
    chi = euler_characteristic(verts, faces)
    if chi != 2:
        raise NumericalError(f"capsule body has Euler characteristic {chi}, expected 2")
    if not (2000 <= len(verts) <= 8000):
        raise NumericalError(
            f"capsule body has {len(verts)} vertices, outside the supported 2000..8000"
        )

    # Skin weights: softmax over per-joint capsule distances. Each joint's
    # distance is the nearest of its capsules; snapping small weights to
    # zero makes mid-limb vertices exactly rigid.
    dists = _capsule_distances(verts, caps)
    per_joint = np.full((len(verts), 16), np.inf)
    for i, (owner, _, _, _) in enumerate(caps):
        per_joint[:, owner] = np.minimum(per_joint[:, owner], dists[:, i])
    logits = -per_joint / weight_softness
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    w[w < weight_floor] = 0.0
    w /= w.sum(axis=1, keepdims=True)

    # Sampling exclusion: natural-contact regions at the crotch and armpits.
    centroids = verts[faces].mean(axis=1)
    anchors = np.array(
        [
            [0.0, 0.78, 0.0],          # crotch
            [0.16, 1.28, 0.0],         # left armpit
            [-0.16, 1.28, 0.0],        # right armpit
        ]
    )
    radius = np.array([0.10, 0.09, 0.09])
    near = np.linalg.norm(centroids[:, None, :] - anchors[None, :, :], axis=2) < radius[None, :]
    exclusion = np.flatnonzero(near.any(axis=1)).astype(np.int64)

    offsets = np.empty((16, 3))
    offsets[0] = joints[0]
    offsets[1:] = joints[1:] - joints[_PARENT[1:]]
    tree = KinematicTree(_PARENT.copy(), offsets)
    model = SkinnedModel(tree, verts, faces, w, exclusion_faces=exclusion, name=name)
    model._cache["joint_names"] = list(_JOINT_NAMES)
    return model

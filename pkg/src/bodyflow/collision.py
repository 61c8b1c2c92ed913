"""Self-intersection counting via generalized winding numbers.

The winding number of a query point is the sum of signed solid angles of
all triangles over 4 pi (van Oosterom & Strackee 1983 for the per-triangle
angle). For a closed oriented mesh it is 1 inside, 0 outside, and additive
over nested shells, so a point buried under two layers of surface scores 2.

A mesh vertex is classified penetrating when the winding at its position,
with its own 2-ring of faces excluded, exceeds 0.5. Excluding the local
disk removes the singular self-contribution; the remaining surface scores
just under 0.5 at ordinary convex spots, slightly negative in concave
valleys, and above 1 for vertices buried inside another body part.

The all-vertex count is a numba kernel parallelized over query vertices;
each query's accumulation is sequential, so results are deterministic
regardless of thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numba import njit, prange

from .body import SkinnedModel, check_pose, skin_vertices

_FOUR_PI = 4.0 * np.pi


# ====== Exact winding number, numpy path ======


def _solid_angles_block(tri, queries):
    """Signed solid angles, (Q, F), for triangle coords tri (F, 3, 3)."""
    a = tri[None, :, 0, :] - queries[:, None, :]
    b = tri[None, :, 1, :] - queries[:, None, :]
    c = tri[None, :, 2, :] - queries[:, None, :]
    la = np.linalg.norm(a, axis=2)
    lb = np.linalg.norm(b, axis=2)
    lc = np.linalg.norm(c, axis=2)
    det = np.einsum("qfi,qfi->qf", a, np.cross(b, c))
    den = (
        la * lb * lc
        + np.einsum("qfi,qfi->qf", a, b) * lc
        + np.einsum("qfi,qfi->qf", b, c) * la
        + np.einsum("qfi,qfi->qf", c, a) * lb
    )
    return 2.0 * np.arctan2(det, den)


def winding_number(vertices, faces, queries) -> np.ndarray:
    """Generalized winding number of each query point, (Q,).

    Exact summation over all faces in double precision. Queries lying on
    the surface sit on the jump of the winding function; values there are
    principal values, not classifications.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    tri = vertices[faces]
    out = np.empty(queries.shape[0], dtype=np.float64)
    block = max(1, int(4_000_000 // max(1, faces.shape[0])))
    for s in range(0, queries.shape[0], block):
        q = queries[s : s + block]
        out[s : s + q.shape[0]] = _solid_angles_block(tri, q).sum(axis=1) / _FOUR_PI
    return out


# ====== Numba kernel for the all-vertex excluded winding ======


@njit(cache=True, inline="always")
def _solid_angle_one(ax, ay, az, bx, by, bz, cx, cy, cz):
    la = np.sqrt(ax * ax + ay * ay + az * az)
    lb = np.sqrt(bx * bx + by * by + bz * bz)
    lc = np.sqrt(cx * cx + cy * cy + cz * cz)
    det = ax * (by * cz - bz * cy) + ay * (bz * cx - bx * cz) + az * (bx * cy - by * cx)
    den = (
        la * lb * lc
        + (ax * bx + ay * by + az * bz) * lc
        + (bx * cx + by * cy + bz * cz) * la
        + (cx * ax + cy * ay + cz * az) * lb
    )
    return 2.0 * np.arctan2(det, den)


@njit(cache=True, parallel=True)
def _excluded_winding_kernel(tri, queries, ex_indptr, ex_indices):
    Q = queries.shape[0]
    F = tri.shape[0]
    out = np.empty(Q, dtype=np.float64)
    for i in prange(Q):
        qx, qy, qz = queries[i, 0], queries[i, 1], queries[i, 2]
        tot = 0.0
        for f in range(F):
            tot += _solid_angle_one(
                tri[f, 0, 0] - qx, tri[f, 0, 1] - qy, tri[f, 0, 2] - qz,
                tri[f, 1, 0] - qx, tri[f, 1, 1] - qy, tri[f, 1, 2] - qz,
                tri[f, 2, 0] - qx, tri[f, 2, 1] - qy, tri[f, 2, 2] - qz,
            )
        for k in range(ex_indptr[i], ex_indptr[i + 1]):
            f = ex_indices[k]
            tot -= _solid_angle_one(
                tri[f, 0, 0] - qx, tri[f, 0, 1] - qy, tri[f, 0, 2] - qz,
                tri[f, 1, 0] - qx, tri[f, 1, 1] - qy, tri[f, 1, 2] - qz,
                tri[f, 2, 0] - qx, tri[f, 2, 1] - qy, tri[f, 2, 2] - qz,
            )
        out[i] = tot / _FOUR_PI
    return out


@njit(cache=True, parallel=True)
def _part_winding_kernel(tri, queries, ex_indptr, ex_indices,
                         face_start, face_end, cap_start, cap_end,
                         centers, radii):
    Q = queries.shape[0]
    P = face_start.shape[0]
    out = np.empty(Q, dtype=np.float64)
    for i in prange(Q):
        qx, qy, qz = queries[i, 0], queries[i, 1], queries[i, 2]
        tot = 0.0
        for p in range(P):
            dx = centers[p, 0] - qx
            dy = centers[p, 1] - qy
            dz = centers[p, 2] - qz
            if dx * dx + dy * dy + dz * dz > radii[p] * radii[p]:
                # whole part + its caps is closed and the query is outside
                # it, so the part's faces contribute exactly minus the caps
                for f in range(cap_start[p], cap_end[p]):
                    tot -= _solid_angle_one(
                        tri[f, 0, 0] - qx, tri[f, 0, 1] - qy, tri[f, 0, 2] - qz,
                        tri[f, 1, 0] - qx, tri[f, 1, 1] - qy, tri[f, 1, 2] - qz,
                        tri[f, 2, 0] - qx, tri[f, 2, 1] - qy, tri[f, 2, 2] - qz,
                    )
            else:
                for f in range(face_start[p], face_end[p]):
                    tot += _solid_angle_one(
                        tri[f, 0, 0] - qx, tri[f, 0, 1] - qy, tri[f, 0, 2] - qz,
                        tri[f, 1, 0] - qx, tri[f, 1, 1] - qy, tri[f, 1, 2] - qz,
                        tri[f, 2, 0] - qx, tri[f, 2, 1] - qy, tri[f, 2, 2] - qz,
                    )
        for k in range(ex_indptr[i], ex_indptr[i + 1]):
            f = ex_indices[k]
            tot -= _solid_angle_one(
                tri[f, 0, 0] - qx, tri[f, 0, 1] - qy, tri[f, 0, 2] - qz,
                tri[f, 1, 0] - qx, tri[f, 1, 1] - qy, tri[f, 1, 2] - qz,
                tri[f, 2, 0] - qx, tri[f, 2, 1] - qy, tri[f, 2, 2] - qz,
            )
        out[i] = tot / _FOUR_PI
    return out


def _boundary_loops(face_subset):
    """Closed vertex loops of the directed boundary edges of a face set."""
    e = np.concatenate([face_subset[:, [0, 1]], face_subset[:, [1, 2]], face_subset[:, [2, 0]]])
    key = e.min(axis=1).astype(np.int64) << 32 | e.max(axis=1)
    _, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
    boundary = e[counts[inv] == 1]
    nxt = dict(zip(boundary[:, 0].tolist(), boundary[:, 1].tolist()))
    loops = []
    while nxt:
        start, cur = next(iter(nxt.items()))
        loop = [start]
        while cur != start:
            loop.append(cur)
            cur = nxt.pop(cur)
        nxt.pop(start)
        loops.append(np.asarray(loop, dtype=np.int64))
    return loops


def _part_decomposition(model: SkinnedModel):
    """Cached face partition by dominant joint, with boundary loops.

    Each part's faces plus fan caps over its boundary loops form a closed
    oriented surface (cap triangles traverse the boundary edges backwards),
    which is what lets the kernel replace far-away parts by their caps.
    """
    if "part_decomposition" in model._cache:
        return model._cache["part_decomposition"]
    faces = model.faces
    fw = model.skin_weights[faces[:, 0]] + model.skin_weights[faces[:, 1]] + model.skin_weights[faces[:, 2]]
    part_of_face = np.argmax(fw, axis=1)
    parts = [np.flatnonzero(part_of_face == j) for j in range(model.tree.n_joints)]
    parts = [p for p in parts if p.size]
    perm = np.concatenate(parts)
    face_start = np.zeros(len(parts), dtype=np.int64)
    face_end = np.cumsum([p.size for p in parts]).astype(np.int64)
    face_start[1:] = face_end[:-1]
    loops, loop_part = [], []
    part_verts = []
    for pi, p in enumerate(parts):
        part_verts.append(np.unique(faces[p]))
        for loop in _boundary_loops(faces[p]):
            loops.append(loop)
            loop_part.append(pi)
    cap_sizes = np.array([len(l) for l in loops], dtype=np.int64)
    cap_of_part_start = np.zeros(len(parts), dtype=np.int64)
    cap_of_part_end = np.zeros(len(parts), dtype=np.int64)
    order = np.argsort(np.asarray(loop_part), kind="stable")
    loops = [loops[i] for i in order]
    loop_part = [loop_part[i] for i in order]
    sizes_sorted = np.array([len(l) for l in loops], dtype=np.int64)
    ends = np.cumsum(sizes_sorted)
    starts = ends - sizes_sorted
    n_face = int(face_end[-1])
    for pi in range(len(parts)):
        mine = [i for i, lp in enumerate(loop_part) if lp == pi]
        if mine:
            cap_of_part_start[pi] = n_face + starts[mine[0]]
            cap_of_part_end[pi] = n_face + ends[mine[-1]]
        else:
            cap_of_part_start[pi] = cap_of_part_end[pi] = n_face
    indptr, indices = _two_ring_faces(model)
    inv_perm = np.empty_like(perm)
    inv_perm[perm] = np.arange(perm.size)
    result = {
        "perm": perm,
        "face_start": face_start,
        "face_end": face_end,
        "cap_start": cap_of_part_start,
        "cap_end": cap_of_part_end,
        "loops": loops,
        "part_verts": part_verts,
        "ex_indptr": indptr,
        "ex_indices": inv_perm[indices],
    }
    model._cache["part_decomposition"] = result
    return result


def _posed_part_buffers(model: SkinnedModel, pv):
    """Triangle buffer (part faces then caps), bounding spheres, for pose pv."""
    d = _part_decomposition(model)
    tri_f = pv[model.faces[d["perm"]]]
    cap_tris = []
    for loop in d["loops"]:
        ring = pv[loop]
        centroid = ring.mean(axis=0)
        nxt = np.roll(ring, -1, axis=0)
        cap = np.empty((len(loop), 3, 3))
        cap[:, 0] = centroid
        cap[:, 1] = nxt
        cap[:, 2] = ring
        cap_tris.append(cap)
    tri = np.concatenate([tri_f] + cap_tris, axis=0) if cap_tris else tri_f
    P = len(d["part_verts"])
    centers = np.empty((P, 3))
    radii = np.empty(P)
    for pi, vs in enumerate(d["part_verts"]):
        pts = pv[vs]
        centers[pi] = pts.mean(axis=0)
        # pad so a part's own extremal vertices cannot round to the far path
        radii[pi] = np.sqrt(((pts - centers[pi]) ** 2).sum(axis=1).max()) + 1e-9
    return np.ascontiguousarray(tri), centers, radii, d


def _two_ring_faces(model: SkinnedModel):
    """CSR (indptr, indices): faces touching any vertex within 2 edges of v."""
    if "two_ring_faces" in model._cache:
        return model._cache["two_ring_faces"]
    V = model.n_vertices
    F = model.n_faces
    faces = model.faces
    rows = np.concatenate([faces[:, 0], faces[:, 1], faces[:, 2]])
    cols = np.tile(np.arange(F, dtype=np.int64), 3)
    vf = sp.csr_matrix((np.ones(len(rows), bool), (rows, cols)), shape=(V, F))
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    adj = sp.csr_matrix((np.ones(len(e), bool), (e[:, 0], e[:, 1])), shape=(V, V))
    adj = adj + adj.T + sp.eye(V, dtype=bool, format="csr")
    ring2 = (adj @ adj).astype(bool)
    ex = (ring2 @ vf).tocsr()
    ex.sort_indices()
    result = (ex.indptr.astype(np.int64), ex.indices.astype(np.int64))
    model._cache["two_ring_faces"] = result
    return result


# ====== Classification ======


@dataclass
class CollisionReport:
    """Outcome of a self-intersection scan at one pose."""

    count: int
    penetrating: np.ndarray  # vertex indices with excluded winding > 0.5
    winding: np.ndarray  # (V,) excluded winding per vertex
    per_part_counts: dict  # dominant joint -> number of penetrating vertices

    @property
    def collision_free(self) -> bool:
        return self.count == 0


def excluded_winding(model: SkinnedModel, theta=None, posed_vertices=None) -> np.ndarray:
    """2-ring-excluded winding number at every mesh vertex, (V,)."""
    if posed_vertices is None:
        theta = check_pose(model, theta)
        posed_vertices = skin_vertices(model, theta)
    tri, centers, radii, d = _posed_part_buffers(model, posed_vertices)
    return _part_winding_kernel(
        tri, np.ascontiguousarray(posed_vertices),
        d["ex_indptr"], d["ex_indices"],
        d["face_start"], d["face_end"], d["cap_start"], d["cap_end"],
        centers, radii,
    )


def self_intersection_count(model: SkinnedModel, theta=None, posed_vertices=None) -> CollisionReport:
    """Count mesh vertices buried inside another part of the posed surface."""
    w = excluded_winding(model, theta, posed_vertices)
    penetrating = np.flatnonzero(w > 0.5)
    dom = model.dominant_joint()
    per_part: dict = {}
    for v in penetrating:
        j = int(dom[v])
        per_part[j] = per_part.get(j, 0) + 1
    return CollisionReport(
        count=int(penetrating.size),
        penetrating=penetrating,
        winding=w,
        per_part_counts=per_part,
    )

"""Structured-text (JSON) file formats and Wavefront OBJ export.

Every format is UTF-8 JSON written with sorted keys and compact separators,
so a fixed seed and config reproduce output files byte for byte. Loaders
validate the owning module's invariants and report the first violation with
its index.
"""

from __future__ import annotations

import json

import numpy as np

from .body import KinematicTree, SkinnedModel
from .errors import ValidationError
from .fields import MlpWeights
from .init_strategies import KeyposeDictionary
from .integrate import Trajectory
from .sampling import SampleSet


def _dump(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _load(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _need(doc, key, path):
    if key not in doc:
        raise ValidationError(f"{path}: missing field '{key}'")
    return doc[key]


# ====== Skinned model ======


def check_manifold(vertices, faces):
    """Validate the closed-manifold invariant; report the first violation."""
    faces = np.asarray(faces)
    V = len(vertices)
    if faces.size and (faces.min() < 0 or faces.max() >= V):
        bad = int(np.flatnonzero((faces < 0) | (faces >= V)).ravel()[0] // 3)
        raise ValidationError(f"model: face {bad} references a vertex outside [0, {V})")
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    key = e.min(axis=1).astype(np.int64) << 32 | e.max(axis=1)
    uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
    if np.any(counts != 2):
        k = int(uniq[np.flatnonzero(counts != 2)[0]])
        raise ValidationError(
            f"model: edge ({k >> 32}, {k & 0xffffffff}) is shared by "
            f"{int(counts[counts != 2][0])} faces, expected 2"
        )
    # opposite traversal directions = consistent orientation
    dkey = e[:, 0].astype(np.int64) << 32 | e[:, 1]
    _, dcounts = np.unique(dkey, return_counts=True)
    if np.any(dcounts != 1):
        raise ValidationError("model: inconsistently oriented faces (repeated directed edge)")


def save_model(model: SkinnedModel, path):
    """Write a skinned model file."""
    _dump(
        {
            "name": model.name,
            "vertices": model.template_vertices.tolist(),
            "faces": model.faces.tolist(),
            "parents": model.tree.parent.tolist(),
            "rest_offsets": model.tree.rest_offset.tolist(),
            "weights": model.skin_weights.tolist(),
            "exclusion_faces": model.exclusion_faces.tolist(),
        },
        path,
    )


def load_model(path) -> SkinnedModel:
    """Read and fully validate a skinned model file.

    Accepts dense weights (V x J rows) or sparse triplets
    [[vertex, joint, weight], ...].
    """
    doc = _load(path)
    vertices = np.asarray(_need(doc, "vertices", path), dtype=np.float64)
    faces = np.asarray(_need(doc, "faces", path), dtype=np.int64)
    parents = np.asarray(_need(doc, "parents", path), dtype=np.int64)
    offsets = np.asarray(_need(doc, "rest_offsets", path), dtype=np.float64)
    tree = KinematicTree(parent=parents, rest_offset=offsets)
    V, J = len(vertices), tree.n_joints
    raw_w = _need(doc, "weights", path)
    if raw_w and isinstance(raw_w[0], (list, tuple)) and len(raw_w[0]) == 3 and len(raw_w) != V:
        weights = np.zeros((V, J), dtype=np.float64)
        for k, (vi, ji, w) in enumerate(raw_w):
            vi, ji = int(vi), int(ji)
            if not (0 <= vi < V and 0 <= ji < J):
                raise ValidationError(f"{path}: weight triplet {k} out of range")
            weights[vi, ji] += float(w)
    else:
        weights = np.asarray(raw_w, dtype=np.float64)
        if weights.shape != (V, J):
            raise ValidationError(
                f"{path}: dense weights shape {weights.shape}, expected ({V}, {J})"
            )
    if np.any(weights < 0):
        bad = int(np.argwhere(weights < 0)[0, 0])
        raise ValidationError(f"{path}: negative skin weight at vertex {bad}")
    sums = weights.sum(axis=1)
    off = np.flatnonzero(np.abs(sums - 1.0) > 1e-9)
    if off.size:
        raise ValidationError(
            f"{path}: skin weights of vertex {int(off[0])} sum to {sums[off[0]]:.12f}, expected 1"
        )
    exclusion = np.asarray(doc.get("exclusion_faces", []), dtype=np.int64)
    if exclusion.size and (exclusion.min() < 0 or exclusion.max() >= len(faces)):
        bad = int(exclusion[(exclusion < 0) | (exclusion >= len(faces))][0])
        raise ValidationError(f"{path}: exclusion face {bad} outside [0, {len(faces)})")
    check_manifold(vertices, faces)
    return SkinnedModel(
        tree=tree,
        template_vertices=vertices,
        faces=faces,
        skin_weights=weights,
        exclusion_faces=exclusion,
        name=doc.get("name", ""),
    )


# ====== Poses and sequences ======


def save_pose(theta, path):
    _dump({"theta": np.asarray(theta, dtype=np.float64).tolist()}, path)


def load_pose(path) -> np.ndarray:
    doc = _load(path)
    if "theta" in doc:
        return np.asarray(doc["theta"], dtype=np.float64)
    if "poses" in doc:
        return np.asarray(doc["poses"][0], dtype=np.float64)
    raise ValidationError(f"{path}: neither a pose file nor a sequence file")


def save_sequence(path, poses, fps: float, model_name: str = "", gt_joints=None):
    """Write a pose sequence file (optionally with ground-truth joints)."""
    poses = np.asarray(poses, dtype=np.float64)
    d = poses.shape[1]
    doc = {
        "d": d,
        "joints": (d - 3) // 3,
        "fps": float(fps),
        "model": model_name,
        "poses": poses.tolist(),
    }
    if gt_joints is not None:
        doc["gt_joints"] = np.asarray(gt_joints, dtype=np.float64).tolist()
    _dump(doc, path)


def load_sequence(path):
    """Read a sequence file; returns (poses (T, d), fps, model_name, gt_joints or None)."""
    doc = _load(path)
    rows = _need(doc, "poses", path)
    d = int(_need(doc, "d", path))
    # report the first offending row before numpy rejects ragged input
    bad = next((i for i, r in enumerate(rows) if len(r) != d), None)
    if bad is not None:
        raise ValidationError(f"{path}: pose row {bad} does not have length d = {d}")
    poses = np.asarray(rows, dtype=np.float64).reshape(len(rows), d)
    fps = float(_need(doc, "fps", path))
    if fps <= 0:
        raise ValidationError(f"{path}: fps must be positive")
    gt = doc.get("gt_joints")
    if gt is not None:
        gt = np.asarray(gt, dtype=np.float64)
        if gt.shape[0] != poses.shape[0] or gt.ndim != 3 or gt.shape[2] != 3:
            raise ValidationError(f"{path}: gt_joints must be (T, J, 3) aligned with poses")
    return poses, fps, doc.get("model", ""), gt


# ====== Sample sets, keyposes, MLP weights, trajectories ======


def save_sampleset(samples: SampleSet, path):
    _dump(
        {"seed": samples.seed, "face": samples.face.tolist(), "bary": samples.bary.tolist()},
        path,
    )


def load_sampleset(path) -> SampleSet:
    doc = _load(path)
    return SampleSet(
        face=np.asarray(_need(doc, "face", path), dtype=np.int64),
        bary=np.asarray(_need(doc, "bary", path), dtype=np.float64),
        seed=int(doc.get("seed", 0)),
    )


def save_keyposes(dictionary: KeyposeDictionary, path):
    _dump(
        {"poses": dictionary.poses.tolist(), "keypoints": dictionary.keypoints.tolist()},
        path,
    )


def load_keyposes(path) -> KeyposeDictionary:
    doc = _load(path)
    return KeyposeDictionary(
        poses=np.asarray(_need(doc, "poses", path), dtype=np.float64),
        keypoints=np.asarray(_need(doc, "keypoints", path), dtype=np.float64),
    )


def save_mlp_weights(weights: MlpWeights, path):
    _dump(
        {
            "n_f": weights.n_f,
            "layers": [
                {"shape": list(W.shape), "w": W.ravel().tolist(), "b": b.tolist()}
                for W, b in weights.layers
            ],
        },
        path,
    )


def load_mlp_weights(path) -> MlpWeights:
    doc = _load(path)
    layers = []
    for li, layer in enumerate(_need(doc, "layers", path)):
        shape = layer.get("shape")
        w = np.asarray(layer.get("w"), dtype=np.float64)
        b = np.asarray(layer.get("b"), dtype=np.float64)
        if shape is None or w.size != shape[0] * shape[1]:
            raise ValidationError(f"{path}: layer {li} values do not match its shape")
        layers.append((w.reshape(shape), b))
    return MlpWeights(layers=layers, n_f=int(doc.get("n_f", 20)))


def save_trajectory(traj: Trajectory, path):
    _dump(
        {
            "times": traj.times.tolist(),
            "poses": traj.poses.tolist(),
            "diagnostics": traj.diagnostics,
            "stop_reason": traj.stop_reason,
        },
        path,
    )


def load_trajectory(path) -> Trajectory:
    doc = _load(path)
    return Trajectory(
        times=np.asarray(_need(doc, "times", path), dtype=np.float64),
        poses=np.asarray(_need(doc, "poses", path), dtype=np.float64),
        diagnostics=doc.get("diagnostics", []),
        stop_reason=doc.get("stop_reason", "completed"),
    )


# ====== Wavefront OBJ ======


def export_obj(vertices, faces, path):
    """Write an OBJ mesh: meters, 8 decimals, 1-based faces, fixed format."""
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    lines = ["v %.8f %.8f %.8f" % (x, y, z) for x, y, z in vertices]
    lines += ["f %d %d %d" % (a + 1, b + 1, c + 1) for a, b, c in faces]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def load_obj(path):
    """Read vertices and faces back from an OBJ file (v/f lines only)."""
    vs, fs = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vs.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                fs.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return np.asarray(vs, dtype=np.float64), np.asarray(fs, dtype=np.int64)

"""Collision-free starting poses: successive frames, jitter, keyposes.

The three strategies run as a cascade. The previous corrected frame is
reused when it is still clean; otherwise the offending joints of the raw
estimate are jittered until the body separates; otherwise the nearest pose
from a prebuilt collision-free dictionary seeds the integration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .body import SkinnedModel, check_pose, joint_positions
from .collision import self_intersection_count
from .errors import NumericalError, ValidationError

log = logging.getLogger(__name__)


@dataclass
class KeyposeDictionary:
    """K collision-free poses with their root-aligned joint embeddings."""

    poses: np.ndarray  # (K, d)
    keypoints: np.ndarray  # (K, J, 3), root-aligned joint positions

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float64)
        self.keypoints = np.asarray(self.keypoints, dtype=np.float64)
        if self.poses.ndim != 2 or self.poses.shape[0] < 1:
            raise ValidationError("keypose dictionary: need at least one pose")
        if self.keypoints.shape[0] != self.poses.shape[0] or self.keypoints.ndim != 3:
            raise ValidationError("keypose dictionary: keypoints must be (K, J, 3)")

    @property
    def size(self) -> int:
        return int(self.poses.shape[0])


def _aligned_joints(model: SkinnedModel, theta) -> np.ndarray:
    j = joint_positions(model, theta)
    return j - j[0]


def _keypoint_distance(a, b) -> float:
    # root-aligned mean per-joint Euclidean distance
    return float(np.linalg.norm(a - b, axis=1).mean())


def successive_frame_init(prev_corrected, model: SkinnedModel):
    """Reuse the previous corrected pose when it is still collision-free.

    Parameters
    ----------
    prev_corrected : ndarray (d,) or None
    model : SkinnedModel

    Returns
    -------
    ndarray or None
        The pose, or None when absent or no longer clean (fall through).
    """
    if prev_corrected is None:
        return None
    prev_corrected = check_pose(model, prev_corrected)
    if self_intersection_count(model, prev_corrected).count > 0:
        log.warning("successive-frame init: previous corrected pose now collides; falling through")
        return None
    return prev_corrected


def jitter_init(model: SkinnedModel, estimate, seed: int, sigma: float = 0.1,
                max_tries: int = 200) -> np.ndarray:
    """Perturb the offending joints of a colliding estimate until clean.

    Only the axis-angle parameters of joints reported penetrating are
    touched, with zero-mean uniform noise of half-width sigma; the width
    doubles every ceil(max_tries / 4) failures, capped at 8 sigma. All other
    parameters are returned bit-identical. Deterministic per seed.

    Parameters
    ----------
    model : SkinnedModel
    estimate : ndarray, (d,)
    seed : int
    sigma : float
        Initial half-width, radians, > 0.
    max_tries : int
        >= 1.

    Returns
    -------
    ndarray, (d,)

    Raises
    ------
    NumericalError
        "jitter failed" when max_tries is exhausted.
    """
    if sigma <= 0:
        raise ValidationError("jitter: sigma must be positive")
    if max_tries < 1:
        raise ValidationError("jitter: max_tries must be at least 1")
    estimate = check_pose(model, estimate)
    report = self_intersection_count(model, estimate)
    if report.count == 0:
        return estimate
    offenders = sorted(report.per_part_counts)
    idx = np.concatenate([np.arange(3 + 3 * j, 6 + 3 * j) for j in offenders])
    rng = np.random.Generator(np.random.Philox(seed))
    escalate_every = -(-max_tries // 4)  # ceil
    for tries in range(max_tries):
        width = min(sigma * 2.0 ** (tries // escalate_every), 8.0 * sigma)
        cand = estimate.copy()
        cand[idx] += rng.uniform(-width, width, idx.size)
        if self_intersection_count(model, cand).count == 0:
            return cand
    raise NumericalError(f"jitter failed after {max_tries} tries (sigma = {sigma})")


def build_keypose_dict(pose_corpus, K: int, model: SkinnedModel, seed: int,
                       max_iter: int = 100) -> KeyposeDictionary:
    """Cluster a pose corpus and keep the nearest corpus pose per center.

    Poses embed as root-aligned joint positions; k-means++ seeding plus
    Lloyd iterations on the flattened embedding, then each centroid is
    replaced by the corpus pose minimizing the keypoint distance to it.
    Colliding corpus poses are dropped with a warning.

    Parameters
    ----------
    pose_corpus : iterable of (d,) poses
    K : int
        Dictionary size, <= clean corpus size.
    model : SkinnedModel
    seed : int
    max_iter : int
        Lloyd iteration cap.

    Returns
    -------
    KeyposeDictionary
    """
    poses = [check_pose(model, p) for p in pose_corpus]
    clean = []
    for i, p in enumerate(poses):
        if self_intersection_count(model, p).count > 0:
            log.warning("keypose corpus: dropping colliding pose %d", i)
        else:
            clean.append(p)
    if len(clean) < K:
        raise ValidationError(
            f"keypose corpus: {len(clean)} clean poses < K = {K}"
        )
    poses = np.stack(clean)
    emb = np.stack([_aligned_joints(model, p) for p in poses])  # (N, J, 3)
    flat = emb.reshape(len(poses), -1)
    rng = np.random.Generator(np.random.Philox(seed))
    centers = _kmeans_pp(flat, K, rng)
    for _ in range(max_iter):
        d2 = ((flat[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for k in range(K):
            members = flat[assign == k]
            if len(members):
                new_centers[k] = members.mean(axis=0)
            else:
                # reseed an empty cluster at the point farthest from its center
                far = int(np.argmax(d2[np.arange(len(flat)), assign]))
                new_centers[k] = flat[far]
        if np.allclose(new_centers, centers, rtol=0, atol=1e-12):
            centers = new_centers
            break
        centers = new_centers
    chosen = []
    for k in range(K):
        c = centers[k].reshape(-1, 3)
        dists = [_keypoint_distance(e, c) for e in emb]
        chosen.append(int(np.argmin(dists)))
    chosen = sorted(set(chosen))
    # distinct centroids can snap to the same corpus pose; refill with the
    # lowest-index unused poses so the dictionary keeps K entries
    k = 0
    while len(chosen) < K:
        if k not in chosen:
            chosen.append(k)
        k += 1
    chosen = np.asarray(sorted(chosen))
    return KeyposeDictionary(poses=poses[chosen], keypoints=emb[chosen])


def _kmeans_pp(X, K, rng):
    n = X.shape[0]
    centers = np.empty((K, X.shape[1]), dtype=np.float64)
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for k in range(1, K):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centers[k] = X[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((X - centers[k]) ** 2).sum(axis=1))
    return centers


def keypose_init(dictionary: KeyposeDictionary, estimate, model: SkinnedModel) -> np.ndarray:
    """Dictionary pose nearest the estimate in keypoint distance.

    Parameters
    ----------
    dictionary : KeyposeDictionary
    estimate : ndarray, (d,)
    model : SkinnedModel

    Returns
    -------
    ndarray, (d,)
    """
    estimate = check_pose(model, estimate)
    e = _aligned_joints(model, estimate)
    dists = [_keypoint_distance(kp, e) for kp in dictionary.keypoints]
    return dictionary.poses[int(np.argmin(dists))].copy()


def cascade_init(model: SkinnedModel, estimate, prev_corrected=None,
                 dictionary: KeyposeDictionary = None, seed: int = 0,
                 sigma: float = 0.1, max_tries: int = 200):
    """Run the strategy cascade; returns (pose, strategy name).

    Successive frame first, then jitter of the estimate, then the nearest
    keypose. Raises when every available strategy is exhausted.

    Parameters
    ----------
    model : SkinnedModel
    estimate : ndarray, (d,)
        The frame's raw pose estimate.
    prev_corrected : ndarray or None
    dictionary : KeyposeDictionary or None
    seed, sigma, max_tries
        Jitter parameters.

    Returns
    -------
    (ndarray, str)

    Raises
    ------
    NumericalError
        Naming the exhausted strategies.
    """
    pose = successive_frame_init(prev_corrected, model)
    if pose is not None:
        return pose, "successive"
    tried = ["successive"] if prev_corrected is not None else []
    try:
        return jitter_init(model, estimate, seed, sigma, max_tries), "jitter"
    except NumericalError:
        tried.append("jitter")
    if dictionary is not None:
        return keypose_init(dictionary, estimate, model), "keyposes"
    raise NumericalError(
        "initialization cascade exhausted: " + ", ".join(tried) + "; no keypose dictionary"
    )

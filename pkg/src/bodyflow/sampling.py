"""Area-uniform surface sampling with fixed barycentric attachments.

Samples are drawn once from the non-excluded rest-pose surface and stay
attached to their faces; evaluating them at a pose is a barycentric blend of
the skinned face vertices. Region masks are sets of sample indices chosen by
proximity at a reference pose and likewise travel with the body afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body import SkinnedModel, check_pose, skin_vertices
from .errors import ValidationError


@dataclass
class SampleSet:
    """S fixed surface attachments.

    Attributes
    ----------
    face : ndarray, (S,) int
        Face index of each attachment.
    bary : ndarray, (S, 3)
        Barycentric coordinates on that face, non-negative, summing to 1.
    seed : int
        Seed of the stream that produced the set.
    """

    face: np.ndarray
    bary: np.ndarray
    seed: int

    def __post_init__(self):
        self.face = np.asarray(self.face, dtype=np.int64)
        self.bary = np.asarray(self.bary, dtype=np.float64)
        if self.face.ndim != 1 or self.bary.shape != (self.face.shape[0], 3):
            raise ValidationError("sample set: face must be (S,), bary (S, 3)")
        if self.face.shape[0] < 1:
            raise ValidationError("sample set: S must be at least 1")
        if np.any(self.bary < -1e-12) or np.any(np.abs(self.bary.sum(axis=1) - 1.0) > 1e-12):
            raise ValidationError("sample set: barycentric rows must be >= 0 and sum to 1")

    @property
    def size(self) -> int:
        return int(self.face.shape[0])


@dataclass
class RegionMask:
    """Subset of a SampleSet designating a source region."""

    members: np.ndarray  # sorted sample indices

    def __post_init__(self):
        self.members = np.unique(np.asarray(self.members, dtype=np.int64))
        if self.members.size == 0:
            raise ValidationError("empty source region")

    @property
    def size(self) -> int:
        return int(self.members.shape[0])


def face_areas(model: SkinnedModel) -> np.ndarray:
    """Rest-pose triangle areas, (F,)."""
    v = model.template_vertices[model.faces]
    return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)


def sample_surface(model: SkinnedModel, S: int, seed: int) -> SampleSet:
    """Draw S attachments uniformly by area from the non-excluded surface.

    Faces are chosen with probability proportional to rest-pose area among
    faces outside the model's exclusion set; within a face the point is
    uniform (square-root warp of the unit square). Deterministic per seed.

    Parameters
    ----------
    model : SkinnedModel
    S : int
        Number of samples, >= 1.
    seed : int
        Philox stream seed.

    Returns
    -------
    SampleSet
    """
    if S < 1:
        raise ValidationError("sample_surface: S must be at least 1")
    areas = face_areas(model)
    keep = np.ones(model.n_faces, dtype=bool)
    keep[model.exclusion_faces] = False
    if not np.any(keep):
        raise ValidationError("empty sampling domain")
    probs = np.where(keep, areas, 0.0)
    probs = probs / probs.sum()
    rng = np.random.Generator(np.random.Philox(seed))
    face = rng.choice(model.n_faces, size=S, p=probs)
    # sqrt warp: (u, v) uniform on the square -> uniform on the triangle
    r1 = np.sqrt(rng.random(S))
    r2 = rng.random(S)
    bary = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    return SampleSet(face=face, bary=bary, seed=int(seed))


def evaluate_attachments(model: SkinnedModel, theta, samples: SampleSet,
                         posed_vertices=None) -> np.ndarray:
    """Posed positions of the attachments, (S, 3).

    Parameters
    ----------
    model : SkinnedModel
    theta : ndarray, (d,)
        Pose; ignored when posed_vertices is given.
    samples : SampleSet
    posed_vertices : ndarray, (V, 3), optional
        Already-skinned vertices, to avoid re-skinning.

    Returns
    -------
    ndarray, (S, 3)
    """
    if np.any(samples.face >= model.n_faces):
        raise ValidationError("sample set references faces outside the model")
    if posed_vertices is None:
        theta = check_pose(model, theta)
        posed_vertices = skin_vertices(model, theta)
    tri = posed_vertices[model.faces[samples.face]]  # (S, 3, 3)
    return np.einsum("sa,sab->sb", samples.bary, tri)


def select_region(model: SkinnedModel, samples: SampleSet, seed_point, radius: float,
                  theta) -> RegionMask:
    """Samples whose posed position lies within `radius` of `seed_point`.

    Parameters
    ----------
    model : SkinnedModel
    samples : SampleSet
    seed_point : array-like, (3,)
        Region center in world coordinates at the reference pose.
    radius : float
        Euclidean selection radius, meters, > 0.
    theta : ndarray, (d,)
        Reference pose at which membership is decided.

    Returns
    -------
    RegionMask

    Raises
    ------
    ValidationError
        If no sample falls inside the radius.
    """
    if radius <= 0:
        raise ValidationError("select_region: radius must be positive")
    seed_point = np.asarray(seed_point, dtype=np.float64)
    pts = evaluate_attachments(model, theta, samples)
    d = np.linalg.norm(pts - seed_point[None, :], axis=1)
    members = np.flatnonzero(d <= radius)
    if members.size == 0:
        raise ValidationError("empty source region")
    return RegionMask(members=members)

"""Surface sampling: area weighting, attachment evaluation, region selection."""

import numpy as np
import pytest
from scipy.stats import chisquare

from bodyflow import (
    KinematicTree,
    RegionMask,
    SampleSet,
    SkinnedModel,
    ValidationError,
    compose_root_rigid,
    evaluate_attachments,
    face_areas,
    sample_surface,
    select_region,
    skin_vertices,
    zero_pose,
)
from bodyflow.rotations import axis_angle_to_matrix

from conftest import family_pose


def _flat_model(vertices, faces, exclusion=()):
    """Single-joint model whose skinning is the identity map."""
    tree = KinematicTree(parent=[-1], rest_offset=[[0.0, 0.0, 0.0]])
    w = np.ones((len(vertices), 1))
    return SkinnedModel(tree, np.asarray(vertices, float), np.asarray(faces, np.int64),
                        w, exclusion_faces=np.asarray(exclusion, np.int64))


def test_area_ratio_two_triangles():
    # areas 0.5 and 1.5: expect counts near 1:3
    verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [3, 0, 1], [4, 0, 1], [3, 3, 1]]
    m = _flat_model(verts, [[0, 1, 2], [3, 4, 5]])
    assert np.allclose(face_areas(m), [0.5, 1.5])
    s = sample_surface(m, 40000, seed=5)
    n1 = int(np.sum(s.face == 1))
    p = 0.75
    sigma = np.sqrt(40000 * p * (1 - p))
    assert abs(n1 - 40000 * p) < 3 * sigma


def test_area_distribution_chi_square():
    # 10 faces of varying area; empirical counts must match the area law
    rng = np.random.default_rng(0)
    verts = rng.random((30, 3))
    faces = np.arange(30).reshape(10, 3)
    m = _flat_model(verts, faces)
    s = sample_surface(m, 100000, seed=17)
    counts = np.bincount(s.face, minlength=10)
    expected = face_areas(m) / face_areas(m).sum() * 100000
    assert chisquare(counts, expected).pvalue > 0.01


def test_within_face_uniformity():
    m = _flat_model([[0, 0, 0], [2, 0, 0], [0, 2, 0]], [[0, 1, 2]])
    s = sample_surface(m, 100000, seed=2)
    assert np.all(s.bary >= 0)
    assert np.allclose(s.bary.sum(axis=1), 1.0)
    # uniform density on the triangle has barycentric means (1/3, 1/3, 1/3)
    assert np.max(np.abs(s.bary.mean(axis=0) - 1.0 / 3.0)) < 5e-3


def test_determinism_and_seed_sensitivity(model):
    a = sample_surface(model, 500, seed=9)
    b = sample_surface(model, 500, seed=9)
    assert np.array_equal(a.face, b.face)
    assert np.array_equal(a.bary, b.bary)
    c = sample_surface(model, 500, seed=10)
    assert not np.array_equal(a.face, c.face)


def test_exclusion_faces_never_sampled(model):
    assert model.exclusion_faces.size > 0
    s = sample_surface(model, 1000, seed=3)
    assert s.size == 1000
    assert not np.isin(s.face, model.exclusion_faces).any()


def test_all_faces_excluded_raises():
    m = _flat_model([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]], exclusion=[0])
    with pytest.raises(ValidationError, match="empty sampling domain"):
        sample_surface(m, 10, seed=0)
    with pytest.raises(ValidationError):
        sample_surface(m, 0, seed=0)


def test_sampleset_validation():
    with pytest.raises(ValidationError):
        SampleSet(face=[0], bary=[[0.5, 0.2, 0.2]], seed=0)  # does not sum to 1
    with pytest.raises(ValidationError):
        SampleSet(face=[0], bary=[[1.2, -0.1, -0.1]], seed=0)
    with pytest.raises(ValidationError):
        SampleSet(face=np.empty(0, np.int64), bary=np.empty((0, 3)), seed=0)


def test_evaluate_matches_direct_interpolation(model):
    rng = np.random.default_rng(21)
    theta = family_pose(model, rng)
    s = sample_surface(model, 200, seed=4)
    pts = evaluate_attachments(model, theta, s)
    pv = skin_vertices(model, theta)
    ref = np.empty((200, 3))
    for i in range(200):
        a, b, c = model.faces[s.face[i]]
        ref[i] = s.bary[i, 0] * pv[a] + s.bary[i, 1] * pv[b] + s.bary[i, 2] * pv[c]
    assert np.max(np.abs(pts - ref)) < 1e-14


def test_corner_attachment_is_vertex(model):
    s = SampleSet(face=[120], bary=[[0.0, 1.0, 0.0]], seed=0)
    theta = zero_pose(model)
    pts = evaluate_attachments(model, theta, s)
    v = model.faces[120][1]
    assert np.array_equal(pts[0], skin_vertices(model, theta)[v])


def test_rest_points_lie_on_template(model):
    s = sample_surface(model, 300, seed=6)
    pts = evaluate_attachments(model, zero_pose(model), s)
    tri = model.template_vertices[model.faces[s.face]]
    ref = np.einsum("sa,sab->sb", s.bary, tri)
    assert np.max(np.abs(pts - ref)) < 1e-12


def test_rigid_commutation(model):
    s = sample_surface(model, 150, seed=8)
    theta = zero_pose(model)
    R = axis_angle_to_matrix(np.array([0.2, 0.9, -0.4]))
    t = np.array([0.3, -1.1, 0.7])
    moved = compose_root_rigid(model, theta, R, t)
    a = evaluate_attachments(model, moved, s)
    b = evaluate_attachments(model, theta, s) @ R.T + t
    assert np.max(np.abs(a - b)) < 1e-12


def test_evaluate_rejects_foreign_faces(model):
    s = SampleSet(face=[model.n_faces + 5], bary=[[1.0, 0.0, 0.0]], seed=0)
    with pytest.raises(ValidationError):
        evaluate_attachments(model, zero_pose(model), s)


def test_select_region_saturation(model):
    s = sample_surface(model, 400, seed=1)
    theta = zero_pose(model)
    center = evaluate_attachments(model, theta, s).mean(axis=0)
    mask = select_region(model, s, center, model.bounding_box_diagonal() * 2, theta)
    assert mask.size == 400


def test_select_region_matches_distance_oracle(model):
    s = sample_surface(model, 2000, seed=12)
    theta = zero_pose(model)
    names = model._cache["joint_names"]
    dom = model.dominant_joint()
    wrist = names.index("l_wrist")
    # seed at the hand-tip vertex (wrist-dominated, farthest out along the arm)
    hand = np.flatnonzero(dom == wrist)
    seed_point = model.template_vertices[hand[np.argmax(model.template_vertices[hand, 0])]]
    mask = select_region(model, s, seed_point, 0.05, theta)
    pts = evaluate_attachments(model, theta, s)
    d = np.linalg.norm(pts - seed_point, axis=1)
    assert np.array_equal(mask.members, np.flatnonzero(d <= 0.05))
    # everything that close to the hand tip must sit on arm-dominated faces
    arm = {names.index("l_wrist"), names.index("l_elbow")}
    corner = model.faces[s.face[mask.members], 0]
    assert set(dom[corner]).issubset(arm)


def test_select_region_empty_and_invalid(model):
    s = sample_surface(model, 100, seed=0)
    theta = zero_pose(model)
    with pytest.raises(ValidationError, match="empty source region"):
        select_region(model, s, np.array([50.0, 50.0, 50.0]), 0.01, theta)
    with pytest.raises(ValidationError):
        select_region(model, s, np.zeros(3), -1.0, theta)
    with pytest.raises(ValidationError):
        RegionMask(members=np.empty(0, np.int64))

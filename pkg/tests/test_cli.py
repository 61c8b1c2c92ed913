"""Command line: exit codes, outputs, and reproducibility (in-process)."""

import json

import numpy as np
import pytest

from bodyflow import (
    collision_counts,
    joint_positions,
    skin_vertices,
    zero_pose,
)
from bodyflow.cli import main
from bodyflow.fileio import (
    load_keyposes,
    load_obj,
    load_sequence,
    load_trajectory,
    save_pose,
    save_sequence,
)

from conftest import clean_family_pose, collision_pose


def _graze_pose(model):
    theta = zero_pose(model)
    j = model._cache["joint_names"].index("l_shoulder")
    theta[3 + 3 * j + 2] = -0.2
    return theta


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


# ====== export ======


def test_export_rest_and_posed(model, tmp_path, capsys):
    out = tmp_path / "rest.obj"
    assert main(["export", "--out", str(out)]) == 0
    assert "wrote" in capsys.readouterr().out
    verts, faces = load_obj(out)
    assert verts.shape == model.template_vertices.shape
    assert np.array_equal(faces, model.faces)
    assert np.allclose(verts, skin_vertices(model, zero_pose(model)), atol=1e-7)

    theta = clean_family_pose(model, np.random.default_rng(2))
    pose_path = tmp_path / "pose.json"
    save_pose(theta, pose_path)
    out2 = tmp_path / "posed.obj"
    assert main(["export", "--pose", str(pose_path), "--out", str(out2)]) == 0
    verts2, _ = load_obj(out2)
    assert np.allclose(verts2, skin_vertices(model, theta), atol=1e-7)


def test_export_byte_determinism(tmp_path):
    a, b = tmp_path / "a.obj", tmp_path / "b.obj"
    assert main(["export", "--out", str(a)]) == 0
    assert main(["export", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


# ====== interpolate ======


def test_interpolate_smoke_with_obj_export(model, tmp_path, capsys):
    p0, p1 = tmp_path / "a.json", tmp_path / "b.json"
    save_pose(zero_pose(model), p0)
    save_pose(clean_family_pose(model, np.random.default_rng(5)), p1)
    out = tmp_path / "interp"
    rc = main(["interpolate", str(p0), str(p1), "--out", str(out),
               "--samples", "200", "--rtol", "1e-4", "--atol", "1e-6",
               "--h-max", "0.25", "--obj-every", "3"])
    assert rc == 0
    assert "stop completed" in capsys.readouterr().out
    traj = load_trajectory(out / "trajectory.json")
    assert traj.stop_reason == "completed"
    assert traj.times[-1] == 1.0
    T = len(traj.poses)
    expected = sorted({k for k in range(T) if k % 3 == 0} | {T - 1})
    written = sorted(int(f.stem.split("_")[1]) for f in out.glob("*.obj"))
    assert written == expected
    verts, _ = load_obj(out / "frame_0000.obj")
    assert np.allclose(verts, skin_vertices(model, zero_pose(model)), atol=1e-7)


def test_interpolate_identical_endpoints(model, tmp_path):
    p = tmp_path / "a.json"
    save_pose(clean_family_pose(model, np.random.default_rng(7)), p)
    out = tmp_path / "same"
    assert main(["interpolate", str(p), str(p), "--out", str(out)]) == 0
    traj = load_trajectory(out / "trajectory.json")
    assert np.array_equal(traj.times, [0.0])
    assert traj.poses.shape[0] == 1


def test_interpolate_rejects_colliding_endpoint(model, tmp_path, capsys):
    p0, p1 = tmp_path / "a.json", tmp_path / "b.json"
    save_pose(zero_pose(model), p0)
    save_pose(collision_pose(model, "arm_into_torso"), p1)
    rc = main(["interpolate", str(p0), str(p1), "--out", str(tmp_path / "x")])
    assert rc == 1
    err = capsys.readouterr().err
    assert "interpolate: theta1 has" in err and "penetrating vertices" in err


def test_missing_input_file_is_validation_error(tmp_path):
    rc = main(["interpolate", str(tmp_path / "nope.json"),
               str(tmp_path / "nope.json"), "--out", str(tmp_path / "x")])
    assert rc == 1


def test_unknown_command_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


# ====== correct ======


def test_correct_sequence(model, tmp_path, capsys):
    seq = np.stack([zero_pose(model), _graze_pose(model),
                    zero_pose(model), zero_pose(model)])
    sp = tmp_path / "seq.json"
    save_sequence(sp, seq, fps=30.0)
    out = tmp_path / "corr"
    rc = main(["correct", str(sp), "--out", str(out), "--samples", "150",
               "--rtol", "1e-4", "--atol", "1e-6", "--seed", "0"])
    assert rc == 0
    assert "Col.Rate@0: before 25.0% -> after 0.0%" in capsys.readouterr().out
    corrected, fps, _, _ = load_sequence(out / "corrected.json")
    assert corrected.shape == seq.shape and fps == 30.0
    assert np.all(collision_counts(model, corrected) == 0)
    # clean frames pass through untouched
    assert np.array_equal(corrected[0], seq[0])
    assert np.array_equal(corrected[2], seq[2])
    log = (out / "frames.log").read_text().splitlines()
    assert "strategy=none" in log[0]
    assert "strategy=successive" in log[1] and "stop=collision_guard" in log[1]
    doc = _read_json(out / "metrics.json")
    assert doc["col_rate_before"] == {"0": 25.0}
    assert doc["col_rate_at"] == {"0": 0.0}
    assert doc["frames"] == 4


def test_correct_single_frame_uses_jitter(model, tmp_path):
    # no previous frame: the cascade must fall through to jitter
    sp = tmp_path / "seq.json"
    save_sequence(sp, _graze_pose(model)[None, :], fps=30.0)
    out = tmp_path / "corr1"
    rc = main(["correct", str(sp), "--out", str(out), "--samples", "150",
               "--rtol", "1e-4", "--atol", "1e-6", "--seed", "0"])
    assert rc == 0
    log = (out / "frames.log").read_text()
    assert "strategy=jitter" in log and "successive" not in log
    doc = _read_json(out / "metrics.json")
    assert doc["accel_err"] is None  # too short for second differences
    assert doc["col_rate_at"] == {"0": 0.0}
    corrected, _, _, _ = load_sequence(out / "corrected.json")
    assert np.all(collision_counts(model, corrected) == 0)


# ====== scenario ======


def _scenario_config(tmp_path, **overrides):
    doc = {
        "model": "capsule", "seed": 0, "samples": 1200, "theta0": "rest",
        "field": {
            "region": {"seed_point": [0.797, 1.307, 0.085], "radius": 0.045},
            "target": [0.797, 1.307, 0.19],
            "magnitude": 1e-3,
        },
        "solver": {"t_max": 10.0, "h_init": 5.0, "h_max": 5.0,
                   "rtol": 1e-4, "atol": 1e-6},
    }
    for key, val in overrides.items():
        if isinstance(val, dict):
            doc[key] = {**doc.get(key, {}), **val}
        else:
            doc[key] = val
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(doc))
    return path


def test_scenario_smoke(tmp_path, capsys):
    cfg = _scenario_config(tmp_path)
    out = tmp_path / "scen"
    assert main(["scenario", str(cfg), "--out", str(out)]) == 0
    assert "stop completed" in capsys.readouterr().out
    report = _read_json(out / "report.json")
    assert report["stop_reason"] == "completed"
    assert report["final_time"] == 10.0
    assert report["max_obstacle_penetration"] == 0.0
    assert 0.0 < report["final_centroid_distance"] < 0.2
    traj = load_trajectory(out / "trajectory.json")
    assert len(traj.times) == report["steps"] + 1


def test_scenario_failure_exit_codes(tmp_path):
    cfg = _scenario_config(tmp_path, solver={"max_steps": 1})
    assert main(["scenario", str(cfg), "--out", str(tmp_path / "a")]) == 2

    cfg = _scenario_config(
        tmp_path, field={"obstacles": [{"type": "cylinder"}],
                         "region": {"seed_point": [0.797, 1.307, 0.085],
                                    "radius": 0.045},
                         "target": [0.797, 1.307, 0.19]},
    )
    assert main(["scenario", str(cfg), "--out", str(tmp_path / "b")]) == 1


# ====== metrics ======


def test_metrics_command(model, tmp_path, capsys):
    rest = zero_pose(model)
    poses = np.stack([rest, rest, rest])
    joints = np.stack([joint_positions(model, th) for th in poses])
    # 6 mm offset on one non-root joint: root alignment cannot absorb it,
    # so MPJPE = 6/J mm exactly
    gt_joints = joints.copy()
    gt_joints[:, 5, 0] += 0.006
    pred, gt = tmp_path / "pred.json", tmp_path / "gt.json"
    save_sequence(pred, poses, fps=30.0)
    save_sequence(gt, poses, fps=30.0, gt_joints=gt_joints)
    out = tmp_path / "report.json"
    rc = main(["metrics", "--pred", str(pred), "--gt", str(gt), "--out", str(out)])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "MPJPE" in stdout and "Col.Rate@0" in stdout
    doc = _read_json(out)
    J = joints.shape[1]
    assert doc["mpjpe"] == pytest.approx(6.0 / J, abs=1e-9)
    assert 0.0 < doc["p_mpjpe"] < 6.0
    assert doc["accel_err"] == pytest.approx(0.0, abs=1e-9)
    assert doc["col_rate_at"] == {"0": 0.0}


def test_metrics_length_mismatch(model, tmp_path, capsys):
    rest = zero_pose(model)
    pred, gt = tmp_path / "pred.json", tmp_path / "gt.json"
    save_sequence(pred, np.stack([rest, rest]), fps=30.0)
    save_sequence(gt, np.stack([rest, rest, rest]), fps=30.0)
    assert main(["metrics", "--pred", str(pred), "--gt", str(gt)]) == 1
    assert "lengths differ" in capsys.readouterr().err


# ====== ablate ======


def test_ablate_report_and_determinism(tmp_path, capsys):
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    argv = ["ablate", "--s-list", "100,300", "--deltas", "1e-2",
            "--seeds", "3", "--seed", "0"]
    assert main(argv + ["--out", str(out1)]) == 0
    assert "median RE" in capsys.readouterr().out
    doc = _read_json(out1)
    assert [r["S"] for r in doc["rows"]] == [100, 300]
    assert all(r["median_re"] < 1.5e-1 for r in doc["rows"])
    assert len(doc["cells"]) == 6
    assert main(argv + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_ablate_rejects_under_determined(capsys):
    assert main(["ablate", "--s-list", "10", "--seeds", "1"]) == 1
    assert "under-determined" in capsys.readouterr().err


# ====== keyposes build ======


def test_keyposes_build(model, tmp_path, capsys):
    rng = np.random.default_rng(11)
    corpus = np.stack([clean_family_pose(model, rng) for _ in range(6)])
    cp = tmp_path / "corpus.json"
    save_sequence(cp, corpus, fps=1.0)
    out = tmp_path / "keyposes.json"
    rc = main(["keyposes", "build", "--corpus", str(cp), "--k", "2",
               "--seed", "3", "--out", str(out)])
    assert rc == 0
    assert "keypose dictionary: 2 poses" in capsys.readouterr().out
    d = load_keyposes(out)
    assert d.size == 2
    for row in d.poses:
        assert any(np.array_equal(row, c) for c in corpus)

import json
from pathlib import Path

import pytest

from modeplan.cli import main


def test_plan_writes_trajectory_and_report(tmp_path):
    out = tmp_path / "traj.jsonl"
    code = main([
        "plan", "--problem", "1", "--seed", "0",
        "--max-nodes", "200", "--time-limit", "120",
        "--out", str(out),
    ])
    assert code == 0
    assert out.exists()
    report = json.loads(out.with_suffix(".report.json").read_text())
    assert report["success"] is True
    assert report["nodes_in_tree"] >= 1
    assert report["seed"] == 0


def test_plan_missing_scene_is_input_error(tmp_path):
    assert main(["plan", "--scene", str(tmp_path / "nope.json")]) == 1


def test_plan_scene_and_problem_conflict():
    assert main(["plan", "--scene", "x.json", "--problem", "1"]) == 1


def test_plan_timeout_exit_code(tmp_path):
    out = tmp_path / "t.jsonl"
    report = tmp_path / "r.json"
    code = main([
        "plan", "--problem", "5", "--seed", "0", "--time-limit", "0.001",
        "--out", str(out), "--report", str(report),
    ])
    assert code == 2
    rep = json.loads(report.read_text())
    assert rep["success"] is False and rep["status"] == "timeout"


def test_plan_validate_render_pipeline(tmp_path):
    out = tmp_path / "traj.jsonl"
    assert main([
        "plan", "--problem", "1", "--seed", "0", "--max-nodes", "200",
        "--time-limit", "120", "--out", str(out),
    ]) == 0
    assert main(["validate", "--problem", "1", "--trajectory", str(out)]) == 0
    frames = tmp_path / "frames"
    assert main([
        "render", "--problem", "1", "--trajectory", str(out),
        "--out-dir", str(frames), "--every", "40",
    ]) == 0
    svgs = sorted(frames.glob("*.svg"))
    records = len(out.read_text().splitlines())
    import math

    expected = math.ceil(records / 40) + (1 if (records - 1) % 40 else 0)
    assert len(svgs) >= math.ceil(records / 40)
    assert svgs[0].read_text().startswith("<?xml")


def test_render_deterministic_bytes(tmp_path):
    out = tmp_path / "traj.jsonl"
    main(["plan", "--problem", "1", "--seed", "0", "--max-nodes", "200",
          "--time-limit", "120", "--out", str(out)])
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    main(["render", "--problem", "1", "--trajectory", str(out), "--out-dir", str(a_dir), "--every", "25"])
    main(["render", "--problem", "1", "--trajectory", str(out), "--out-dir", str(b_dir), "--every", "25"])
    for fa in sorted(a_dir.glob("*.svg")):
        fb = b_dir / fa.name
        assert fa.read_bytes() == fb.read_bytes()


def test_bench_single_run_min_equals_max(tmp_path):
    out = tmp_path / "bench.json"
    code = main([
        "bench", "--problem", "1", "--runs", "1", "--max-nodes", "200",
        "--time-limit", "120", "--out", str(out),
    ])
    assert code == 0
    summary = json.loads(out.read_text())
    assert summary["runs"] == 1
    assert summary["time_s"]["min"] == summary["time_s"]["median"] == summary["time_s"]["max"]
    assert {"successes", "nodes_in_tree_median", "contact_modes_in_path_median"} <= set(summary)


def test_identical_flags_and_seed_reproduce_trajectory_bytes(tmp_path):
    out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (out1, out2):
        assert main([
            "plan", "--problem", "1", "--seed", "4", "--max-nodes", "200",
            "--time-limit", "120", "--out", str(out),
        ]) in (0, 2)
    assert out1.read_bytes() == out2.read_bytes()
    r1 = json.loads(out1.with_suffix(".report.json").read_text())
    r2 = json.loads(out2.with_suffix(".report.json").read_text())
    r1.pop("wall_time_s"); r2.pop("wall_time_s")
    r1.pop("trajectory"); r2.pop("trajectory")
    assert r1 == r2

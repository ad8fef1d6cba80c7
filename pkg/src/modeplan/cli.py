"""Command line front end: plan, validate, bench and render.

Exit codes: 0 success, 1 input error, 2 planner failure. The trajectory file
is line-delimited JSON; the run report is a JSON document mirroring the
benchmark statistics categories (success, wall time, tree and path sizes,
contact modes in path).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
from pathlib import Path

from .config import PlannerConfig
from .planner import PlanResult, PlanStatus, plan
from .scenes import (
    Scene,
    builtin_problem,
    load_scene_file,
    replay_validate,
    trajectory_from_jsonl,
    trajectory_to_jsonl,
)

log = logging.getLogger("modeplan.cli")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("MODEPLAN_LOG", "warn").lower()
    logging.basicConfig(
        level=_LOG_LEVELS.get(level, logging.WARNING),
        format="%(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )


class InputError(Exception):
    pass


def _load_scene_arg(args) -> Scene:
    if getattr(args, "problem", None) is not None:
        if args.scene is not None:
            raise InputError("give either --scene or --problem, not both")
        return builtin_problem(args.problem)
    if getattr(args, "scene", None) is None:
        raise InputError("one of --scene or --problem is required")
    path = Path(args.scene)
    if not path.exists():
        raise InputError(f"scene file not found: {path}")
    return load_scene_file(path)


def _config_from_args(args, seed: int | None = None) -> PlannerConfig:
    return PlannerConfig(
        algorithm=args.algorithm,
        seed=args.seed if seed is None else seed,
        goal_bias=args.goal_bias,
        rotation_weight=args.rotation_weight,
        max_nodes=args.max_nodes,
        time_limit=args.time_limit,
        margin_strategy=args.margin_strategy,
        margin_threshold=args.margin_threshold,
    )


def _report_dict(scene: Scene, cfg: PlannerConfig, result: PlanResult, out_path) -> dict:
    return {
        "scene": scene.name,
        "algorithm": cfg.algorithm,
        "seed": cfg.seed,
        "success": result.success,
        "status": result.status.value,
        "wall_time_s": result.stats.elapsed_seconds,
        "nodes_in_tree": result.stats.nodes_in_tree,
        "nodes_in_path": result.stats.nodes_in_path,
        "contact_modes_in_path": result.stats.contact_modes_in_path,
        "iterations": result.stats.iterations,
        "trajectory": str(out_path) if out_path else None,
    }


def cmd_plan(args) -> int:
    scene = _load_scene_arg(args)
    cfg = _config_from_args(args)
    result = plan(scene, cfg)
    out_path = Path(args.out) if args.out else None
    report_path = Path(args.report) if args.report else (
        out_path.with_suffix(".report.json") if out_path else None
    )
    if result.trajectory is not None and out_path is not None:
        out_path.write_text(trajectory_to_jsonl(result.trajectory), encoding="utf-8")
    report = _report_dict(scene, cfg, result, out_path if result.success else None)
    if report_path is not None:
        report_path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(report, indent=2))
    if not result.success:
        log.error("planning failed: %s", result.status.value)
        return 2
    return 0


def cmd_validate(args) -> int:
    scene = _load_scene_arg(args)
    path = Path(args.trajectory)
    if not path.exists():
        raise InputError(f"trajectory file not found: {path}")
    trajectory = trajectory_from_jsonl(path.read_text(encoding="utf-8"))
    violations = replay_validate(scene, trajectory)
    if violations:
        for v in violations:
            print(str(v), file=sys.stderr)
        print(f"INVALID: {len(violations)} violations over {len(trajectory)} records")
        return 2
    print(f"OK: {len(trajectory)} records validated")
    return 0


def cmd_bench(args) -> int:
    scene = _load_scene_arg(args)
    seeds = args.seeds if args.seeds else list(range(args.runs))
    rows = []
    for seed in seeds:
        cfg = _config_from_args(args, seed=seed)
        result = plan(scene, cfg)
        rows.append(_report_dict(scene, cfg, result, None))
        print(
            f"seed {seed}: {'ok' if result.success else result.status.value} "
            f"{result.stats.elapsed_seconds:.2f}s nodes={result.stats.nodes_in_tree} "
            f"path={result.stats.nodes_in_path} modes={result.stats.contact_modes_in_path}",
            flush=True,
        )
    times = [r["wall_time_s"] for r in rows]
    ok = [r for r in rows if r["success"]]
    summary = {
        "scene": scene.name,
        "runs": len(rows),
        "successes": len(ok),
        "time_s": {
            "min": min(times),
            "median": statistics.median(times),
            "max": max(times),
        },
        "nodes_in_tree_median": statistics.median([r["nodes_in_tree"] for r in rows]),
        "nodes_in_path_median": statistics.median([r["nodes_in_path"] for r in ok]) if ok else None,
        "contact_modes_in_path_median": statistics.median(
            [r["contact_modes_in_path"] for r in ok]
        ) if ok else None,
        "per_run": rows,
    }
    text = json.dumps(summary, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0 if ok else 2


def cmd_render(args) -> int:
    from .render import render_trajectory

    scene = _load_scene_arg(args)
    path = Path(args.trajectory)
    if not path.exists():
        raise InputError(f"trajectory file not found: {path}")
    trajectory = trajectory_from_jsonl(path.read_text(encoding="utf-8"))
    frames = render_trajectory(scene, trajectory, every=args.every)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, svg in enumerate(frames):
        (out_dir / f"frame{i:05d}.svg").write_text(svg, encoding="utf-8")
    print(f"wrote {len(frames)} frames to {out_dir}")
    return 0


def _add_scene_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scene", type=str, default=None, help="scene JSON file")
    p.add_argument("--problem", type=int, choices=range(1, 8), default=None,
                   help="bundled benchmark problem 1..7")


def _add_planner_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--algorithm", choices=["rrt", "complete"], default="rrt")
    p.add_argument("--goal-bias", dest="goal_bias", type=float, default=0.5,
                   help="probability of a uniform random sample (1-p draws the goal)")
    p.add_argument("--rotation-weight", dest="rotation_weight", type=float, default=None)
    p.add_argument("--max-nodes", dest="max_nodes", type=int, default=200)
    p.add_argument("--time-limit", dest="time_limit", type=float, default=120.0)
    p.add_argument("--margin-threshold", dest="margin_threshold", type=float, default=0.0)
    p.add_argument("--margin-strategy", dest="margin_strategy",
                   choices=["none", "fan-lp"], default="none")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modeplan",
        description="Contact-mode guided quasistatic manipulation planning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="plan a trajectory")
    _add_scene_args(p_plan)
    _add_planner_args(p_plan)
    p_plan.add_argument("--out", type=str, default=None, help="trajectory output path")
    p_plan.add_argument("--report", type=str, default=None, help="report output path")
    p_plan.set_defaults(fn=cmd_plan)

    p_val = sub.add_parser("validate", help="replay-validate a trajectory")
    _add_scene_args(p_val)
    p_val.add_argument("--trajectory", type=str, required=True)
    p_val.set_defaults(fn=cmd_validate)

    p_bench = sub.add_parser("bench", help="run seeded benchmark repetitions")
    _add_scene_args(p_bench)
    _add_planner_args(p_bench)
    p_bench.add_argument("--runs", type=int, default=10)
    p_bench.add_argument("--seeds", type=int, nargs="*", default=None)
    p_bench.add_argument("--out", type=str, default=None)
    p_bench.set_defaults(fn=cmd_bench)

    p_render = sub.add_parser("render", help="render trajectory frames as SVG")
    _add_scene_args(p_render)
    p_render.add_argument("--trajectory", type=str, required=True)
    p_render.add_argument("--out-dir", dest="out_dir", type=str, required=True)
    p_render.add_argument("--format", choices=["svg"], default="svg")
    p_render.add_argument("--every", type=int, default=1)
    p_render.set_defaults(fn=cmd_render)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (InputError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Deterministic SVG rendering of scenes and trajectory frames.

Output is plain text with fixed float formatting, so identical inputs give
byte-identical files. One frame shows the environment, the object outline at
the recorded pose, fingertip dots, contact normals and mode labels.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .geom2d import Polygon, Pose
from .planner import Trajectory, TrajectoryRecord
from .scenes import Scene

_ENV_STYLE = 'fill="#c8c8c8" stroke="#555555" stroke-width="0.01"'
_OBJ_STYLE = 'fill="#7fb2e5" fill-opacity="0.85" stroke="#1f4e79" stroke-width="0.012"'
_FINGER_STYLE = 'fill="#d62728"'
_NORMAL_STYLE = 'stroke="#e6a400" stroke-width="0.012"'
_TEXT_STYLE = 'font-family="monospace" fill="#222222"'


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def _poly_points(vertices: np.ndarray) -> str:
    return " ".join(f"{_fmt(p[0])},{_fmt(p[1])}" for p in vertices)


def _scene_extent(scene: Scene) -> tuple[float, float, float, float]:
    pts = [p.vertices for p in scene.environment]
    pts.append(np.array([scene.bounds.x, scene.bounds.y]).T)
    allp = np.vstack(pts)
    lo = allp.min(axis=0)
    hi = allp.max(axis=0)
    pad = 0.6 * scene.bbox_diagonal
    return lo[0] - pad, lo[1] - pad, hi[0] + pad, hi[1] + pad


def render_record_svg(scene: Scene, record: TrajectoryRecord) -> str:
    """One SVG frame of the object state in a trajectory record."""
    x0, y0, x1, y1 = _scene_extent(scene)
    w, h = x1 - x0, y1 - y0
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="640" height="{int(640 * h / w)}" '
        f'viewBox="{_fmt(x0)} {_fmt(-y1)} {_fmt(w)} {_fmt(h)}">',
        # Flip the y axis so +y points up.
        f'<g transform="scale(1,-1)">',
    ]
    for poly in scene.environment:
        lines.append(f'<polygon points="{_poly_points(poly.vertices)}" {_ENV_STYLE}/>')
    world = record.q.transform_points(scene.object_polygon.vertices)
    lines.append(f'<polygon points="{_poly_points(world)}" {_OBJ_STYLE}/>')
    r_dot = 0.018 * scene.bbox_diagonal * 2
    arrow = 0.18 * scene.bbox_diagonal
    for c in record.contacts:
        p_w = record.q.transform_points(np.asarray(c.point))
        n_w = record.q.rotation() @ np.asarray(c.normal)
        tip = p_w + arrow * n_w
        lines.append(
            f'<line x1="{_fmt(p_w[0])}" y1="{_fmt(p_w[1])}" '
            f'x2="{_fmt(tip[0])}" y2="{_fmt(tip[1])}" {_NORMAL_STYLE}/>'
        )
        if c.kind == "mnp":
            lines.append(
                f'<circle cx="{_fmt(p_w[0])}" cy="{_fmt(p_w[1])}" r="{_fmt(r_dot)}" {_FINGER_STYLE}/>'
            )
        lines.append(
            f'<text x="{_fmt(p_w[0] + 0.02 * w)}" y="{_fmt(p_w[1])}" font-size="{_fmt(0.028 * w)}" '
            f'transform="scale(1,-1) translate(0,{_fmt(-2 * p_w[1])})" {_TEXT_STYLE}>'
            f"{c.mode_label}</text>"
        )
    lines.append("</g>")
    lines.append(
        f'<text x="8" y="20" font-size="16" {_TEXT_STYLE}>t={record.t} '
        f"q=({_fmt(record.q.x)}, {_fmt(record.q.y)}, {_fmt(record.q.theta)})</text>"
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render_trajectory(scene: Scene, trajectory: Trajectory, every: int = 1) -> list[str]:
    """SVG frames for every ``every``-th record (the last one always included)."""
    if every < 1:
        raise ValueError("every must be >= 1")
    if not trajectory.records:
        return []
    picks = list(range(0, len(trajectory.records), every))
    if picks[-1] != len(trajectory.records) - 1:
        picks.append(len(trajectory.records) - 1)
    return [render_record_svg(scene, trajectory.records[i]) for i in picks]

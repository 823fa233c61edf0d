"""Independent checks shared by the unit and acceptance tests.

These deliberately avoid the planner's own sweep and segment code.
"""

import math

import numpy as np


def plan_problems(plan, world, goal, start, resolution=0.01, tol=1e-9):
    """Every way ``plan`` breaks its contract; empty when it is valid."""
    problems = []
    nodes = plan.nodes
    if not np.allclose(nodes[0].p, start[:2], atol=tol):
        problems.append("first node is not the start")
    circles = world.obstacles.copy()
    circles[:, 2] += world.inflation
    xmin, xmax, ymin, ymax = world.bounds
    for i, (a, b) in enumerate(zip(nodes, nodes[1:])):
        acc = np.asarray(b.action, dtype=float) / plan.mass
        T = b.duration
        p_end = a.p + a.v * T + 0.5 * acc * T * T
        v_end = a.v + acc * T
        if np.max(np.abs(p_end - b.p)) > tol or np.max(np.abs(v_end - b.v)) > tol:
            problems.append(f"edge {i} is not a double-integrator arc")
        if abs(b.t - a.t - T) > tol:
            problems.append(f"edge {i} time stamps disagree with its duration")
        speed = math.hypot(*a.v) + math.hypot(*acc) * T
        n = max(2, int(math.ceil(speed * T / resolution)) + 1)
        t = np.linspace(0.0, T, n)[:, None]
        pts = a.p + a.v * t + 0.5 * acc * t * t
        inside = (pts[:, 0] < xmin) | (pts[:, 0] > xmax) | (pts[:, 1] < ymin) | (pts[:, 1] > ymax)
        if inside.any():
            problems.append(f"edge {i} leaves the bounds")
        for cx, cy, r in circles:
            if np.any(np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) < r):
                problems.append(f"edge {i} hits the obstacle at ({cx:.2f}, {cy:.2f})")
                break
    last = nodes[-1]
    if math.dist(last.p, goal.center) > goal.tolerance or math.hypot(*last.v) > goal.vel_tolerance:
        problems.append("last node is outside the goal region")
    if abs(plan.total_time - last.t) > tol:
        problems.append("total time disagrees with the last node")
    return problems


def segment_circle_distance(a, b, c):
    """Closest distance from point ``c`` to segment ``ab``."""
    a, b, c = (np.asarray(x, dtype=float) for x in (a, b, c))
    ab = b - a
    s = 0.0 if not ab.any() else float(np.clip(np.dot(c - a, ab) / np.dot(ab, ab), 0.0, 1.0))
    return float(np.linalg.norm(a + s * ab - c))

"""Kinodynamic RRT over the translational states (double integrator at nominal mass).

The tree grows by sampling a (position, velocity) target, picking the nearest
node under ``|dp| + 0.5 |dv|``, applying whichever of the nine constant-force
primitives lands closest, and keeping the edge if its swept path is free.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from freeflyer.dynamics import InertialParams

VEL_WEIGHT = 0.5
DEFAULT_U_MAX = 0.4
DEFAULT_V_MAX = 0.2
DEFAULT_DT_PRIM = 2.0
GOAL_BIAS = 0.1
SAMPLE_ATTEMPTS = 10_000
SWEEP_RESOLUTION = 0.02


class WorldFull(RuntimeError):
    pass


class NoPlanFound(RuntimeError):
    pass


class StartInCollision(ValueError):
    pass


@dataclass(frozen=True)
class ObstacleWorld:
    """Axis-aligned bounds (xmin, xmax, ymin, ymax), circular obstacles (x, y, r) and an inflation radius."""

    bounds: tuple[float, float, float, float]
    obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    inflation: float = 0.0

    def __post_init__(self):
        obs = np.asarray(self.obstacles, dtype=float).reshape(-1, 3)
        xmin, xmax, ymin, ymax = (float(b) for b in self.bounds)
        if not (xmax > xmin and ymax > ymin):
            raise ValueError(f"degenerate bounds {self.bounds}")
        if np.any(obs[:, 2] <= 0):
            raise ValueError("obstacle radii must be positive")
        if self.inflation < 0:
            raise ValueError("inflation must be non-negative")
        object.__setattr__(self, "bounds", (xmin, xmax, ymin, ymax))
        object.__setattr__(self, "obstacles", obs)

    @property
    def inflated(self) -> np.ndarray:
        out = self.obstacles.copy()
        out[:, 2] += self.inflation
        return out

    def in_bounds(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        xmin, xmax, ymin, ymax = self.bounds
        return (pts[:, 0] >= xmin) & (pts[:, 0] <= xmax) & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)

    def points_free(self, pts) -> np.ndarray:
        """Inside bounds and outside every inflated obstacle."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ok = self.in_bounds(pts)
        if len(self.obstacles):
            inf = self.inflated
            d = np.hypot(pts[:, None, 0] - inf[None, :, 0], pts[:, None, 1] - inf[None, :, 1])
            ok &= np.all(d >= inf[None, :, 2], axis=1)
        return ok

    def point_free(self, p) -> bool:
        return bool(self.points_free(p)[0])


@dataclass(frozen=True)
class GoalRegion:
    center: tuple[float, float]
    tolerance: float = 0.15
    vel_tolerance: float = 0.05

    def contains(self, p, v=(0.0, 0.0)) -> bool:
        return (
            math.hypot(p[0] - self.center[0], p[1] - self.center[1]) <= self.tolerance
            and math.hypot(v[0], v[1]) <= self.vel_tolerance
        )


@dataclass(frozen=True, eq=False)
class TransNode:
    p: np.ndarray
    v: np.ndarray
    parent: "TransNode | None" = field(default=None, repr=False)
    action: np.ndarray = field(default_factory=lambda: np.zeros(2))
    duration: float = 0.0
    t: float = 0.0


@dataclass(frozen=True)
class GlobalPlan:
    nodes: list[TransNode]
    total_time: float
    mass: float
    iterations: int = 0
    tree_size: int = 1
    solve_time: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([n.t for n in self.nodes])

    @property
    def positions(self) -> np.ndarray:
        return np.array([n.p for n in self.nodes])

    @property
    def velocities(self) -> np.ndarray:
        return np.array([n.v for n in self.nodes])


@dataclass(frozen=True)
class Budget:
    max_iterations: int = 200_000
    max_time: float = 20.0


def primitive_set(u_max: float = DEFAULT_U_MAX) -> np.ndarray:
    """The nine constant-force actions {-u_max, 0, u_max}^2."""
    vals = (-u_max, 0.0, u_max)
    return np.array([(a, b) for a in vals for b in vals])


def propagate(p, v, force, duration: float, mass: float):
    a = np.asarray(force, dtype=float) / mass
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    return p + v * duration + 0.5 * a * duration**2, v + a * duration


def distance(p, v, p2, v2):
    return np.hypot(*(np.asarray(p) - p2).T) + VEL_WEIGHT * np.hypot(*(np.asarray(v) - v2).T)


def sample_free(world: ObstacleWorld, rng: np.random.Generator, goal: GoalRegion | None = None,
                v_max: float = DEFAULT_V_MAX, goal_bias: float = GOAL_BIAS):
    """Uniform free-space sample of (position, velocity), biased toward the goal at rest."""
    if goal is not None and rng.random() < goal_bias:
        return np.array(goal.center, dtype=float), np.zeros(2)
    xmin, xmax, ymin, ymax = world.bounds
    for _ in range(SAMPLE_ATTEMPTS):
        p = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
        if world.point_free(p):
            return p, rng.uniform(-v_max, v_max, size=2)
    raise WorldFull(f"no free sample after {SAMPLE_ATTEMPTS} attempts")


def steer(from_node: TransNode, toward, theta_nominal: InertialParams, dt_prim: float = DEFAULT_DT_PRIM,
          u_max: float = DEFAULT_U_MAX) -> TransNode:
    if dt_prim <= 0:
        raise ValueError("dt_prim must be positive")
    prims = primitive_set(u_max)
    p_new, v_new = propagate(from_node.p, from_node.v, prims, dt_prim, theta_nominal.m)
    d = distance(p_new, v_new, toward[0], toward[1])
    i = int(np.argmin(d))
    return TransNode(p_new[i], v_new[i], from_node, prims[i], dt_prim, from_node.t + dt_prim)


def sweep_points(p, v, force, duration: float, mass: float, delta: float = SWEEP_RESOLUTION) -> np.ndarray:
    """Points along the constant-force arc, spaced at most ``delta`` apart in arc length."""
    a = np.asarray(force, dtype=float) / mass
    length = np.hypot(*v) * duration + 0.5 * np.hypot(*a) * duration**2
    n = max(2, int(math.ceil(length / delta)) + 1)
    t = np.linspace(0.0, duration, n)[:, None]
    return np.asarray(p) + np.asarray(v) * t + 0.5 * a * t**2


def _segments_clear(pts: np.ndarray, circles: np.ndarray) -> bool:
    if len(circles) == 0:
        return True
    a = pts[:-1, None, :]
    ab = (pts[1:] - pts[:-1])[:, None, :]
    c = circles[None, :, :2]
    ab2 = np.sum(ab * ab, axis=2)
    s = np.where(ab2 > 0, np.sum((c - a) * ab, axis=2) / np.where(ab2 > 0, ab2, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    closest = a + s[..., None] * ab
    d = np.hypot(*(closest - c).transpose(2, 0, 1))
    return bool(np.all(d >= circles[None, :, 2]))


def collision_check(world: ObstacleWorld, from_state, action, duration: float, mass: float,
                    delta: float = SWEEP_RESOLUTION) -> bool:
    """True when the swept path stays in bounds and clear of every inflated obstacle."""
    p, v = from_state
    pts = sweep_points(p, v, action, duration, mass, delta) if duration > 0 else np.atleast_2d(p)
    if not np.all(world.in_bounds(pts)):
        return False
    if len(pts) == 1:
        return world.point_free(pts[0])
    return _segments_clear(pts, world.inflated)


def _extract(tip: TransNode) -> list[TransNode]:
    nodes = []
    node = tip
    while node is not None:
        nodes.append(node)
        node = node.parent
    return nodes[::-1]


def plan_global(x0, goal: GoalRegion, world: ObstacleWorld, theta_nominal: InertialParams,
                budget: Budget = Budget(), seed: int = 0, dt_prim: float = DEFAULT_DT_PRIM,
                u_max: float = DEFAULT_U_MAX, v_max: float = DEFAULT_V_MAX) -> GlobalPlan:
    """Grow a kinodynamic RRT from the translational part of ``x0`` until a node enters ``goal``."""
    started = time.perf_counter()
    x0 = np.asarray(x0, dtype=float)
    c, s = math.cos(x0[2]), math.sin(x0[2])
    p0 = x0[:2].copy()
    v0 = np.array([c * x0[3] - s * x0[4], s * x0[3] + c * x0[4]])
    if not world.point_free(p0):
        raise StartInCollision(f"start {p0} is not in free space")

    root = TransNode(p0, v0)
    if goal.contains(p0, v0):
        return GlobalPlan([root], 0.0, theta_nominal.m, solve_time=time.perf_counter() - started)

    rng = np.random.default_rng(seed)
    cap = 1024
    P = np.empty((cap, 2))
    V = np.empty((cap, 2))
    nodes = [root]
    P[0], V[0] = p0, v0

    for it in range(1, budget.max_iterations + 1):
        if time.perf_counter() - started > budget.max_time:
            break
        target = sample_free(world, rng, goal, v_max)
        n = len(nodes)
        near = int(np.argmin(distance(P[:n], V[:n], *target)))
        new = steer(nodes[near], target, theta_nominal, dt_prim, u_max)
        if np.any(np.abs(new.v) > v_max + 1e-12) or distance(new.p, new.v, P[near], V[near]) < 1e-9:
            continue
        if not collision_check(world, (nodes[near].p, nodes[near].v), new.action, dt_prim, theta_nominal.m):
            continue
        if n == cap:
            cap *= 2
            P = np.resize(P, (cap, 2))
            V = np.resize(V, (cap, 2))
        P[n], V[n] = new.p, new.v
        nodes.append(new)
        if goal.contains(new.p, new.v):
            path = _extract(new)
            return GlobalPlan(path, new.t, theta_nominal.m, it, len(nodes), time.perf_counter() - started)

    raise NoPlanFound(f"no plan after {it} iterations ({len(nodes)} nodes, {time.perf_counter() - started:.1f} s)")

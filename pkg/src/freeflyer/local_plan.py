"""Information-aware receding-horizon trajectory optimizer.

Single shooting over the input sequence.  The objective is quadratic waypoint
tracking plus ``gamma * tr((F + eps I)^-1)``, where F is the Fisher information
the planned motion would give about (m, cx, cy, izz), plus a hinge penalty
keeping the body point out of inflated obstacles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from freeflyer import _kernels
from freeflyer.dynamics import _vec, angle_diff, wrap_angle
from freeflyer.global_plan import GlobalPlan, ObstacleWorld, _segments_clear
from freeflyer.information import DEFAULT_EPS, NoiseModel
from freeflyer.shooting import bounded_quasi_newton

DEFAULT_DT_KNOT = 0.5
DEFAULT_REPLAN_PERIOD = 12.0
DEFAULT_U_MAX = 0.4
OBSTACLE_WEIGHT = 1e5
# planner keeps this much extra clearance beyond the inflated radius to absorb tracking error
OBSTACLE_MARGIN = 0.08
TERMINAL_FACTOR = 10.0


class TargetInCollision(ValueError):
    pass


class DidNotConverge(RuntimeError):
    """Raised only on request; ``best`` holds the usable best iterate."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class CostWeights:
    """Diagonal weights: state error ``q``, input ``r``, terminal ``q_f`` and the information weight."""

    q: np.ndarray = field(default_factory=lambda: np.array([10.0, 10.0, 5.0, 10.0, 10.0, 1.0]))
    r: np.ndarray = field(default_factory=lambda: np.ones(3))
    q_f: np.ndarray | None = None
    gamma: float = 5.0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        q = np.diag(q) if q.ndim == 2 else q
        r = np.asarray(self.r, dtype=float)
        r = np.diag(r) if r.ndim == 2 else r
        qf = TERMINAL_FACTOR * q if self.q_f is None else np.asarray(self.q_f, dtype=float)
        qf = np.diag(qf) if qf.ndim == 2 else qf
        if q.shape != (6,) or qf.shape != (6,) or r.shape != (3,):
            raise ValueError("weights must be diagonal: q and q_f of length 6, r of length 3")
        if np.any(q < 0) or np.any(qf < 0) or np.any(r <= 0):
            raise ValueError("q and q_f must be PSD and r positive definite")
        if not math.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError("gamma must be finite and non-negative")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "q_f", qf)


@dataclass(frozen=True)
class LocalPlan:
    states: np.ndarray
    inputs: np.ndarray
    dt: float
    achieved_cost: float
    info_trace: float
    t0: float = 0.0
    target: np.ndarray | None = None
    converged: bool = True
    iterations: int = 0

    @property
    def horizon(self) -> int:
        return len(self.inputs)

    @property
    def t_end(self) -> float:
        return self.t0 + self.horizon * self.dt

    def reference(self, times) -> tuple[np.ndarray, np.ndarray]:
        """States and inputs at absolute ``times``.

        States are interpolated linearly (heading along the shortest arc) and
        clamp to the final state past the end; inputs are zero-order held and
        zero past the end.
        """
        times = np.atleast_1d(np.asarray(times, dtype=float))
        s = np.clip((times - self.t0) / self.dt, 0.0, self.horizon)
        k = np.minimum(np.floor(s).astype(int), self.horizon - 1)
        frac = (s - k)[:, None]
        a, b = self.states[k], self.states[k + 1]
        x = a + frac * (b - a)
        x[:, 2] = wrap_angle(a[:, 2] + frac[:, 0] * angle_diff(b[:, 2], a[:, 2]))
        idx = np.floor((times - self.t0) / self.dt + 1e-9).astype(int)
        u = np.zeros((len(times), 3))
        live = (idx >= 0) & (idx < self.horizon)
        u[live] = self.inputs[idx[live]]
        return x, u


class CostBreakdown(NamedTuple):
    total: float
    tracking: float
    info: float
    penalty: float


def gamma_schedule(elapsed_time: float, gamma0: float, tau: float) -> float:
    if tau <= 0:
        raise ValueError("tau must be positive")
    return gamma0 * math.exp(-elapsed_time / tau)


def select_waypoint(global_plan: GlobalPlan, x_now, elapsed_time: float,
                    replan_period: float = DEFAULT_REPLAN_PERIOD, dt_knot: float = DEFAULT_DT_KNOT,
                    heading: float = 0.0, min_horizon: int = 2, goal_center=None,
                    world: ObstacleWorld | None = None):
    """First global node at least one replan period ahead, as a full state, and the knot count to reach it.

    When that node is the last one and ``goal_center`` is given, the target becomes the
    goal center at rest, so the robot settles instead of coasting through the goal.
    With a ``world``, a node hidden behind an obstacle from ``x_now`` is replaced by the
    furthest earlier node in straight-line view, so a robot that fell behind the global
    plan is not pulled into a wall.
    """
    times = global_plan.times
    ahead = np.nonzero(times >= elapsed_time + replan_period - 1e-9)[0]
    i = int(ahead[0]) if len(ahead) else len(times) - 1
    if world is not None and len(world.obstacles):
        i = _visible_node(global_plan, _vec(x_now, 6)[:2], i, _obstacle_array(world))
    node = global_plan.nodes[i]
    c, s = math.cos(heading), math.sin(heading)
    if i == len(times) - 1 and goal_center is not None:
        target = np.array([goal_center[0], goal_center[1], heading, 0.0, 0.0, 0.0])
    else:
        vb = (c * node.v[0] + s * node.v[1], -s * node.v[0] + c * node.v[1])
        target = np.array([node.p[0], node.p[1], heading, vb[0], vb[1], 0.0])
    n = max(min_horizon, int(math.ceil((times[i] - elapsed_time) / dt_knot - 1e-9)))
    return target, n


def _visible_node(global_plan: GlobalPlan, p, i_max: int, circles: np.ndarray) -> int:
    pos = global_plan.positions
    # never step back past the node closest to the robot
    i_near = int(np.argmin(np.hypot(*(pos[: i_max + 1] - p).T)))
    for j in range(i_max, i_near, -1):
        if _segments_clear(np.array([p, pos[j]]), circles):
            return j
    return min(i_near + 1, i_max)


NO_BOX = np.array([-np.inf, np.inf, -np.inf, np.inf, np.inf])


def _box_array(world: ObstacleWorld | None, margin: float = OBSTACLE_MARGIN,
               speed_max: float = np.inf) -> np.ndarray:
    """(xmin, xmax, ymin, ymax, speed_max) for the state hinge; bounds shrink by ``margin``."""
    if world is None:
        return np.array([-np.inf, np.inf, -np.inf, np.inf, speed_max])
    xmin, xmax, ymin, ymax = world.bounds
    return np.array([xmin + margin, xmax - margin, ymin + margin, ymax - margin, speed_max], dtype=float)


def _obstacle_array(world: ObstacleWorld | None, margin: float = OBSTACLE_MARGIN) -> np.ndarray:
    if world is None or len(world.obstacles) == 0:
        return np.zeros((0, 3))
    obs = np.array(world.inflated, dtype=float)
    obs[:, 2] += margin
    return np.ascontiguousarray(obs)


class _Problem:
    """Cost/gradient closures over a fixed planning instance."""

    def __init__(self, theta, x0, x_ref, u_ref, weights: CostWeights, dt, noise, obstacles, eps, coriolis, u_max,
                 box=None):
        self.th = np.ascontiguousarray(_vec(theta, 4))
        self.x0 = np.ascontiguousarray(_vec(x0, 6))
        self.x_ref = np.ascontiguousarray(x_ref)
        self.u_ref = np.ascontiguousarray(u_ref)
        self.w = weights
        self.dt = float(dt)
        self.rinv = noise.r_inv_diag
        self.obs = obstacles
        self.box = NO_BOX if box is None else np.ascontiguousarray(box, dtype=float)
        self.eps = eps
        self.coriolis = coriolis
        self.h = 1e-4 * u_max
        self.shape = u_ref.shape

    def _u(self, flat):
        return np.ascontiguousarray(flat.reshape(self.shape))

    def breakdown(self, U) -> CostBreakdown:
        total, js, ju, jp = _kernels.tracking_cost(
            self.th, self.x0, U, self.dt, self.x_ref, self.u_ref,
            self.w.q, self.w.r, self.w.q_f, self.obs, self.box, OBSTACLE_WEIGHT, self.coriolis,
        )
        info = _kernels.info_cost(self.th, self.x0, U, self.dt, self.rinv, self.eps, self.coriolis)
        return CostBreakdown(js + ju + jp + self.w.gamma * info, js + ju, info, jp)

    def cost(self, flat) -> float:
        U = self._u(flat)
        total = _kernels.tracking_cost(
            self.th, self.x0, U, self.dt, self.x_ref, self.u_ref,
            self.w.q, self.w.r, self.w.q_f, self.obs, self.box, OBSTACLE_WEIGHT, self.coriolis,
        )[0]
        if self.w.gamma > 0:
            total += self.w.gamma * _kernels.info_cost(self.th, self.x0, U, self.dt, self.rinv, self.eps, self.coriolis)
        return total

    def cost_grad(self, flat):
        U = self._u(flat)
        total, grad = _kernels.tracking_cost_grad(
            self.th, self.x0, U, self.dt, self.x_ref, self.u_ref,
            self.w.q, self.w.r, self.w.q_f, self.obs, self.box, OBSTACLE_WEIGHT, self.coriolis,
        )
        if self.w.gamma > 0:
            info, g_info = _kernels.info_grad_fd(
                self.th, self.x0, U, self.dt, self.rinv, self.eps, self.h, self.coriolis
            )
            total += self.w.gamma * info
            grad = grad + self.w.gamma * g_info
        return total, grad.ravel()


def solve_shooting(theta, x0, x_ref, u_ref, weights: CostWeights, dt: float, u_max: float,
                   noise: NoiseModel | None = None, obstacles=None, eps: float = DEFAULT_EPS,
                   guesses=(), include_coriolis: bool = False, max_iter: int = 200, box=None):
    """Shared single-shooting solve; returns (inputs, states, SolveResult, problem).

    The best of the zero-input guess and any supplied ``guesses`` seeds the descent.
    """
    noise = noise or NoiseModel()
    obstacles = np.zeros((0, 3)) if obstacles is None else obstacles
    prob = _Problem(theta, x0, x_ref, u_ref, weights, dt, noise, obstacles, eps, include_coriolis, u_max, box)
    n = u_ref.shape[0]
    start = np.zeros(n * 3)
    best = prob.cost(start)
    for g in guesses:
        if g is None:
            continue
        cand = np.clip(np.asarray(g, dtype=float).reshape(-1), -u_max, u_max)
        c = prob.cost(cand)
        if c < best:
            start, best = cand, c
    res = bounded_quasi_newton(prob.cost_grad, start, -u_max, u_max, max_iter=max_iter)
    U = prob._u(res.x)
    X = _kernels.rollout(prob.th, prob.x0, U, prob.dt, include_coriolis)
    return U, X, res, prob


def straight_line_guess(theta, x0, x_target, n: int, dt: float, u_max: float,
                        speed_max: float = np.inf) -> np.ndarray:
    """Inputs of a PD law that walks a point along the segment to ``x_target`` and holds heading.

    Only used as a starting guess for the optimizer, so gains are loose.  The carrot
    eases in and out over 80% of the horizon and never moves faster than ``speed_max``.
    """
    th = np.ascontiguousarray(_vec(theta, 4))
    x = _vec(x0, 6).copy()
    x_target = _vec(x_target, 6)
    p0, d = x[:2].copy(), x_target[:2] - x[:2]
    length = float(np.hypot(*d))
    t_move = max(0.8 * n * dt, 1.5 * length / speed_max if np.isfinite(speed_max) else 0.0, dt)
    wn, wn_rot = 0.4, 0.6
    U = np.zeros((n, 3))
    for k in range(n):
        s = min(k * dt / t_move, 1.0)
        frac = s * s * (3 - 2 * s)
        rate = 6 * s * (1 - s) / t_move if s < 1.0 else 0.0
        c, sn = math.cos(x[2]), math.sin(x[2])
        v_in = np.array([c * x[3] - sn * x[4], sn * x[3] + c * x[4]])
        f_in = th[0] * (wn * wn * (p0 + frac * d - x[:2]) + 2 * wn * (rate * d - v_in))
        tau = th[3] * (wn_rot * wn_rot * angle_diff(x_target[2], x[2]) - 2 * wn_rot * x[5])
        U[k] = np.clip([c * f_in[0] + sn * f_in[1], -sn * f_in[0] + c * f_in[1], tau], -u_max, u_max)
        x = _kernels.rk4(th, x, U[k], dt, False)
    return U


def _resize_inputs(inputs: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, 3))
    m = min(n, len(inputs))
    out[:m] = inputs[:m]
    return out


def plan_local(x_now, theta_hat, x_target, weights: CostWeights, world: ObstacleWorld | None, N: int,
               dt_knot: float = DEFAULT_DT_KNOT, warm_start: LocalPlan | None = None,
               noise: NoiseModel | None = None, u_max: float = DEFAULT_U_MAX, eps: float = DEFAULT_EPS,
               t0: float = 0.0, include_coriolis: bool = False, raise_on_failure: bool = False,
               speed_max: float = np.inf, max_iter: int = 200) -> LocalPlan:
    """Solve the information-weighted tracking problem from ``x_now`` toward ``x_target``.

    States are kept out of obstacles, inside the world bounds and under ``speed_max``
    by hinge penalties.
    """
    if N < 2:
        raise ValueError("horizon N must be at least 2")
    x_target = _vec(x_target, 6)
    if world is not None and not world.point_free(x_target[:2]):
        raise TargetInCollision(f"target {x_target[:2]} is not in free space")

    x_ref = np.tile(x_target, (N + 1, 1))
    u_ref = np.zeros((N, 3))
    guesses = [straight_line_guess(theta_hat, x_now, x_target, N, dt_knot, u_max, speed_max)]
    if warm_start is not None:
        guesses.append(_resize_inputs(warm_start.inputs, N))
    U, X, res, prob = solve_shooting(
        theta_hat, x_now, x_ref, u_ref, weights, dt_knot, u_max, noise,
        _obstacle_array(world), eps, guesses, include_coriolis, box=_box_array(world, speed_max=speed_max), max_iter=max_iter,
    )
    info = _kernels.info_cost(prob.th, prob.x0, U, prob.dt, prob.rinv, eps, include_coriolis)
    plan = LocalPlan(X, U, float(dt_knot), float(res.cost), float(info), float(t0), x_target,
                     res.converged, res.iterations)
    if raise_on_failure and not res.converged:
        raise DidNotConverge(f"local planner stopped on {res.reason}", plan)
    return plan


def plan_cost(states, inputs, weights: CostWeights, x_target, theta_hat, noise: NoiseModel | None = None,
              world: ObstacleWorld | None = None, dt: float = DEFAULT_DT_KNOT, eps: float = DEFAULT_EPS,
              include_coriolis: bool = False, speed_max: float = np.inf) -> CostBreakdown:
    """The exact objective the planner minimizes, split into tracking, information and penalty parts.

    ``total = tracking + gamma * info + penalty``; ``states[0]`` is the start state.
    """
    states = np.asarray(states, dtype=float)
    U = np.ascontiguousarray(np.asarray(inputs, dtype=float).reshape(-1, 3))
    x_ref = np.tile(_vec(x_target, 6), (len(U) + 1, 1))
    prob = _Problem(theta_hat, states[0], x_ref, np.zeros_like(U), weights, dt, noise or NoiseModel(),
                    _obstacle_array(world), eps, include_coriolis, DEFAULT_U_MAX,
                    _box_array(world, speed_max=speed_max))
    return prob.breakdown(U)


def dynamics_defect(plan: LocalPlan, theta, include_coriolis: bool = False) -> float:
    X = _kernels.rollout(np.ascontiguousarray(_vec(theta, 4)), plan.states[0], plan.inputs, plan.dt, include_coriolis)
    d = X - plan.states
    d[:, 2] = wrap_angle(d[:, 2])
    return float(np.max(np.abs(d)))


def with_start_time(plan: LocalPlan, t0: float) -> LocalPlan:
    return replace(plan, t0=float(t0))

"""Short-horizon nonlinear MPC that tracks the current local plan.

Same single-shooting solver as the local planner with the information weight
pinned to zero.  The reference is the local plan sampled at the control knots;
input deviation is penalized from the plan's own inputs so the plan's
feedforward survives the short horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from freeflyer.dynamics import BodyWrench, _vec
from freeflyer.global_plan import ObstacleWorld
from freeflyer.local_plan import CostWeights, DidNotConverge, LocalPlan, _box_array, _obstacle_array, solve_shooting


def default_mpc_weights() -> CostWeights:
    return CostWeights(
        q=np.array([200.0, 200.0, 50.0, 400.0, 400.0, 20.0]),
        r=np.array([1.0, 1.0, 1.0]),
        q_f=np.array([4000.0, 4000.0, 500.0, 4000.0, 4000.0, 200.0]),
        gamma=0.0,
    )


@dataclass(frozen=True)
class MpcConfig:
    horizon_nc: int = 10
    dt_c: float = 0.1
    weights: CostWeights = field(default_factory=default_mpc_weights)
    u_max: float = 0.4

    def __post_init__(self):
        if self.weights.gamma != 0:
            raise ValueError("MPC weights must have gamma = 0")
        if self.horizon_nc < 1 or self.dt_c <= 0:
            raise ValueError("MPC horizon and period must be positive")


@dataclass(frozen=True)
class MpcResult:
    u0: BodyWrench
    predicted: np.ndarray
    inputs: np.ndarray
    cost: float
    converged: bool

    def shifted(self) -> np.ndarray:
        """Warm start for the next control period: inputs advanced one knot, last one repeated."""
        return np.vstack([self.inputs[1:], self.inputs[-1:]])


def reference_segment(local_plan: LocalPlan, elapsed_time: float, config: MpcConfig):
    times = elapsed_time + config.dt_c * np.arange(config.horizon_nc + 1)
    x_ref, u_ref = local_plan.reference(times)
    return x_ref, u_ref[:-1]


def mpc_step(x_now, theta_hat, local_plan: LocalPlan, elapsed_time: float, config: MpcConfig = MpcConfig(),
             warm_start: np.ndarray | None = None, include_coriolis: bool = False,
             raise_on_failure: bool = False, world: ObstacleWorld | None = None,
             speed_max: float = np.inf) -> MpcResult:
    """Solve the gamma = 0 tracking problem and return the first input (always inside the box).

    With a ``world`` or a finite ``speed_max``, the predicted states carry the same
    obstacle, bounds and speed hinges as the local planner.
    """
    x_now = _vec(x_now, 6)
    x_ref, u_ref = reference_segment(local_plan, elapsed_time, config)
    guesses = [np.clip(u_ref, -config.u_max, config.u_max)]
    if warm_start is not None:
        guesses.append(warm_start)
    U, X, res, _ = solve_shooting(
        theta_hat, x_now, x_ref, u_ref, config.weights, config.dt_c, config.u_max,
        obstacles=_obstacle_array(world), guesses=guesses, include_coriolis=include_coriolis,
        box=_box_array(world, speed_max=speed_max),
    )
    u0 = np.clip(U[0], -config.u_max, config.u_max)
    out = MpcResult(BodyWrench.from_array(u0), X, U, float(res.cost), res.converged)
    if raise_on_failure and not res.converged:
        raise DidNotConverge("MPC solve did not converge", out)
    return out

"""Planar (3-DOF) rigid-body dynamics of a free-flyer with an offset center of mass.

The body reference point B is the original center of mass.  Grappling a payload
moves the combined center of mass by ``c = (cx, cy)`` in the body frame, which
couples translation and rotation:

    fx  = m (vx' - w' cy - w^2 cx)
    fy  = m (vy' + w' cx - w^2 cy)
    tau = m cx vy' - m cy vx' + (izz + m |c|^2) w'

Velocities are body-frame velocities of B.  The Coriolis coupling of the
standard body-frame formulation is not part of the equations above; pass
``include_coriolis=True`` to add it.

Parameter ordering is always (m, cx, cy, izz).
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass

import numpy as np

from freeflyer import _kernels

PARAM_NAMES = ("m", "cx", "cy", "izz")
STATE_NAMES = ("rx", "ry", "phi", "vx", "vy", "omega")
INPUT_NAMES = ("fx", "fy", "tau")


class InvalidParameters(ValueError):
    pass


@dataclass(frozen=True)
class InertialParams:
    """Uncertain inertial parameters: mass [kg], CM offset [m], inertia about the CM [kg m^2]."""

    m: float
    cx: float
    cy: float
    izz: float

    def __post_init__(self):
        vals = astuple(self)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidParameters(f"non-finite inertial parameters: {vals}")
        if self.m <= 0 or self.izz <= 0:
            raise InvalidParameters(f"mass and inertia must be positive: {vals}")

    def __array__(self, dtype=None, copy=None):
        return np.array(astuple(self), dtype=dtype or float)

    @classmethod
    def from_array(cls, a) -> "InertialParams":
        a = np.asarray(a, dtype=float)
        return cls(*(float(v) for v in a[:4]))

    def offset_norm(self) -> float:
        return math.hypot(self.cx, self.cy)


@dataclass(frozen=True)
class FreeflyerState:
    rx: float = 0.0
    ry: float = 0.0
    phi: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0

    def __array__(self, dtype=None, copy=None):
        return np.array(astuple(self), dtype=dtype or float)

    @classmethod
    def from_array(cls, a) -> "FreeflyerState":
        a = np.asarray(a, dtype=float)
        return cls(*(float(v) for v in a[:6]))


@dataclass(frozen=True)
class BodyWrench:
    fx: float = 0.0
    fy: float = 0.0
    tau: float = 0.0

    def __array__(self, dtype=None, copy=None):
        return np.array(astuple(self), dtype=dtype or float)

    @classmethod
    def from_array(cls, a) -> "BodyWrench":
        a = np.asarray(a, dtype=float)
        return cls(*(float(v) for v in a[:3]))


# Reference inertial values: robot alone, payload alone and the combined body, simulation and hardware
ASTROBEE_SIM = InertialParams(m=19.568, cx=0.0, cy=0.0, izz=0.282)
PAYLOAD_SIM = InertialParams(m=11.8, cx=0.0, cy=-0.305, izz=0.015)
COMBINED_SIM = InertialParams(m=31.368, cx=0.0, cy=-0.115, izz=0.980)
ASTROBEE_HW = InertialParams(m=19.0, cx=0.0, cy=0.0, izz=0.25)
COMBINED_HW = InertialParams(m=30.8, cx=0.0, cy=-0.12, izz=0.94)


def _vec(a, n: int) -> np.ndarray:
    v = np.asarray(a, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"expected shape ({n},), got {v.shape}")
    return v


def wrap_angle(a):
    """Wrap an angle (or array of angles) to (-pi, pi]."""
    return a - 2 * np.pi * np.ceil((np.asarray(a) - np.pi) / (2 * np.pi))


def angle_diff(a, b):
    """Shortest signed angular distance a - b."""
    return wrap_angle(np.asarray(a) - np.asarray(b))


def mass_matrix(theta: InertialParams) -> np.ndarray:
    m, cx, cy, izz = np.asarray(theta)
    return np.array(
        [
            [m, 0.0, -m * cy],
            [0.0, m, m * cx],
            [-m * cy, m * cx, izz + m * (cx * cx + cy * cy)],
        ]
    )


def acceleration(theta, state, u, include_coriolis: bool = False) -> np.ndarray:
    """Body-frame accelerations (vx', vy', w') solving M a = [fx + m w^2 cx, fy + m w^2 cy, tau]."""
    return _kernels.accel(_vec(theta, 4), _vec(state, 6), _vec(u, 3), include_coriolis)


def state_derivative(theta, state, u, include_coriolis: bool = False) -> np.ndarray:
    return _kernels.deriv(_vec(theta, 4), _vec(state, 6), _vec(u, 3), include_coriolis)


def step(theta, state, u, dt: float, include_coriolis: bool = False):
    """One classical RK4 step with the input held constant; heading re-wrapped.

    Returns a :class:`FreeflyerState` when given one, otherwise an array.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = _kernels.rk4(_vec(theta, 4), _vec(state, 6), _vec(u, 3), float(dt), include_coriolis)
    if isinstance(state, FreeflyerState):
        return FreeflyerState.from_array(out)
    return out


def jacobians(theta, state, u, include_coriolis: bool = False):
    """Analytic continuous-time Jacobians (A: d xdot/dx, B: d xdot/du, G: d xdot/dtheta)."""
    return _kernels.jac(_vec(theta, 4), _vec(state, 6), _vec(u, 3), include_coriolis)


def rollout(theta, x0, inputs, dt: float, include_coriolis: bool = False) -> np.ndarray:
    """States x_0..x_N under a piecewise-constant input sequence of shape (N, 3)."""
    U = np.ascontiguousarray(np.asarray(inputs, dtype=float).reshape(-1, 3))
    return _kernels.rollout(_vec(theta, 4), _vec(x0, 6), U, float(dt), include_coriolis)

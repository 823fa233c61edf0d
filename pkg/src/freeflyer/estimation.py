"""Online joint state/parameter EKF.

The filter state is the 6-dim free-flyer state augmented with the four inertial
parameters.  Parameters have no process noise, so they only move through
measurement updates that see their effect on the dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from freeflyer import _kernels
from freeflyer.dynamics import InertialParams, _vec, wrap_angle
from freeflyer.information import NoiseModel

M_BOUNDS = (0.1, 1000.0)
IZZ_BOUNDS = (1e-3, 100.0)
MAX_OFFSET = 1.0

DEFAULT_PARAM_COV = np.array([25.0, 0.01, 0.01, 0.25])

_H = np.hstack([np.eye(6), np.zeros((6, 4))])


class SingularInnovation(np.linalg.LinAlgError):
    """Innovation covariance could not be inverted (usually a broken measurement covariance)."""


@dataclass(frozen=True)
class EkfBelief:
    mean: np.ndarray
    cov: np.ndarray
    clamped: bool = False

    @property
    def state(self) -> np.ndarray:
        return self.mean[:6]

    @property
    def theta(self) -> np.ndarray:
        return self.mean[6:]


def init_belief(x0, theta0, param_cov=DEFAULT_PARAM_COV, state_cov=None) -> EkfBelief:
    """Belief at t0.  ``state_cov`` defaults to the default measurement covariance."""
    if state_cov is None:
        state_cov = NoiseModel().sigma_r
    mean = np.concatenate([_vec(x0, 6), _vec(theta0, 4)])
    pc = np.asarray(param_cov, dtype=float)
    sc = np.asarray(state_cov, dtype=float)
    cov = np.zeros((10, 10))
    cov[:6, :6] = np.diag(sc) if sc.ndim == 1 else sc
    cov[6:, 6:] = np.diag(pc) if pc.ndim == 1 else pc
    return EkfBelief(mean, cov)


def _symmetrize(p):
    return 0.5 * (p + p.T)


def clamp_params(theta) -> tuple[np.ndarray, bool]:
    th = np.array(theta, dtype=float)
    before = th.copy()
    th[0] = np.clip(th[0], *M_BOUNDS)
    th[3] = np.clip(th[3], *IZZ_BOUNDS)
    c = np.hypot(th[1], th[2])
    if c > MAX_OFFSET:
        th[1:3] *= MAX_OFFSET / c
    return th, not np.array_equal(th, before)


def ekf_predict(belief: EkfBelief, u, dt: float, noise: NoiseModel, include_coriolis: bool = False) -> EkfBelief:
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = _vec(u, 3)
    x = np.ascontiguousarray(belief.mean[:6])
    th = np.ascontiguousarray(belief.mean[6:])
    A, _, G = _kernels.jac(th, x, u, include_coriolis)
    phi = np.eye(10)
    phi[:6, :6] += dt * A
    phi[:6, 6:] = dt * G

    mean = belief.mean.copy()
    mean[:6] = _kernels.rk4(th, x, u, float(dt), include_coriolis)
    cov = phi @ belief.cov @ phi.T
    cov[:6, :6] += np.diag(noise.sigma_q * dt)
    return EkfBelief(mean, _symmetrize(cov), belief.clamped)


def ekf_update(belief: EkfBelief, y, noise: NoiseModel) -> EkfBelief:
    """Full-state measurement update in Joseph form; heading innovation is wrapped."""
    y = _vec(y, 6)
    P = belief.cov
    innov = y - belief.mean[:6]
    innov[2] = wrap_angle(innov[2])
    S = P[:6, :6] + noise.r_matrix
    try:
        S_inv = np.linalg.inv(S)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation(str(exc)) from exc
    if not np.all(np.isfinite(S_inv)):
        raise SingularInnovation("innovation covariance inverse is not finite")
    K = P[:, :6] @ S_inv

    mean = belief.mean + K @ innov
    mean[2] = wrap_angle(mean[2])
    ikh = np.eye(10) - K @ _H
    cov = ikh @ P @ ikh.T + K @ noise.r_matrix @ K.T
    mean[6:], clamped = clamp_params(mean[6:])
    return EkfBelief(mean, _symmetrize(cov), belief.clamped or clamped)


def param_estimate(belief: EkfBelief) -> tuple[InertialParams, np.ndarray]:
    """Current parameter estimate and its marginal covariance."""
    return InertialParams.from_array(belief.mean[6:]), belief.cov[6:, 6:].copy()

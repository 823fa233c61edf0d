"""Compiled inner loops for the planar free-flyer.

Everything here works on plain float64 arrays so numba can compile it:

    theta  (4,)  m, cx, cy, izz
    x      (6,)  rx, ry, phi, vx, vy, omega
    u      (3,)  fx, fy, tau

The public, typed API lives in :mod:`freeflyer.dynamics` and friends.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def wrap_angle(a):
    # result in (-pi, pi]
    return a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)


@njit(cache=True)
def accel(th, x, u, coriolis):
    m, cx, cy, izz = th[0], th[1], th[2], th[3]
    vx, vy, w = x[3], x[4], x[5]
    fx, fy, tau = u[0], u[1], u[2]
    k = 1.0 if coriolis else 0.0
    # closed-form inverse of the 3x3 mass matrix
    wdot = (tau + cy * fx - cx * fy + k * m * w * (cx * vx + cy * vy)) / izz
    ax = fx / m + w * w * cx + k * w * vy + cy * wdot
    ay = fy / m + w * w * cy - k * w * vx - cx * wdot
    out = np.empty(3)
    out[0] = ax
    out[1] = ay
    out[2] = wdot
    return out


@njit(cache=True)
def deriv(th, x, u, coriolis):
    a = accel(th, x, u, coriolis)
    c = math.cos(x[2])
    s = math.sin(x[2])
    out = np.empty(6)
    out[0] = c * x[3] - s * x[4]
    out[1] = s * x[3] + c * x[4]
    out[2] = x[5]
    out[3] = a[0]
    out[4] = a[1]
    out[5] = a[2]
    return out


@njit(cache=True)
def jac(th, x, u, coriolis):
    """Continuous-time Jacobians (A, B, G) of ``deriv``."""
    m, cx, cy, izz = th[0], th[1], th[2], th[3]
    phi, vx, vy, w = x[2], x[3], x[4], x[5]
    fx, fy, tau = u[0], u[1], u[2]
    k = 1.0 if coriolis else 0.0
    c = math.cos(phi)
    s = math.sin(phi)

    num = tau + cy * fx - cx * fy + k * m * w * (cx * vx + cy * vy)
    p = num / izz

    A = np.zeros((6, 6))
    A[0, 2] = -s * vx - c * vy
    A[0, 3] = c
    A[0, 4] = -s
    A[1, 2] = c * vx - s * vy
    A[1, 3] = s
    A[1, 4] = c
    A[2, 5] = 1.0

    dp_dvx = k * m * w * cx / izz
    dp_dvy = k * m * w * cy / izz
    dp_dw = k * m * (cx * vx + cy * vy) / izz
    A[3, 3] = cy * dp_dvx
    A[3, 4] = k * w + cy * dp_dvy
    A[3, 5] = 2.0 * w * cx + k * vy + cy * dp_dw
    A[4, 3] = -k * w - cx * dp_dvx
    A[4, 4] = -cx * dp_dvy
    A[4, 5] = 2.0 * w * cy - k * vx - cx * dp_dw
    A[5, 3] = dp_dvx
    A[5, 4] = dp_dvy
    A[5, 5] = dp_dw

    B = np.zeros((6, 3))
    B[3, 0] = 1.0 / m + cy * cy / izz
    B[3, 1] = -cy * cx / izz
    B[3, 2] = cy / izz
    B[4, 0] = -cx * cy / izz
    B[4, 1] = 1.0 / m + cx * cx / izz
    B[4, 2] = -cx / izz
    B[5, 0] = cy / izz
    B[5, 1] = -cx / izz
    B[5, 2] = 1.0 / izz

    dp_dm = k * w * (cx * vx + cy * vy) / izz
    dp_dcx = (-fy + k * m * w * vx) / izz
    dp_dcy = (fx + k * m * w * vy) / izz
    dp_dizz = -p / izz
    G = np.zeros((6, 4))
    G[3, 0] = -fx / (m * m) + cy * dp_dm
    G[3, 1] = w * w + cy * dp_dcx
    G[3, 2] = p + cy * dp_dcy
    G[3, 3] = cy * dp_dizz
    G[4, 0] = -fy / (m * m) - cx * dp_dm
    G[4, 1] = -p - cx * dp_dcx
    G[4, 2] = w * w - cx * dp_dcy
    G[4, 3] = -cx * dp_dizz
    G[5, 0] = dp_dm
    G[5, 1] = dp_dcx
    G[5, 2] = dp_dcy
    G[5, 3] = dp_dizz
    return A, B, G


@njit(cache=True)
def rk4(th, x, u, dt, coriolis):
    k1 = deriv(th, x, u, coriolis)
    k2 = deriv(th, x + 0.5 * dt * k1, u, coriolis)
    k3 = deriv(th, x + 0.5 * dt * k2, u, coriolis)
    k4 = deriv(th, x + dt * k3, u, coriolis)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out[2] = wrap_angle(out[2])
    return out


@njit(cache=True)
def rk4_jac(th, x, u, dt, coriolis):
    """RK4 step plus its exact derivatives with respect to x and u."""
    eye = np.eye(6)
    k1 = deriv(th, x, u, coriolis)
    A1, B1, _ = jac(th, x, u, coriolis)
    x2 = x + 0.5 * dt * k1
    k2 = deriv(th, x2, u, coriolis)
    A2, B2, _ = jac(th, x2, u, coriolis)
    x3 = x + 0.5 * dt * k2
    k3 = deriv(th, x3, u, coriolis)
    A3, B3, _ = jac(th, x3, u, coriolis)
    x4 = x + dt * k3
    k4 = deriv(th, x4, u, coriolis)
    A4, B4, _ = jac(th, x4, u, coriolis)

    K1x = A1
    K1u = B1
    K2x = A2 @ (eye + 0.5 * dt * K1x)
    K2u = A2 @ (0.5 * dt * K1u) + B2
    K3x = A3 @ (eye + 0.5 * dt * K2x)
    K3u = A3 @ (0.5 * dt * K2u) + B3
    K4x = A4 @ (eye + dt * K3x)
    K4u = A4 @ (dt * K3u) + B4

    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out[2] = wrap_angle(out[2])
    Fx = eye + (dt / 6.0) * (K1x + 2.0 * K2x + 2.0 * K3x + K4x)
    Fu = (dt / 6.0) * (K1u + 2.0 * K2u + 2.0 * K3u + K4u)
    return out, Fx, Fu


@njit(cache=True)
def rollout(th, x0, U, dt, coriolis):
    n = U.shape[0]
    X = np.empty((n + 1, 6))
    X[0] = x0
    for k in range(n):
        X[k + 1] = rk4(th, X[k], U[k], dt, coriolis)
    return X


@njit(cache=True)
def sens_step(th, x, u, S, dt, coriolis):
    A, _, G = jac(th, x, u, coriolis)
    return S + dt * (A @ S) + dt * G


@njit(cache=True)
def fim_of_rollout(th, X, U, dt, rinv, coriolis):
    """Euler sensitivity propagation along a fixed rollout; FIM summed per knot."""
    S = np.zeros((6, 4))
    F = np.zeros((4, 4))
    for k in range(U.shape[0]):
        S = sens_step(th, X[k], U[k], S, dt, coriolis)
        for i in range(4):
            for j in range(4):
                acc = 0.0
                for r in range(6):
                    acc += S[r, i] * rinv[r] * S[r, j]
                F[i, j] += acc
    return F


@njit(cache=True)
def trace_inv_reg(F, eps):
    return np.trace(np.linalg.inv(F + eps * np.eye(4)))


@njit(cache=True)
def info_cost(th, x0, U, dt, rinv, eps, coriolis):
    X = rollout(th, x0, U, dt, coriolis)
    return trace_inv_reg(fim_of_rollout(th, X, U, dt, rinv, coriolis), eps)


@njit(cache=True)
def info_grad_fd(th, x0, U, dt, rinv, eps, h, coriolis):
    """Forward-difference gradient of tr((F+eps I)^-1) over every input."""
    base = info_cost(th, x0, U, dt, rinv, eps, coriolis)
    g = np.empty_like(U)
    Up = U.copy()
    for k in range(U.shape[0]):
        for j in range(3):
            Up[k, j] = U[k, j] + h
            g[k, j] = (info_cost(th, x0, Up, dt, rinv, eps, coriolis) - base) / h
            Up[k, j] = U[k, j]
    return base, g


@njit(cache=True)
def _state_error(x, ref):
    e = x - ref
    e[2] = wrap_angle(e[2])
    return e


@njit(cache=True)
def _state_penalty(x, obs, box, w_obs):
    """Hinge penalty on one state and its gradient.

    ``box`` is (xmin, xmax, ymin, ymax, speed_max); the penalty is active when the
    position enters an obstacle circle, leaves the box, or the speed exceeds the limit.
    """
    pen = 0.0
    g = np.zeros(6)
    p0 = x[0]
    p1 = x[1]
    lo0 = box[0] - p0
    hi0 = p0 - box[1]
    lo1 = box[2] - p1
    hi1 = p1 - box[3]
    if lo0 > 0.0:
        pen += w_obs * lo0 * lo0
        g[0] -= 2.0 * w_obs * lo0
    if hi0 > 0.0:
        pen += w_obs * hi0 * hi0
        g[0] += 2.0 * w_obs * hi0
    if lo1 > 0.0:
        pen += w_obs * lo1 * lo1
        g[1] -= 2.0 * w_obs * lo1
    if hi1 > 0.0:
        pen += w_obs * hi1 * hi1
        g[1] += 2.0 * w_obs * hi1
    for i in range(obs.shape[0]):
        dx = p0 - obs[i, 0]
        dy = p1 - obs[i, 1]
        d = math.sqrt(dx * dx + dy * dy)
        viol = obs[i, 2] - d
        if viol > 0.0:
            pen += w_obs * viol * viol
            if d > 1e-12:
                g[0] += -2.0 * w_obs * viol * dx / d
                g[1] += -2.0 * w_obs * viol * dy / d
    speed = math.sqrt(x[3] * x[3] + x[4] * x[4])
    over = speed - box[4]
    if over > 0.0:
        pen += w_obs * over * over
        g[3] += 2.0 * w_obs * over * x[3] / speed
        g[4] += 2.0 * w_obs * over * x[4] / speed
    return pen, g


@njit(cache=True)
def tracking_cost(th, x0, U, dt, Xref, Uref, Qd, Rd, Qfd, obs, box, w_obs, coriolis):
    """Quadratic tracking cost of a single-shooting rollout.

    Returns (total, state_part, input_part, penalty_part). Weights are diagonals.
    """
    X = rollout(th, x0, U, dt, coriolis)
    n = U.shape[0]
    js = 0.0
    ju = 0.0
    jp = 0.0
    for k in range(n):
        e = _state_error(X[k], Xref[k])
        du = U[k] - Uref[k]
        js += np.sum(Qd * e * e)
        ju += np.sum(Rd * du * du)
        pen, _ = _state_penalty(X[k], obs, box, w_obs)
        jp += pen
    e = _state_error(X[n], Xref[n])
    js += np.sum(Qfd * e * e)
    pen, _ = _state_penalty(X[n], obs, box, w_obs)
    jp += pen
    return js + ju + jp, js, ju, jp


@njit(cache=True)
def tracking_cost_grad(th, x0, U, dt, Xref, Uref, Qd, Rd, Qfd, obs, box, w_obs, coriolis):
    """Tracking cost and its exact gradient over U (adjoint sweep through RK4)."""
    n = U.shape[0]
    X = np.empty((n + 1, 6))
    Fx = np.empty((n, 6, 6))
    Fu = np.empty((n, 6, 3))
    X[0] = x0
    for k in range(n):
        X[k + 1], Fx[k], Fu[k] = rk4_jac(th, X[k], U[k], dt, coriolis)

    total = 0.0
    grad = np.empty_like(U)
    e = _state_error(X[n], Xref[n])
    total += np.sum(Qfd * e * e)
    lam = 2.0 * Qfd * e
    pen, gp = _state_penalty(X[n], obs, box, w_obs)
    total += pen
    lam += gp
    for k in range(n - 1, -1, -1):
        du = U[k] - Uref[k]
        total += np.sum(Rd * du * du)
        grad[k] = 2.0 * Rd * du + Fu[k].T @ lam
        e = _state_error(X[k], Xref[k])
        total += np.sum(Qd * e * e)
        pen, gp = _state_penalty(X[k], obs, box, w_obs)
        total += pen
        lx = 2.0 * Qd * e + gp
        lam = lx + Fx[k].T @ lam
    return total, grad

"""Box-constrained descent used by both the local planner and the MPC.

Spectral (Barzilai-Borwein) projected gradient with a monotone Armijo
backtracking search along the projected direction.  The returned iterate is
always the best one seen, so the cost never exceeds the initial guess.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

ARMIJO = 1e-4
MIN_STEP = 1e-12


@dataclass
class SolveResult:
    x: np.ndarray
    cost: float
    iterations: int
    converged: bool
    reason: str
    evaluations: int = 0


def projected_descent(
    cost: Callable[[np.ndarray], float],
    cost_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    lower,
    upper,
    gtol: float = 1e-4,
    ftol: float = 1e-8,
    max_iter: int = 200,
) -> SolveResult:
    """Minimize ``cost`` over the box [lower, upper].

    Stops when the projected gradient step is below ``gtol`` (inf-norm), when the
    relative cost decrease is below ``ftol``, or after ``max_iter`` iterations.
    Hitting the iteration cap or a failed line search reports ``converged=False``.
    """
    proj = lambda z: np.clip(z, lower, upper)
    x = proj(np.asarray(x0, dtype=float))
    f, g = cost_grad(x)
    n_eval = 1
    span = float(np.max(np.asarray(upper) - np.asarray(lower)))
    gmax = float(np.max(np.abs(g)))
    alpha = span / gmax if gmax > 0 else 1.0
    stalled = False

    for it in range(max_iter):
        if np.max(np.abs(proj(x - g) - x)) <= gtol:
            return SolveResult(x, f, it, True, "gradient", n_eval)
        d = proj(x - alpha * g) - x
        slope = float(np.sum(g * d))
        if slope >= 0:
            return SolveResult(x, f, it, True, "stationary", n_eval)
        t = 1.0
        while True:
            x_new = x + t * d
            f_new = cost(x_new)
            n_eval += 1
            if f_new <= f + ARMIJO * t * slope:
                break
            t *= 0.5
            if t < MIN_STEP:
                return SolveResult(x, f, it, False, "line search", n_eval)
        f_new, g_new = cost_grad(x_new)
        n_eval += 1
        s = x_new - x
        y = g_new - g
        sy = float(np.sum(s * y))
        alpha = float(np.sum(s * s)) / sy if sy > 0 else 10.0 * alpha
        alpha = min(max(alpha, 1e-16), 1e16)
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        if decrease <= ftol * max(1.0, abs(f)):
            # a stale spectral step can stall progress; retry once from a fresh scale
            if stalled:
                return SolveResult(x, f, it + 1, True, "cost", n_eval)
            stalled = True
            gmax = float(np.max(np.abs(g)))
            alpha = span / gmax if gmax > 0 else 1.0
        else:
            stalled = False
    return SolveResult(x, f, max_iter, False, "iterations", n_eval)


def bounded_quasi_newton(
    cost_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    lower,
    upper,
    gtol: float = 1e-4,
    ftol: float = 1e-8,
    max_iter: int = 200,
) -> SolveResult:
    """L-BFGS-B from scipy with the same stopping contract as ``projected_descent``.

    scipy's line search only accepts points that decrease the cost, and the start
    point is kept when the result is somehow worse, so the returned cost never
    exceeds the cost at ``x0``.
    """
    x0 = np.clip(np.asarray(x0, dtype=float), lower, upper)
    f0, _ = cost_grad(x0)
    n = x0.size
    bounds = optimize.Bounds(np.broadcast_to(lower, n), np.broadcast_to(upper, n))
    res = optimize.minimize(cost_grad, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": max_iter, "gtol": gtol, "ftol": ftol, "maxcor": 20})
    if not np.isfinite(res.fun) or res.fun > f0:
        return SolveResult(x0, float(f0), int(res.nit), False, "no descent", int(res.nfev))
    reason = "iterations" if res.nit >= max_iter else ("gradient" if "PGTOL" in str(res.message) else "cost")
    ok = bool(res.success) or reason != "iterations"
    if "ABNORMAL" in str(res.message):
        reason, ok = "line search", False
    return SolveResult(np.asarray(res.x), float(res.fun), int(res.nit), ok, reason, int(res.nfev))

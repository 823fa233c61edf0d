"""Closed-loop simulation of the full planning/estimation stack and the experiments built on it.

One run executes the multi-rate schedule on a single deterministic loop:

* global kinodynamic plan once at start (again only when replanning is requested),
* every replan period: information weight from the decay schedule, then a local plan,
* every control period: measure, EKF update, MPC, apply the wrench to the ground truth
  (RK4 sub-steps plus process noise), EKF predict,
* every model-update period: swap the estimate into the planner and controller
  if it passes the gate.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from freeflyer import _kernels
from freeflyer.control import MpcConfig, mpc_step
from freeflyer.dynamics import InertialParams, wrap_angle
from freeflyer.estimation import ekf_predict, ekf_update, init_belief, param_estimate
from freeflyer.global_plan import Budget, GlobalPlan, NoPlanFound, StartInCollision, plan_global
from freeflyer.local_plan import (
    DEFAULT_DT_KNOT, CostWeights, LocalPlan, TargetInCollision, gamma_schedule, plan_local, select_waypoint,
)
from freeflyer.scenario import ScenarioConfig

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "t,rx,ry,phi,vx,vy,omega,mrx,mry,mphi,mvx,mvy,momega,fx,fy,tau,"
    "m_hat,cx_hat,cy_hat,izz_hat,p_m,p_cx,p_cy,p_izz,gamma,info_trace,plan_id"
).split(",")
PARAM_NAMES = ("m", "cx", "cy", "izz")


class GlobalPlanFailed(RuntimeError):
    pass


class Timeout(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class StackSettings:
    """Planner/controller tuning that is not part of the scenario file."""

    local_weights: CostWeights = field(default_factory=CostWeights)
    # a 2 s horizon sees far enough ahead to brake when the model is still wrong
    mpc: MpcConfig = field(default_factory=lambda: MpcConfig(horizon_nc=20))
    dt_knot: float = DEFAULT_DT_KNOT
    u_max: float = 0.4
    rrt_budget: Budget = field(default_factory=Budget)
    # fraction of u_max the global primitives may use; the rest is tracking margin
    rrt_authority: float = 0.5
    # local plans stay slow enough to brake inside roughly half a meter at full thrust
    speed_max: float = 0.1
    global_replan_at: tuple[float, ...] = ()


@dataclass
class Trace:
    rows: np.ndarray
    status: str
    global_plan: GlobalPlan | None
    local_plans: list[LocalPlan]
    replan_times: list[float]
    update_times: list[float]
    swaps: list[tuple[float, tuple[float, ...]]]
    truth_fine: np.ndarray
    cov_min_eig: np.ndarray
    clamp_events: int
    tau: float
    config: ScenarioConfig

    @property
    def duration(self) -> float:
        return float(self.rows[-1, 0]) if len(self.rows) else 0.0

    @property
    def success(self) -> bool:
        return self.status == "success"

    @property
    def n_replans(self) -> int:
        return sum(1 for t in self.replan_times if t > 0)

    @property
    def n_model_updates(self) -> int:
        return len(self.update_times)

    def final_params(self) -> tuple[np.ndarray, np.ndarray]:
        """Final parameter estimate and the diagonal of its covariance."""
        if len(self.rows) == 0:
            th = self.config.theta_init
            return np.asarray(th.theta), th.cov.copy()
        last = self.rows[-1]
        return last[16:20].copy(), last[20:24].copy()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in self.rows:
            w.writerow([repr(float(v)) for v in row[:-1]] + [int(row[-1])])
        return buf.getvalue()


def _in_goal(cfg: ScenarioConfig, x) -> bool:
    c, s = np.cos(x[2]), np.sin(x[2])
    v = (c * x[3] - s * x[4], s * x[3] + c * x[4])
    return cfg.goal.contains(x[:2], v)


def run_scenario(cfg: ScenarioConfig, settings: StackSettings = StackSettings(),
                 raise_on_timeout: bool = False) -> Trace:
    rates = cfg.rates
    dt_c = rates.dt_control
    n_sub = rates.substeps
    ticks_replan = rates.ticks(rates.replan_period)
    ticks_update = rates.ticks(rates.model_update_period)
    coriolis = cfg.flags.include_coriolis
    rng = np.random.default_rng(cfg.seed)
    th_true = np.asarray(cfg.theta_true)
    meas_sd = np.sqrt(cfg.noise.sigma_r)
    proc_sd = np.sqrt(cfg.noise.sigma_q[3:] * rates.dt_sim)

    theta_model = cfg.theta_init.theta
    x_true = np.asarray(cfg.x0, dtype=float).copy()

    try:
        gp = plan_global(x_true, cfg.goal, cfg.world, theta_model, settings.rrt_budget, seed=cfg.seed,
                         u_max=settings.rrt_authority * settings.u_max)
    except (NoPlanFound, StartInCollision) as exc:
        raise GlobalPlanFailed(str(exc)) from exc
    tau = cfg.tau if cfg.tau is not None else max(gp.total_time, dt_c) / 10.0

    belief = init_belief(x_true, theta_model, cfg.theta_init.cov, cfg.noise.sigma_r)
    last_swap_trace = float(np.trace(belief.cov[6:, 6:]))
    replan_queue = sorted(settings.global_replan_at)

    rows, fine, min_eigs = [], [x_true.copy()], []
    local_plans: list[LocalPlan] = []
    replan_times, update_times, swaps = [], [], []
    clamp_events = 0
    plan = None
    gamma = 0.0
    warm = None
    status = "timeout"
    n_ticks = int(round(cfg.max_sim_time / dt_c))

    for i in range(n_ticks + 1):
        t = i * dt_c
        if _in_goal(cfg, x_true):
            status = "success"
            break
        if i == n_ticks:
            break

        y = x_true + rng.normal(0.0, meas_sd)
        y[2] = wrap_angle(y[2])
        belief = ekf_update(belief, y, cfg.noise)

        if i > 0 and i % ticks_update == 0:
            update_times.append(t)
            p_trace = float(np.trace(belief.cov[6:, 6:]))
            if p_trace < last_swap_trace and not belief.clamped:
                theta_model = InertialParams.from_array(belief.mean[6:])
                last_swap_trace = p_trace
                swaps.append((t, tuple(float(v) for v in belief.mean[6:])))
                warm = None
                log.debug("t=%.1f model swap to %s", t, theta_model)
            if belief.clamped:
                clamp_events += 1
            belief = replace(belief, clamped=False)

        if i % ticks_replan == 0:
            if cfg.flags.global_replan and replan_queue and t >= replan_queue[0]:
                replan_queue.pop(0)
                try:
                    gp = plan_global(belief.mean[:6], cfg.goal, cfg.world, theta_model, settings.rrt_budget,
                                     seed=cfg.seed + i, u_max=settings.rrt_authority * settings.u_max)
                except (NoPlanFound, StartInCollision) as exc:
                    raise GlobalPlanFailed(str(exc)) from exc
            gamma = gamma_schedule(t, cfg.gamma0, tau) if cfg.flags.informative else 0.0
            min_knots = int(np.ceil(rates.replan_period / settings.dt_knot - 1e-9))
            target, n_knots = select_waypoint(gp, belief.mean[:6], t, rates.replan_period, settings.dt_knot,
                                              min_horizon=min_knots, goal_center=cfg.goal.center, world=cfg.world)
            weights = replace(settings.local_weights, gamma=gamma)
            try:
                plan = plan_local(belief.mean[:6], theta_model, target, weights, cfg.world, n_knots,
                                  settings.dt_knot, warm_start=None, noise=cfg.noise, u_max=settings.u_max,
                                  t0=t, include_coriolis=coriolis, speed_max=settings.speed_max)
            except TargetInCollision:
                log.warning("t=%.1f waypoint in collision; keeping previous local plan", t)
            local_plans.append(plan)
            replan_times.append(t)

        res = mpc_step(belief.mean[:6], theta_model, plan, t, settings.mpc, warm, include_coriolis=coriolis,
                       world=cfg.world, speed_max=settings.speed_max)
        warm = res.shifted()
        u = np.asarray(res.u0)

        p_diag = np.diag(belief.cov)[6:]
        min_eigs.append(float(np.linalg.eigvalsh(belief.cov).min()))
        rows.append(np.concatenate([[t], x_true, y, u, belief.mean[6:], p_diag,
                                    [gamma, plan.info_trace, len(local_plans) - 1]]))

        for _ in range(n_sub):
            x_true = _kernels.rk4(th_true, x_true, u, rates.dt_sim, coriolis)
            x_true[3:] += rng.normal(0.0, proc_sd)
            fine.append(x_true.copy())
        belief = ekf_predict(belief, u, dt_c, cfg.noise, coriolis)

    trace = Trace(
        rows=np.array(rows).reshape(-1, len(TRACE_COLUMNS)),
        status=status,
        global_plan=gp,
        local_plans=local_plans,
        replan_times=replan_times,
        update_times=update_times,
        swaps=swaps,
        truth_fine=np.array(fine),
        cov_min_eig=np.array(min_eigs),
        clamp_events=clamp_events,
        tau=tau,
        config=cfg,
    )
    if status == "timeout" and raise_on_timeout:
        raise Timeout(f"goal not reached within {cfg.max_sim_time} s", trace)
    return trace


def check_trace(trace: Trace, u_max: float = 0.4, psd_tol: float = 1e-10) -> list[str]:
    """Independent validation of an emitted trace; returns a list of problems (empty when valid)."""
    cfg = trace.config
    problems = []
    rows = trace.rows
    dt_c = cfg.rates.dt_control
    if len(rows):
        t = rows[:, 0]
        if np.any(np.diff(t) <= 0):
            problems.append("time not strictly increasing")
        if not np.allclose(np.diff(t), dt_c, atol=1e-9):
            problems.append("rows not at the control period")
        if np.any(np.abs(rows[:, 13:16]) > u_max + 1e-12):
            problems.append("wrench outside the input box")
        if np.any(rows[:, 20:24] < 0):
            problems.append("negative parameter variance")
        if len(trace.cov_min_eig) and trace.cov_min_eig.min() < -psd_tol * max(1.0, rows[:, 20:24].max()):
            problems.append("EKF covariance not PSD")
        if not np.all(np.isfinite(rows)):
            problems.append("non-finite values")
    pts = trace.truth_fine[:, :2]
    if len(cfg.world.obstacles):
        inf = cfg.world.inflated
        d = np.hypot(pts[:, None, 0] - inf[None, :, 0], pts[:, None, 1] - inf[None, :, 1])
        if np.any(d < inf[None, :, 2]):
            problems.append("ground truth enters an inflated obstacle")
    if not np.all(cfg.world.in_bounds(pts)):
        problems.append("ground truth leaves the world bounds")
    dur = trace.duration
    if trace.n_replans != int(np.floor(dur / cfg.rates.replan_period + 1e-9)):
        problems.append(f"replan count {trace.n_replans} != floor({dur}/{cfg.rates.replan_period})")
    if trace.n_model_updates != int(np.floor(dur / cfg.rates.model_update_period + 1e-9)):
        problems.append(f"model-update count {trace.n_model_updates} != floor({dur}/{cfg.rates.model_update_period})")
    return problems


@dataclass
class RunRecord:
    seed: int
    status: str
    duration: float
    final_theta: list[float]
    final_p: list[float]
    replans: int
    model_updates: int
    swaps: int
    error: str | None = None


@dataclass
class MonteCarloSummary:
    runs: list[RunRecord]
    theta_true: list[float]
    mean_error: list[float]
    std_error: list[float]
    mean_p: list[float]
    failures: int
    covariance_change_pct: dict[str, float] | None = None

    def to_json(self) -> str:
        def clean(o):
            if isinstance(o, float):
                return round(o, 12)
            if isinstance(o, dict):
                return {k: clean(v) for k, v in o.items()}
            if isinstance(o, list):
                return [clean(v) for v in o]
            return o

        payload = {
            "runs": [clean(vars(r)) for r in self.runs],
            "theta_true": clean(self.theta_true),
            "param_names": list(PARAM_NAMES),
            "mean_error": clean(self.mean_error),
            "std_error": clean(self.std_error),
            "mean_p": clean(self.mean_p),
            "failures": self.failures,
            "covariance_change_pct": clean(self.covariance_change_pct),
        }
        return json.dumps(payload, indent=2, sort_keys=False) + "\n"


def _record(cfg: ScenarioConfig, settings: StackSettings) -> tuple[RunRecord, Trace | None]:
    try:
        tr = run_scenario(cfg, settings)
    except GlobalPlanFailed as exc:
        return RunRecord(cfg.seed, "global_plan_failed", 0.0, list(np.asarray(cfg.theta_init.theta)),
                         cfg.theta_init.cov.tolist(), 0, 0, 0, str(exc)), None
    th, p = tr.final_params()
    return RunRecord(cfg.seed, tr.status, tr.duration, th.tolist(), p.tolist(), tr.n_replans,
                     tr.n_model_updates, len(tr.swaps)), tr


def summarize(records: list[RunRecord], theta_true) -> MonteCarloSummary:
    truth = np.asarray(theta_true)
    th = np.array([r.final_theta for r in records])
    p = np.array([r.final_p for r in records])
    err = th - truth
    failures = sum(r.status != "success" for r in records)
    return MonteCarloSummary(records, truth.tolist(), err.mean(axis=0).tolist(), err.std(axis=0).tolist(),
                             p.mean(axis=0).tolist(), failures)


def monte_carlo(cfg: ScenarioConfig, n_runs: int, settings: StackSettings = StackSettings(),
                keep_traces: bool = False):
    """Runs with seeds seed, seed+1, ...; returns the summary (and traces when requested)."""
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    records, traces = [], []
    for i in range(n_runs):
        rec, tr = _record(cfg.with_(seed=cfg.seed + i), settings)
        log.info("run %d: %s in %.1f s", rec.seed, rec.status, rec.duration)
        records.append(rec)
        traces.append(tr)
    summary = summarize(records, cfg.theta_true)
    return (summary, traces) if keep_traces else summary


@dataclass
class Comparison:
    nominal: MonteCarloSummary
    informative: MonteCarloSummary
    change_pct: dict[str, float]

    def to_json(self) -> str:
        payload = {
            "param_names": list(PARAM_NAMES),
            "covariance_change_pct": {k: round(v, 9) for k, v in self.change_pct.items()},
            "nominal": json.loads(self.nominal.to_json()),
            "informative": json.loads(self.informative.to_json()),
        }
        return json.dumps(payload, indent=2) + "\n"

    def table(self) -> str:
        lines = ["parameter,covariance_change_pct"]
        lines += [f"{k},{v:.4f}" for k, v in self.change_pct.items()]
        return "\n".join(lines) + "\n"


def compare_informative(cfg: ScenarioConfig, n_runs: int, settings: StackSettings = StackSettings(),
                        keep_traces: bool = False):
    """Matched-seed nominal (gamma = 0) vs information-aware runs.

    Percent change per parameter is ``(informative - nominal) / nominal * 100`` on the
    across-run mean of the final covariance diagonals.
    """
    if n_runs < 2:
        raise ValueError("n_runs must be at least 2")
    nom = monte_carlo(cfg.with_(flags=replace(cfg.flags, informative=False)), n_runs, settings, keep_traces)
    inf = monte_carlo(cfg.with_(flags=replace(cfg.flags, informative=True)), n_runs, settings, keep_traces)
    if keep_traces:
        (nom, nom_tr), (inf, inf_tr) = nom, inf
    pct = {
        name: float((inf.mean_p[j] - nom.mean_p[j]) / nom.mean_p[j] * 100.0)
        for j, name in enumerate(PARAM_NAMES)
    }
    nom.covariance_change_pct = inf.covariance_change_pct = pct
    out = Comparison(nom, inf, pct)
    return (out, nom_tr, inf_tr) if keep_traces else out

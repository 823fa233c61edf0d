"""Scenario configuration and its YAML file format.

A scenario file is a YAML mapping whose keys are exactly the ScenarioConfig
fields; nested sections use the field names of the nested types.  Unknown keys
anywhere are rejected.  Example::

    theta_true: {m: 31.368, cx: 0.0, cy: -0.115, izz: 0.980}
    theta_init: {m: 19.568, cx: 0.0, cy: 0.0, izz: 0.282, cov: [25.0, 0.01, 0.01, 0.25]}
    world:
      bounds: [-0.5, 2.5, -1.0, 1.0]
      inflation: 0.1
      obstacles: [{center: [1.0, 0.5], radius: 0.2}]
    x0: {rx: 0.0, ry: 0.0, phi: 0.0, vx: 0.0, vy: 0.0, omega: 0.0}
    goal: {center: [2.0, 0.0], tolerance: 0.15, vel_tolerance: 0.05}
    rates: {dt_sim: 0.02, control: 10.0, replan_period: 12.0, model_update_period: 16.0}
    gamma0: 3000.0
    tau: null            # null: one tenth of the global plan duration
    noise:
      sigma_r: [2.5e-5, 2.5e-5, 1.0e-4, 2.5e-5, 2.5e-5, 1.0e-4]
      sigma_q: [1.0e-8, 1.0e-8, 1.0e-8, 1.0e-8, 1.0e-8, 1.0e-8]
    seed: 0
    max_sim_time: 300.0
    flags: {informative: true, global_replan: false, include_coriolis: false}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from freeflyer.dynamics import ASTROBEE_SIM, COMBINED_SIM, FreeflyerState, InertialParams
from freeflyer.estimation import DEFAULT_PARAM_COV
from freeflyer.global_plan import GoalRegion, ObstacleWorld
from freeflyer.information import NoiseModel


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ParamPrior:
    theta: InertialParams
    cov: np.ndarray = field(default_factory=lambda: DEFAULT_PARAM_COV.copy())

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (4,) or np.any(cov <= 0):
            raise ScenarioError("theta_init.cov must be 4 positive variances")
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class Rates:
    dt_sim: float = 0.02
    control: float = 10.0
    replan_period: float = 12.0
    model_update_period: float = 16.0

    @property
    def dt_control(self) -> float:
        return 1.0 / self.control

    def ticks(self, period: float) -> int:
        return int(round(period * self.control))

    @property
    def substeps(self) -> int:
        return int(round(self.dt_control / self.dt_sim))

    def validate(self):
        if min(self.dt_sim, self.control, self.replan_period, self.model_update_period) <= 0:
            raise ScenarioError("rates must be positive")
        if not math.isclose(self.substeps * self.dt_sim, self.dt_control, rel_tol=1e-9):
            raise ScenarioError("dt_sim must divide the control period")
        for name in ("replan_period", "model_update_period"):
            period = getattr(self, name)
            if not math.isclose(self.ticks(period) * self.dt_control, period, rel_tol=1e-9):
                raise ScenarioError(f"control period must divide {name}")


@dataclass(frozen=True)
class Flags:
    informative: bool = True
    global_replan: bool = False
    include_coriolis: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    theta_true: InertialParams = COMBINED_SIM
    theta_init: ParamPrior = field(default_factory=lambda: ParamPrior(ASTROBEE_SIM))
    world: ObstacleWorld = field(default_factory=lambda: ObstacleWorld((-0.5, 2.5, -1.0, 1.0)))
    x0: FreeflyerState = field(default_factory=FreeflyerState)
    goal: GoalRegion = field(default_factory=lambda: GoalRegion((2.0, 0.0)))
    rates: Rates = field(default_factory=Rates)
    gamma0: float = 3000.0
    tau: float | None = None
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    max_sim_time: float = 300.0
    flags: Flags = field(default_factory=Flags)

    def __post_init__(self):
        self.rates.validate()
        if not self.world.in_bounds(np.array(self.goal.center))[0]:
            raise ScenarioError("goal must lie inside the world bounds")
        if self.gamma0 < 0 or (self.tau is not None and self.tau <= 0):
            raise ScenarioError("gamma0 must be >= 0 and tau > 0")
        if self.max_sim_time <= 0:
            raise ScenarioError("max_sim_time must be positive")

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def _check_keys(section: str, data: dict, allowed) -> None:
    if not isinstance(data, dict):
        raise ScenarioError(f"{section} must be a mapping")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ScenarioError(f"unknown keys in {section or 'scenario'}: {sorted(unknown)}")


def _params(section, data) -> InertialParams:
    _check_keys(section, data, ("m", "cx", "cy", "izz"))
    return InertialParams(**{k: float(data[k]) for k in ("m", "cx", "cy", "izz")})


def config_from_dict(data: dict) -> ScenarioConfig:
    top = [f.name for f in fields(ScenarioConfig)]
    _check_keys("", data, top)
    kw = {}
    if "theta_true" in data:
        kw["theta_true"] = _params("theta_true", data["theta_true"])
    if "theta_init" in data:
        d = dict(data["theta_init"])
        _check_keys("theta_init", d, ("m", "cx", "cy", "izz", "cov"))
        cov = d.pop("cov", DEFAULT_PARAM_COV)
        kw["theta_init"] = ParamPrior(_params("theta_init", d), np.asarray(cov, dtype=float))
    if "world" in data:
        d = data["world"]
        _check_keys("world", d, ("bounds", "inflation", "obstacles"))
        obs = []
        for o in d.get("obstacles") or []:
            _check_keys("world.obstacles", o, ("center", "radius"))
            obs.append([*o["center"], o["radius"]])
        kw["world"] = ObstacleWorld(tuple(d["bounds"]), np.array(obs, dtype=float).reshape(-1, 3),
                                    float(d.get("inflation", 0.0)))
    if "x0" in data:
        _check_keys("x0", data["x0"], [f.name for f in fields(FreeflyerState)])
        kw["x0"] = FreeflyerState(**{k: float(v) for k, v in data["x0"].items()})
    if "goal" in data:
        _check_keys("goal", data["goal"], ("center", "tolerance", "vel_tolerance"))
        g = dict(data["goal"])
        g["center"] = tuple(float(c) for c in g["center"])
        kw["goal"] = GoalRegion(**g)
    if "rates" in data:
        _check_keys("rates", data["rates"], [f.name for f in fields(Rates)])
        kw["rates"] = Rates(**{k: float(v) for k, v in data["rates"].items()})
    if "noise" in data:
        _check_keys("noise", data["noise"], ("sigma_r", "sigma_q"))
        kw["noise"] = NoiseModel(**{k: np.asarray(v, dtype=float) for k, v in data["noise"].items()})
    if "flags" in data:
        _check_keys("flags", data["flags"], [f.name for f in fields(Flags)])
        kw["flags"] = Flags(**{k: bool(v) for k, v in data["flags"].items()})
    for key, cast in (("gamma0", float), ("seed", int), ("max_sim_time", float)):
        if key in data:
            kw[key] = cast(data[key])
    if "tau" in data:
        kw["tau"] = None if data["tau"] is None else float(data["tau"])
    try:
        return ScenarioConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc


def config_to_dict(cfg: ScenarioConfig) -> dict:
    p = lambda th: {"m": th.m, "cx": th.cx, "cy": th.cy, "izz": th.izz}
    return {
        "theta_true": p(cfg.theta_true),
        "theta_init": {**p(cfg.theta_init.theta), "cov": cfg.theta_init.cov.tolist()},
        "world": {
            "bounds": list(cfg.world.bounds),
            "inflation": cfg.world.inflation,
            "obstacles": [{"center": [float(o[0]), float(o[1])], "radius": float(o[2])} for o in cfg.world.obstacles],
        },
        "x0": {f.name: getattr(cfg.x0, f.name) for f in fields(FreeflyerState)},
        "goal": {"center": list(cfg.goal.center), "tolerance": cfg.goal.tolerance,
                 "vel_tolerance": cfg.goal.vel_tolerance},
        "rates": {f.name: getattr(cfg.rates, f.name) for f in fields(Rates)},
        "gamma0": cfg.gamma0,
        "tau": cfg.tau,
        "noise": {"sigma_r": cfg.noise.sigma_r.tolist(), "sigma_q": cfg.noise.sigma_q.tolist()},
        "seed": cfg.seed,
        "max_sim_time": cfg.max_sim_time,
        "flags": {f.name: getattr(cfg.flags, f.name) for f in fields(Flags)},
    }


def load_scenario(path_or_name: str | Path) -> ScenarioConfig:
    """Load a scenario file, or one of the shipped scenarios by name (e.g. ``payload_transfer``)."""
    path = Path(path_or_name)
    if path.exists():
        text = path.read_text()
    else:
        name = path.name if path.suffix else f"{path.name}.yaml"
        res = resources.files("freeflyer.scenarios").joinpath(name)
        if not res.is_file():
            raise ScenarioError(f"no scenario file or shipped scenario named {path_or_name!r}")
        text = res.read_text()
    data = yaml.safe_load(text) or {}
    return config_from_dict(data)


def dump_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))


def shipped_scenarios() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("freeflyer.scenarios").iterdir() if p.name.endswith(".yaml"))


def random_world(seed: int, density: float = 0.3, bounds=(-0.5, 2.5, -1.0, 1.0), start=(0.0, 0.0),
                 goal=(2.0, 0.0), inflation: float = 0.1, radius_range=(0.05, 0.15),
                 clearance: float = 0.2) -> ObstacleWorld:
    """Random circles until ~``density`` of the bounds is covered by inflated obstacles.

    Start and goal keep ``clearance`` of free space around them.
    """
    rng = np.random.default_rng(seed)
    xmin, xmax, ymin, ymax = bounds
    gx, gy = np.meshgrid(np.linspace(xmin, xmax, 151), np.linspace(ymin, ymax, 101))
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    covered = np.zeros(len(grid), dtype=bool)
    obs = []
    while covered.mean() < density:
        r = rng.uniform(*radius_range)
        c = rng.uniform((xmin, ymin), (xmax, ymax))
        if min(math.dist(c, start), math.dist(c, goal)) < r + inflation + clearance:
            continue
        obs.append([c[0], c[1], r])
        covered |= np.hypot(*(grid - c).T) < r + inflation
    return ObstacleWorld(tuple(bounds), np.array(obs), inflation)


def coverage(world: ObstacleWorld, resolution: int = 200) -> float:
    """Fraction of the bounds covered by inflated obstacles (grid estimate)."""
    xmin, xmax, ymin, ymax = world.bounds
    gx, gy = np.meshgrid(np.linspace(xmin, xmax, resolution), np.linspace(ymin, ymax, resolution))
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return float(1.0 - world.points_free(pts).mean())

"""Scenario configuration: schema, YAML loading, built-in presets and initial states.

A scenario file is a YAML mapping validated against :class:`ScenarioConfig`;
unknown keys are rejected.  Target positions may be given in cylindrical form
``[radius_m, angle_deg, z_m]`` (as tabulated for the reference scenarios) or as
Cartesian ``[x, y, z]`` metres.
"""

from __future__ import annotations

import copy
import math
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .allocation import AllocationSettings
from .controller import BaselineGains, ControlGains, TargetSet
from .environment import EnvironmentOptions, OrbitReference, SatelliteConfig, SystemState
from .errors import ConfigError

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SatelliteSpec(_Strict):
    mass: float = Field(200.0, gt=0.0, description="kg")
    inertia: list[float] = Field(default_factory=lambda: [107.0, 107.0, 134.0], description="kg m^2, principal")
    coil_radius: float = Field(1.0, gt=0.0, description="m")
    mu_max: Optional[float] = Field(None, gt=0.0, description="A m^2")
    rw_h_max: Optional[float] = Field(None, gt=0.0, description="N m s")

    @field_validator("inertia")
    @classmethod
    def _inertia(cls, v):
        if len(v) != 3 or min(v) <= 0.0:
            raise ValueError("inertia must list three positive principal moments")
        return v


class OrbitSpec(_Strict):
    altitude_m: float = Field(700e3, gt=0.0)
    inclination_deg: float = 0.0
    phase_deg: float = 0.0


class TargetSpec(_Strict):
    positions_cyl: Optional[list[list[float]]] = None
    positions: Optional[list[list[float]]] = None
    sigma: Optional[list[list[float]]] = None
    L_d: list[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])

    @model_validator(mode="after")
    def _one_form(self):
        if (self.positions_cyl is None) == (self.positions is None):
            raise ValueError("give exactly one of targets.positions_cyl or targets.positions")
        rows = self.positions_cyl if self.positions is None else self.positions
        if any(len(r) != 3 for r in rows):
            raise ValueError("each target position needs three components")
        return self

    def cartesian(self):
        if self.positions is not None:
            return np.asarray(self.positions, dtype=float)
        out = []
        for rad, ang, z in self.positions_cyl:
            a = math.radians(ang)
            out.append([rad * math.cos(a), rad * math.sin(a), z])
        return np.asarray(out)


class InitialSpec(_Strict):
    kind: Literal["at_targets", "random", "explicit"] = "at_targets"
    position_spread_m: float = Field(2.0, ge=0.0)
    mrp_max: float = Field(0.5, ge=0.0, le=1.0)
    velocity_spread_mps: float = Field(0.0, ge=0.0, description="random kind: uniform +- per axis")
    rate_spread_radps: float = Field(0.0, ge=0.0, description="random kind: uniform +- per axis")
    positions: Optional[list[list[float]]] = None
    sigma: Optional[list[list[float]]] = None


class GainSpec(_Strict):
    k1: float = Field(250.0, gt=0.0)
    k2_motion: float = Field(1250.0, gt=0.0)
    k2_wheel: float = Field(0.005, gt=0.0)


class BaselineSpec(_Strict):
    lambda_p1: float = Field(0.0125, gt=0.0)
    lambda_p2: float = Field(0.0125, gt=0.0)
    lambda_a1: float = Field(10.0, gt=0.0)
    lambda_a2: float = Field(15.0, gt=0.0)


class AllocationSpec(_Strict):
    mode: Literal["ac_optimal", "ac_feasible", "dc"] = "ac_optimal"
    tol_constraint: float = Field(1e-8, gt=0.0)
    tol_gradient: float = Field(1e-6, gt=0.0)
    max_outer: int = Field(50, ge=1)
    max_inner: int = Field(30, ge=1)
    restarts: int = Field(8, ge=0)


class DisturbanceSpec(_Strict):
    tidal: bool = True
    gravity_gradient: bool = True
    geomagnetic: bool = False


class UnloadingSpec(_Strict):
    enabled: bool = False
    k_dc: float = Field(0.02, gt=0.0)
    chief: int = Field(5, ge=1, description="1-based satellite index")


class LimitSpec(_Strict):
    force_N: Optional[float] = Field(None, gt=0.0)
    torque_Nm: Optional[float] = Field(None, gt=0.0)


class SimSpec(_Strict):
    dt: float = Field(0.1, gt=0.0, description="control step, s")
    duration_s: Optional[float] = Field(None, gt=0.0)
    duration_orbits: Optional[float] = Field(1.0, gt=0.0)
    mode: Literal["averaged", "instantaneous"] = "averaged"
    telemetry_every: int = Field(10, ge=1)
    feedforward: Literal["midpoint", "sample"] = Field(
        "midpoint", description="time at which the held disturbance feedforward is evaluated"
    )

    @model_validator(mode="after")
    def _duration(self):
        if self.duration_s is not None:
            self.duration_orbits = None
        return self


class ScenarioConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    name: str = "scenario"
    description: str = ""
    n: int = Field(..., ge=2, description="number of satellites")
    m: int = Field(..., ge=1, description="wheel-equipped satellites are 1..m")
    satellite: SatelliteSpec = Field(default_factory=SatelliteSpec)
    orbit: OrbitSpec = Field(default_factory=OrbitSpec)
    targets: TargetSpec
    initial: InitialSpec = Field(default_factory=InitialSpec)
    controller: Literal["proposed", "conventional"] = "proposed"
    gains: GainSpec = Field(default_factory=GainSpec)
    baseline: BaselineSpec = Field(default_factory=BaselineSpec)
    allocation: AllocationSpec = Field(default_factory=AllocationSpec)
    omega_f: float = Field(4.0 * math.pi, gt=0.0, description="AC angular frequency, rad/s")
    disturbances: DisturbanceSpec = Field(default_factory=DisturbanceSpec)
    unloading: UnloadingSpec = Field(default_factory=UnloadingSpec)
    limits: LimitSpec = Field(default_factory=LimitSpec)
    sim: SimSpec = Field(default_factory=SimSpec)
    seed: int = 0

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}; this build reads {SCHEMA_VERSION}")
        return v

    @model_validator(mode="after")
    def _consistency(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 1 <= self.m <= self.n:
            raise ValueError(f"m must satisfy 1 <= m <= n (got m={self.m}, n={self.n})")
        rows = self.targets.cartesian()
        if rows.shape != (self.n, 3):
            raise ValueError(f"targets must list {self.n} positions, got {rows.shape[0]}")
        if self.controller == "conventional":
            if self.m != self.n:
                raise ValueError("the conventional baseline needs wheels on every satellite (m = n)")
            if self.unloading.enabled:
                raise ValueError("unloading is only supported with the proposed controller")
            if self.allocation.mode != "dc":
                raise ValueError("the conventional baseline uses allocation.mode = dc")
        elif self.allocation.mode == "dc":
            raise ValueError("the proposed controller needs an AC allocation mode")
        if self.unloading.enabled:
            if not self.disturbances.geomagnetic:
                raise ValueError("unloading requires disturbances.geomagnetic = true")
            if not 1 <= self.unloading.chief <= self.m:
                raise ValueError("unloading.chief must be a wheel-equipped satellite (1..m)")
        for name in ("positions", "sigma"):
            v = getattr(self.initial, name)
            if v is not None and np.shape(v) != (self.n, 3):
                raise ValueError(f"initial.{name} must be {self.n} x 3")
        if self.initial.kind == "explicit" and self.initial.positions is None:
            raise ValueError("initial.kind = explicit needs initial.positions")
        # instantaneous mode is substepped by the executive, so any control dt is accepted
        return self

    # -- derived objects --------------------------------------------------------------------------

    def satellite_configs(self):
        s = self.satellite
        return [
            SatelliteConfig(s.mass, np.asarray(s.inertia), j < self.m, s.coil_radius, s.mu_max, s.rw_h_max)
            for j in range(self.n)
        ]

    def orbit_reference(self):
        return OrbitReference.from_altitude(
            self.orbit.altitude_m,
            phase=math.radians(self.orbit.phase_deg),
            inclination=math.radians(self.orbit.inclination_deg),
        )

    def target_set(self):
        sig = np.zeros((self.n, 3)) if self.targets.sigma is None else np.asarray(self.targets.sigma)
        return TargetSet.from_positions(self.targets.cartesian(), sig, np.asarray(self.targets.L_d))

    def control_gains(self):
        g = self.gains
        return ControlGains.default(self.n, self.m, g.k1, g.k2_motion, g.k2_wheel)

    def baseline_gains(self):
        return BaselineGains(**self.baseline.model_dump())

    def allocation_settings(self):
        return AllocationSettings(**self.allocation.model_dump(), seed=self.seed)

    def environment_options(self):
        d = self.disturbances
        return EnvironmentOptions(tidal=d.tidal, gravity_gradient=d.gravity_gradient, geomagnetic=d.geomagnetic)

    def duration(self):
        if self.sim.duration_s is not None:
            return self.sim.duration_s
        return self.sim.duration_orbits * self.orbit_reference().period

    def initial_state(self):
        """Initial state; random draws use ``seed``; positions re-centred on the mass centre."""
        orbit = self.orbit_reference()
        configs = self.satellite_configs()
        mass = np.array([c.mass for c in configs])
        targets = self.target_set().all_positions(configs)
        ini = self.initial
        rng = np.random.default_rng(self.seed)
        if ini.kind == "explicit":
            pos = np.asarray(ini.positions, dtype=float)
        elif ini.kind == "random":
            pos = targets + rng.uniform(-ini.position_spread_m, ini.position_spread_m, targets.shape)
        else:
            pos = targets.copy()
        pos = pos - (mass[:, None] * pos).sum(0) / mass.sum()
        state = SystemState.at_rest(pos, orbit)
        if ini.sigma is not None:
            state.sigma = np.asarray(ini.sigma, dtype=float)
        elif ini.kind == "random":
            state.sigma = _random_mrps(rng, self.n, ini.mrp_max)
        if ini.kind == "random" and ini.velocity_spread_mps > 0.0:
            v = rng.uniform(-ini.velocity_spread_mps, ini.velocity_spread_mps, (self.n, 3))
            state.v = v - (mass[:, None] * v).sum(0) / mass.sum()
        if ini.kind == "random" and ini.rate_spread_radps > 0.0:
            state.omega = rng.uniform(-ini.rate_spread_radps, ini.rate_spread_radps, (self.n, 3))
        return state


def _random_mrps(rng, n, radius):
    """Uniform samples in the MRP ball of the given radius."""
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    rad = radius * rng.uniform(0.0, 1.0, n) ** (1.0 / 3.0)
    return d * rad[:, None]


# -- presets --------------------------------------------------------------------------------------

_TABLE_COL1 = [[10.0, 105.0, -2.0], [10.0, 165.0, 2.0], [10.0, 285.0, -2.0], [10.0, -15.0, 2.0], [0.0, 0.0, 0.0]]
_TABLE_COL2 = [[10.0, 105.0, -2.0], [10.0, 165.0, -2.0], [10.0, 285.0, 2.0], [10.0, -15.0, 2.0], [0.0, 0.0, 0.0]]

PRESETS = {
    "maintenance_5sat": {
        "name": "maintenance_5sat",
        "description": "Five-satellite formation maintenance, wheels on all satellites, gravity gradient on",
        "n": 5,
        "m": 5,
        "targets": {"positions_cyl": _TABLE_COL1},
        "omega_f": 4.0 * math.pi,
        "disturbances": {"tidal": True, "gravity_gradient": True, "geomagnetic": False},
    },
    "reconfig_5sat_3rw": {
        "name": "reconfig_5sat_3rw",
        "description": "Reconfiguration from random initial states, wheels on satellites 1-3 only",
        "n": 5,
        "m": 3,
        "targets": {"positions_cyl": _TABLE_COL1},
        "initial": {"kind": "random", "position_spread_m": 2.0, "mrp_max": 0.5},
        "omega_f": 16.0 * math.pi,
        "disturbances": {"tidal": True, "gravity_gradient": True, "geomagnetic": True},
    },
    "unloading_5sat_mtq": {
        "name": "unloading_5sat_mtq",
        "description": "Maintenance with asymmetric targets and magnetorquer unloading on satellite 5",
        "n": 5,
        "m": 5,
        "targets": {"positions_cyl": _TABLE_COL2},
        "omega_f": 16.0 * math.pi,
        "disturbances": {"tidal": True, "gravity_gradient": True, "geomagnetic": True},
        "unloading": {"enabled": True, "k_dc": 0.02, "chief": 5},
    },
}


def preset_names():
    return list(PRESETS)


def preset_dict(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return copy.deepcopy(PRESETS[name])


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _format_validation(err):
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def config_from_dict(data, overrides=None):
    """Validate a mapping (optionally with ``preset:`` and overrides) into a config."""
    if not isinstance(data, dict):
        raise ConfigError("scenario file must contain a mapping at the top level")
    data = dict(data)
    if "preset" in data:
        base = preset_dict(data.pop("preset"))
        data = _merge(base, data)
    if overrides:
        data = _merge(data, overrides)
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid scenario: {_format_validation(exc)}") from exc


def load_config(path_or_preset, overrides=None):
    """Load a YAML scenario file, or a built-in preset by name."""
    if isinstance(path_or_preset, str) and path_or_preset in PRESETS:
        return config_from_dict(preset_dict(path_or_preset), overrides)
    path = Path(path_or_preset)
    if not path.exists():
        raise ConfigError(f"no such scenario file or preset: {path_or_preset}")
    text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        raise ConfigError(f"could not parse {path}{where}: {getattr(exc, 'problem', exc)}") from exc
    return config_from_dict(data, overrides)


def dump_config(cfg):
    """Canonical YAML text of a validated config."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)

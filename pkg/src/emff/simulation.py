"""Closed-loop executive: controller -> dipole allocation -> propagation -> telemetry."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import allocation as alloc
from . import controller as ctl
from . import environment as env
from . import magnetics as mag
from .errors import EmffError, ScenarioError
from .kinematics import build_workspace, reduced_states
from .telemetry import TelemetryFrame


@dataclass
class RunResult:
    config: object
    frames: list
    summary: dict
    wall_time_s: float = 0.0
    error: str | None = None
    failed_step: int | None = None


@dataclass
class _Interval:
    """Statistics accumulated over the steps between two telemetry frames."""

    residual: float = 0.0
    iterations: int = 0
    restarts: int = 0
    neutrality: float = 0.0
    energy: float = 0.0
    saturated: bool = False

    def reset(self):
        self.__init__()


@dataclass
class _StepOutput:
    drive: env.DipoleDrive
    rw_torques: np.ndarray
    cmd_norms: tuple
    V: float
    neutrality: float
    solution: alloc.AllocationSolution
    saturated: bool
    extra: dict = field(default_factory=dict)


def chief_unloading_dc(state, configs, chief, k_dc):
    """MTQ dipole of the chief satellite (I frame) from its wheel momentum and the local field."""
    orbit = state.orbit
    b_i = env.geomagnetic_field(orbit.position(state.t), orbit.geomagnetic_axis())
    c = state.dcms()[chief]
    mu_b = ctl.mtq_unloading_dipole(state.h[chief], c.T @ b_i, k_dc)
    dc = np.zeros((state.n, 3))
    dc[chief] = c @ mu_b
    return dc


class Executive:
    """Holds per-run context and warm-start state; advances one control step at a time."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.configs = cfg.satellite_configs()
        self.targets = cfg.target_set()
        self.options = cfg.environment_options()
        self.settings = cfg.allocation_settings()
        self.d_min = env.far_field_floor(self.configs)
        self.mode = cfg.sim.mode
        self.n = cfg.n
        self.m = cfg.m
        self.gains = cfg.control_gains()
        self.gains.check_dims(self.n, self.m)
        self.baseline = cfg.baseline_gains()
        lim = cfg.limits
        self.limits = None
        if lim.force_N is not None or lim.torque_Nm is not None:
            self.limits = {"force": lim.force_N, "torque": lim.torque_Nm}
        self.mu_max = cfg.satellite.mu_max
        self.warm = None
        self.warm_lam = None
        # the command is held over [t, t + dt]; evaluating the orbit-driven
        # disturbances at the mid-step makes the held feedforward match their
        # step average to second order
        self.ff_lead = 0.5 * cfg.sim.dt if cfg.sim.feedforward == "midpoint" else 0.0

    # -- proposed controller --------------------------------------------------------------------

    def _dc_drive(self, state):
        if not self.cfg.unloading.enabled:
            return None
        return chief_unloading_dc(state, self.configs, self.cfg.unloading.chief - 1, self.cfg.unloading.k_dc)

    def _ff_state(self, state):
        return replace(state, t=state.t + self.ff_lead) if self.ff_lead else state

    def control_proposed(self, state, step):
        c = state.dcms()
        dc = self._dc_drive(state)
        ext_drive = env.DipoleDrive(None, dc)
        ff = self._ff_state(state)
        tau_ext = env.external_body_torques(ff, self.configs, ext_drive, self.options, env.AVERAGED, c_ib=c)
        forces = ctl.gravity_forces(ff, self.configs) if self.options.tidal else np.zeros((self.n, 3))
        ws = build_workspace(state, self.configs)
        rs = reduced_states(state, self.configs)
        u_d, _ = ctl.assemble_disturbance(state, self.configs, tau_ext, forces, c_ib=c)
        cmd = ctl.kinematics_control(ws, rs.q_s, rs.v, self.targets, self.gains, u_d, self.limits)
        u_c = cmd.flat()
        neutral = float(np.linalg.norm(ws.R @ u_c) / max(np.linalg.norm(ws.R) * np.linalg.norm(u_c), 1e-300))
        V = ctl.lyapunov(ws, rs.q_s, rs.v, self.targets, self.gains)
        tau_i = cmd.torques_inertial(c)
        problem = alloc.AllocationProblem(
            state.r, cmd.f_c, tau_i[1:] if cmd.saturated else tau_i,
            omega_f=self.cfg.omega_f, d_min=self.d_min, mu_max=self.mu_max,
            warm_start=self.warm, warm_multipliers=self.warm_lam,
        )
        sol = alloc.solve_ac_allocation(problem, self.settings, step_index=step)
        self.warm, self.warm_lam = sol.dipoles, sol.multipliers
        drive = env.DipoleDrive(sol.dipoles, dc)
        norms = (
            float(np.linalg.norm(cmd.f_c, axis=1).max()),
            float(np.linalg.norm(cmd.tau_c, axis=1).max()),
            float(np.linalg.norm(cmd.h_dot, axis=1).max()),
        )
        return _StepOutput(drive, cmd.rw_torques(self.n), norms, V, neutral, sol, cmd.saturated or sol.saturated)

    # -- conventional baseline ------------------------------------------------------------------

    def control_conventional(self, state, step):
        f_all = ctl.conventional_forces(self._ff_state(state), self.configs, self.targets, self.baseline)
        sol = alloc.solve_dc_allocation(
            state.r, f_all[1:], self.settings, warm_start=self.warm,
            warm_multipliers=self.warm_lam, d_min=self.d_min, step_index=step,
        )
        self.warm, self.warm_lam = sol.dc_dipoles, sol.multipliers
        c = state.dcms()
        tau_body = np.einsum("jba,jb->ja", c, sol.achieved_torque)
        rw = ctl.conventional_rw_torques(state, self.configs, tau_body, self.baseline)
        drive = env.DipoleDrive(None, sol.dc_dipoles)
        norms = (
            float(np.linalg.norm(f_all, axis=1).max()),
            float(np.linalg.norm(tau_body, axis=1).max()),
            float(np.linalg.norm(rw, axis=1).max()),
        )
        return _StepOutput(drive, rw, norms, float("nan"), float("nan"), sol, sol.saturated)

    def control(self, state, step):
        if self.cfg.controller == "conventional":
            return self.control_conventional(state, step)
        return self.control_proposed(state, step)

    # -- propagation -----------------------------------------------------------------------------

    def advance(self, state, out, dt):
        if self.mode == env.INSTANTANEOUS and out.drive.ac is not None:
            limit = (2.0 * math.pi / out.drive.ac.omega_f) / 20.0
            nsub = max(1, math.ceil(dt / limit - 1e-9))
        else:
            nsub = 1
        h = dt / nsub
        for _ in range(nsub):
            state = env.propagate(state, self.configs, out.drive, out.rw_torques, h, self.mode, self.options)
        return state


def _dipole_energy_rate(drive, n):
    """Time-mean of sum_j |mu_j(t)|^2 for the held drive."""
    e = 0.0
    if drive.ac is not None:
        e += 0.5 * float((drive.ac.mu_sin**2).sum() + (drive.ac.mu_cos**2).sum())
    if drive.dc is not None:
        e += float((np.asarray(drive.dc) ** 2).sum())
    return e


def _frame(state, configs, out, acc, n):
    drive = out.drive
    zeros = np.zeros((n, 3))
    return TelemetryFrame(
        t=float(state.t),
        r=state.r.copy(), v=state.v.copy(), sigma=state.sigma.copy(), omega=state.omega.copy(), h=state.h.copy(),
        L=env.angular_momentum(state, configs, about_first=True),
        mu_sin=drive.ac.mu_sin.copy() if drive.ac is not None else zeros,
        mu_cos=drive.ac.mu_cos.copy() if drive.ac is not None else zeros,
        mu_dc=np.asarray(drive.dc, dtype=float).copy() if drive.dc is not None else zeros,
        f_cmd_max=out.cmd_norms[0], tau_cmd_max=out.cmd_norms[1], hdot_cmd_max=out.cmd_norms[2],
        alloc_residual=acc.residual, alloc_iterations=acc.iterations, alloc_restarts=acc.restarts,
        lyapunov_V=out.V,
        momentum_neutrality=acc.neutrality if math.isfinite(out.neutrality) else float("nan"),
        linear_momentum=float(np.linalg.norm(env.linear_momentum(state, configs))),
        dipole_energy_interval=acc.energy, saturated=int(acc.saturated),
    )


def run_scenario(cfg, progress=None, telemetry_every=None):
    """Execute a scenario and return a :class:`RunResult`.

    On a module error a :class:`ScenarioError` is raised naming the step; its
    ``partial`` attribute carries the result with the frames recorded so far.
    """
    t0 = time.perf_counter()
    ex = Executive(cfg)
    state = cfg.initial_state()
    dt = cfg.sim.dt
    steps = int(round(cfg.duration() / dt))
    every = telemetry_every or cfg.sim.telemetry_every
    frames = []
    acc = _Interval()
    k = 0
    try:
        for k in range(steps + 1):
            out = ex.control(state, k)
            acc.residual = max(acc.residual, out.solution.residual)
            acc.iterations += out.solution.iterations
            acc.restarts += out.solution.restarts_used
            if math.isfinite(out.neutrality):
                acc.neutrality = max(acc.neutrality, out.neutrality)
            acc.saturated = acc.saturated or out.saturated
            if k % every == 0 or k == steps:
                frames.append(_frame(state, ex.configs, out, acc, cfg.n))
                acc.reset()
            if k == steps:
                break
            acc.energy += _dipole_energy_rate(out.drive, cfg.n) * dt
            state = ex.advance(state, out, dt)
            state.t = (k + 1) * dt  # avoid accumulated round-off in the clock
            if progress is not None and k % 1000 == 0:
                progress(k, steps)
    except EmffError as exc:
        result = RunResult(cfg, frames, summarize(frames, cfg), time.perf_counter() - t0, str(exc), k)
        err = ScenarioError(f"scenario failed at step {k} (t={k * dt:.3f} s): {exc}", step=k, cause=exc)
        err.partial = result
        raise err from exc
    return RunResult(cfg, frames, summarize(frames, cfg), time.perf_counter() - t0)


def state_from_frame(frame, cfg):
    """Rebuild the truth state recorded in a telemetry frame."""
    return env.SystemState(
        frame.r.copy(), frame.v.copy(), frame.sigma.copy(), frame.omega.copy(), frame.h.copy(),
        float(frame.t), cfg.orbit_reference(),
    )


# -- post-hoc metrics ----------------------------------------------------------------------------


def nonuniformity(frame, m):
    """``max_j |h_j - C_BjI L / m|`` over wheel satellites, from a frame."""
    from .mathkit import mrp_to_dcm_stack

    c = mrp_to_dcm_stack(frame.sigma[:m])
    share = np.einsum("jba,b->ja", c, frame.L) / m
    return float(np.linalg.norm(frame.h[:m] - share, axis=1).max())


def summarize(frames, cfg):
    """Summary metrics computed from telemetry frames only."""
    if not frames:
        return {"frames": 0}
    configs = cfg.satellite_configs()
    targets = cfg.target_set()
    r_d = targets.all_positions(configs)
    last = frames[-1]
    m = cfg.m
    pos_err = np.linalg.norm(last.r - r_d, axis=1)
    att_err = np.linalg.norm(last.sigma - targets.sigma_d, axis=1)
    l_norms = np.array([np.linalg.norm(f.L) for f in frames])
    nonu = [nonuniformity(f, m) for f in frames]
    neut = [f.momentum_neutrality for f in frames if math.isfinite(f.momentum_neutrality)]
    l_final = float(l_norms[-1])
    return {
        "pos_rms_m": float(np.sqrt(np.mean(pos_err**2))),
        "att_rms_mrp": float(np.sqrt(np.mean(att_err**2))),
        "rw_nonuniformity_Nms": nonu[-1],
        "L_norm_max_Nms": float(l_norms.max()),
        "dipole_energy_proxy": float(sum(f.dipole_energy_interval for f in frames)),
        "alloc_max_residual": float(max(f.alloc_residual for f in frames)),
        "rw_nonuniformity_max_Nms": float(max(nonu)),
        "rw_nonuniformity_ref_Nms": float(max(l_final / m, 1e-3)),
        "L_norm_final_Nms": l_final,
        "momentum_neutrality_max": float(max(neut)) if neut else float("nan"),
        "alloc_restarts_total": int(sum(f.alloc_restarts for f in frames)),
        "saturation_frames": int(sum(f.saturated for f in frames)),
        "t_final_s": float(last.t),
        "frames": len(frames),
        "controller": cfg.controller,
        "scenario": cfg.name,
        "seed": cfg.seed,
    }

"""Formation controllers: the momentum-neutral kinematics law and a conventional baseline.

The kinematics law works on the reduced system ``M_bar v_dot + C_bar v =
B_bar u_c + S^T u_d`` and returns ``u_c = [f_c (sats 2..n, I), tau_c (all n,
body), h_dot (sats 1..m, body)]``.  Because ``u_c`` is built through
``B_bar_rinv`` it never changes the formation's total angular momentum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .environment import angular_momentum, masses, tidal_accels
from .kinematics import dims, moment_arm_matrix, rw_count, t1_matrix, xi_targets
from .mathkit import cross3, mrp_to_dcm_stack


def _check_spd(name, k):
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if not np.allclose(k, k.T, rtol=1e-12, atol=0.0):
        raise ValueError(f"{name} must be symmetric")
    if k.size and np.linalg.eigvalsh(k).min() <= 0.0:
        raise ValueError(f"{name} must be positive definite")
    return k


@dataclass(frozen=True)
class ControlGains:
    K1: np.ndarray
    K2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K1", _check_spd("K1", self.K1))
        object.__setattr__(self, "K2", _check_spd("K2", self.K2))

    @classmethod
    def default(cls, n, m, k1=250.0, k2_motion=1250.0, k2_wheel=0.005):
        """Diagonal gains: ``K1 = k1 E``, ``K2 = diag(k2_motion E_{6n-3}, k2_wheel E_{3m-3})``."""
        _, nv = dims(n, m)
        k2 = np.full(nv, k2_motion)
        k2[6 * n - 3 :] = k2_wheel
        return cls(k1 * np.eye(6 * n - 3), np.diag(k2))

    def check_dims(self, n, m):
        _, nv = dims(n, m)
        if self.K1.shape != (6 * n - 3,) * 2 or self.K2.shape != (nv, nv):
            raise ValueError(
                f"gain shapes {self.K1.shape}, {self.K2.shape} do not match n={n}, m={m}"
            )


@dataclass(frozen=True)
class TargetSet:
    """Stationary targets: positions of satellites 2..n (I), attitudes of all n."""

    r_d: np.ndarray
    sigma_d: np.ndarray
    L_d: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_d: np.ndarray | None = None

    def __post_init__(self):
        r = np.asarray(self.r_d, dtype=float).reshape(-1, 3)
        s = np.asarray(self.sigma_d, dtype=float).reshape(-1, 3)
        if s.shape[0] != r.shape[0] + 1:
            raise ValueError("sigma_d needs one row per satellite and r_d one per satellite 2..n")
        if np.any(np.einsum("ij,ij->i", s, s) > 1.0):
            raise ValueError("target MRPs must satisfy |sigma| <= 1")
        object.__setattr__(self, "r_d", r)
        object.__setattr__(self, "sigma_d", s)
        object.__setattr__(self, "L_d", np.asarray(self.L_d, dtype=float).reshape(3))

    @property
    def n(self):
        return self.sigma_d.shape[0]

    @classmethod
    def from_positions(cls, positions, sigma_d=None, L_d=None):
        """Build from target positions of all n satellites (satellite 1 dropped)."""
        p = np.asarray(positions, dtype=float).reshape(-1, 3)
        s = np.zeros_like(p) if sigma_d is None else sigma_d
        return cls(p[1:], s, np.zeros(3) if L_d is None else L_d)

    def all_positions(self, configs):
        """Targets for all satellites; satellite 1 placed so the mass centre is at the origin."""
        m = masses(configs)
        r1 = -(m[1:, None] * self.r_d).sum(0) / m[0]
        return np.vstack([r1, self.r_d])

    def q_sd(self):
        return np.concatenate([self.r_d.ravel(), self.sigma_d.ravel()])

    def v_target(self, m):
        if self.v_d is not None:
            return np.asarray(self.v_d, dtype=float)
        n = self.n
        _, nv = dims(n, m)
        out = np.zeros(nv)
        out[6 * n - 3 :] = xi_targets(self.sigma_d, m, self.L_d)[: m - 1].ravel()
        return out


@dataclass(frozen=True)
class ControlCommand:
    f_c: np.ndarray  # (n-1, 3) N, I frame, satellites 2..n
    tau_c: np.ndarray  # (n, 3) N m, body frames
    h_dot: np.ndarray  # (m, 3) N m / s, body frames
    saturated: bool = False

    def flat(self):
        return np.concatenate([self.f_c.ravel(), self.tau_c.ravel(), self.h_dot.ravel()])

    @classmethod
    def from_flat(cls, u, n, m, saturated=False):
        u = np.asarray(u, dtype=float)
        nz, _ = dims(n, m)
        if u.size != nz:
            raise ValueError(f"command length {u.size} != {nz}")
        return cls(
            u[: 3 * n - 3].reshape(n - 1, 3),
            u[3 * n - 3 : 6 * n - 3].reshape(n, 3),
            u[6 * n - 3 :].reshape(m, 3),
            saturated,
        )

    def forces_all(self):
        """Forces on all n satellites; satellite 1 takes the reaction."""
        return np.vstack([-self.f_c.sum(0), self.f_c])

    def torques_inertial(self, c_ib):
        return np.einsum("jab,jb->ja", c_ib, self.tau_c)

    def rw_torques(self, n):
        out = np.zeros((n, 3))
        out[: self.h_dot.shape[0]] = self.h_dot
        return out


def gravity_forces(state, configs):
    """Tidal (gravity-difference) forces on every satellite, I frame."""
    return masses(configs)[:, None] * tidal_accels(state.r, state.orbit, state.t)


def assemble_disturbance(state, configs, external_torques, external_forces=None, c_ib=None):
    """Disturbance vector ``u_d = [f_g (2..n); tau_d (body); -(1/m) bL_dot]``.

    ``external_forces`` default to the tidal forces.  Returns ``(u_d, L_dot)``
    with ``L_dot`` the I-frame rate of total angular momentum they cause.
    """
    n = state.n
    m = rw_count(configs)
    c = state.dcms() if c_ib is None else c_ib
    if external_forces is None:
        external_forces = gravity_forces(state, configs)
    f = np.asarray(external_forces, dtype=float).reshape(n, 3)
    tau = np.asarray(external_torques, dtype=float).reshape(n, 3)
    nz, _ = dims(n, m)
    u = np.zeros(nz)
    u[: 3 * n - 3] = f[1:].ravel()
    u[3 * n - 3 : 6 * n - 3] = tau.ravel()
    l_dot = moment_arm_matrix(state, configs, m, c) @ u
    big_l = angular_momentum(state, configs, about_first=True)
    w_i = np.einsum("jab,jb->ja", c[:m], state.omega[:m])
    rel = l_dot[None, :] - cross3(w_i, big_l)
    u[6 * n - 3 :] = -(np.einsum("jba,jb->ja", c[:m], rel) / m).ravel()
    return u, l_dot


def shadow_consistent(sigma, sigma_d):
    """Per satellite, the MRP set (original or shadow) closest to the target."""
    s = np.array(sigma, dtype=float)
    s2 = np.einsum("ij,ij->i", s, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        shadow = -s / s2[:, None]
    use = (s2 > 0.0) & (
        np.linalg.norm(shadow - sigma_d, axis=1) < np.linalg.norm(s - sigma_d, axis=1)
    )
    s[use] = shadow[use]
    return s, bool(use.any())


def tracking_errors(ws, q_s, v, targets):
    n, m = ws.n, ws.m
    sig = q_s[3 * n - 3 :].reshape(n, 3)
    sig, switched = shadow_consistent(sig, targets.sigma_d)
    q = np.concatenate([q_s[: 3 * n - 3], sig.ravel()])
    t1 = t1_matrix(sig, m) if switched else ws.T1
    return q - targets.q_sd(), np.asarray(v) - targets.v_target(m), t1


def lyapunov(ws, q_s, v, targets, gains):
    """``V = 0.5 (v - v_d)^T M_bar (v - v_d) + 0.5 e^T K1 e``."""
    e, ev, _ = tracking_errors(ws, q_s, v, targets)
    return 0.5 * ev @ ws.M_bar @ ev + 0.5 * e @ gains.K1 @ e


def lyapunov_rate(ws, v, targets, gains):
    """Ideal closed-loop ``V_dot = -(v - v_d)^T K2 (v - v_d)``."""
    ev = np.asarray(v) - targets.v_target(ws.m)
    return -ev @ gains.K2 @ ev


def kinematics_control(ws, q_s, v, targets, gains, u_d, limits=None):
    """Momentum-neutral feedback ``u_c = B_bar_rinv (-T1^T K1 e - K2 (v - v_d) - S^T u_d)``.

    ``limits`` optionally maps ``"force"``/``"torque"`` to per-satellite norm
    limits; clipped commands set ``saturated`` on the result.
    """
    e, ev, t1 = tracking_errors(ws, q_s, v, targets)
    rhs = -t1.T @ (gains.K1 @ e) - gains.K2 @ ev - ws.S.T @ u_d
    u = ws.B_bar_rinv @ rhs
    cmd = ControlCommand.from_flat(u, ws.n, ws.m)
    if limits:
        cmd = saturate(cmd, limits.get("force"), limits.get("torque"))
    return cmd


def _clip_rows(a, limit):
    norms = np.linalg.norm(a, axis=1)
    over = norms > limit
    if not over.any():
        return a, False
    out = a.copy()
    out[over] *= (limit / norms[over])[:, None]
    return out, True


def saturate(cmd, force_limit=None, torque_limit=None):
    f, fs = (cmd.f_c, False) if force_limit is None else _clip_rows(cmd.f_c, force_limit)
    t, ts = (cmd.tau_c, False) if torque_limit is None else _clip_rows(cmd.tau_c, torque_limit)
    return ControlCommand(f, t, cmd.h_dot, cmd.saturated or fs or ts)


# -- conventional baseline ------------------------------------------------------------------------


@dataclass(frozen=True)
class BaselineGains:
    lambda_p1: float = 0.0125
    lambda_p2: float = 0.0125
    lambda_a1: float = 10.0
    lambda_a2: float = 15.0


def conventional_forces(state, configs, targets, gains=BaselineGains()):
    """Per-satellite sliding-mode position forces (I frame) with tidal feedforward.

    The raw per-satellite forces are projected onto ``sum f = 0`` (mass
    weighted) since internal EM forces cannot move the mass centre.
    """
    m = masses(configs)
    r_d = targets.all_positions(configs)
    e = r_d - state.r
    e_dot = -state.v
    lp1, lp2 = gains.lambda_p1, gains.lambda_p2
    f = -gravity_forces(state, configs) + m[:, None] * ((lp1 + lp2) * e_dot + lp1 * lp2 * e)
    return f - m[:, None] * (f.sum(0) / m.sum())


def conventional_rw_torques(state, configs, em_torque_body, gains=BaselineGains()):
    """Wheel rates that absorb the uncontrolled EM torque and regulate attitude."""
    if not all(c.has_rw for c in configs):
        raise ValueError("the conventional baseline requires wheels on every satellite")
    jw = np.einsum("jab,jb->ja", np.stack([c.inertia for c in configs]), state.omega)
    return (
        np.asarray(em_torque_body, dtype=float)
        - cross3(state.omega, jw + state.h)
        + gains.lambda_a1 * state.sigma
        + gains.lambda_a2 * state.omega
    )


def conventional_control(state, configs, targets, gains=BaselineGains(), em_torque_body=None):
    """Forces for all n satellites (I) and wheel rates (body)."""
    f = conventional_forces(state, configs, targets, gains)
    tau = np.zeros((state.n, 3)) if em_torque_body is None else em_torque_body
    return f, conventional_rw_torques(state, configs, tau, gains)


# -- momentum unloading ---------------------------------------------------------------------------


def mtq_unloading_dipole(h_chief, b_e_body, k_dc=0.02):
    """DC dipole ``k/(B.B) (h x B)`` whose torque opposes the wheel momentum (body frame)."""
    b = np.asarray(b_e_body, dtype=float)
    bb = b @ b
    if not bb > 0.0:
        raise ValueError("geomagnetic field must be non-zero for unloading")
    return (k_dc / bb) * np.cross(np.asarray(h_chief, dtype=float), b)


def rw_nonuniformity(state, configs):
    """``max_j |h_j - C_BjI L / m|`` over the wheel-equipped satellites."""
    m = rw_count(configs)
    c = mrp_to_dcm_stack(state.sigma[:m])
    big_l = angular_momentum(state, configs, about_first=True)
    share = np.einsum("jba,b->ja", c, big_l) / m
    return float(np.linalg.norm(state.h[:m] - share, axis=1).max())

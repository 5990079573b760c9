"""Angular-momentum-conserving kinematics of the formation.

State ordering used throughout (n satellites, the first m carry wheels):

* ``zeta = [v_2..v_n (I), omega_1..omega_n (body), xi_1..xi_m (body)]``,
  length ``6n + 3m - 3``;
* ``v`` is ``zeta`` without ``xi_m``, length ``6n + 3m - 6``;
* ``q_s = [r_2..r_n (I), sigma_1..sigma_n]``, length ``6n - 3``.

``xi_j = h_j - L/m`` in body components, where ``L`` is the total angular
momentum taken about satellite 1.  With this choice ``A @ zeta = 0`` holds
identically and the wheel of satellite ``m`` is the uncontrolled one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .environment import angular_momentum, masses
from .errors import IllConditioned
from .mathkit import mrp_kinematics_matrix, tilde, tilde_stack

COND_LIMIT = 1e12


def rw_count(configs):
    """Number of wheel-equipped satellites; they must be the first ``m``."""
    flags = [c.has_rw for c in configs]
    m = sum(flags)
    if m < 1:
        raise ValueError("at least one satellite must carry reaction wheels")
    if not all(flags[:m]):
        raise ValueError("wheel-equipped satellites must be ordered first (satellites 1..m)")
    return m


def dims(n, m):
    if n < 2:
        raise ValueError("need at least two satellites")
    if not 1 <= m <= n:
        raise ValueError(f"wheel count m={m} must satisfy 1 <= m <= n={n}")
    return 6 * n + 3 * m - 3, 6 * n + 3 * m - 6


def build_constraint(state, configs, m=None, c_ib=None):
    """Momentum constraint matrix ``A`` (3 x 6n+3m-3) and ``A_s`` (last block dropped)."""
    n = state.n
    m = rw_count(configs) if m is None else m
    nz, nv = dims(n, m)
    c = state.dcms() if c_ib is None else c_ib
    mass = masses(configs)
    a = np.zeros((3, nz))
    rel = state.r[1:] - state.r[0]
    a[:, : 3 * n - 3] = np.hstack(list(mass[1:, None, None] * tilde_stack(rel)))
    cj = np.einsum("jab,jbc->jac", c, np.stack([cf.inertia for cf in configs]))
    a[:, 3 * n - 3 : 6 * n - 3] = np.hstack(list(cj))
    a[:, 6 * n - 3 :] = np.hstack(list(c[:m]))
    return a, a[:, :nv]


def moment_arm_matrix(state, configs, m=None, c_ib=None):
    """``R`` with ``L_dot = R @ u`` for stacked forces/torques/wheel rates ``u``."""
    n = state.n
    m = rw_count(configs) if m is None else m
    nz, _ = dims(n, m)
    c = state.dcms() if c_ib is None else c_ib
    out = np.zeros((3, nz))
    out[:, : 3 * n - 3] = np.hstack(list(tilde_stack(state.r[1:] - state.r[0])))
    out[:, 3 * n - 3 : 6 * n - 3] = np.hstack(list(c))
    return out


def _a_s_dot(state, configs, m, c):
    n = state.n
    nz, nv = dims(n, m)
    mass = masses(configs)
    out = np.zeros((3, nv))
    dv = state.v[1:] - state.v[0]
    out[:, : 3 * n - 3] = np.hstack(list(mass[1:, None, None] * tilde_stack(dv)))
    wt = tilde_stack(state.omega)
    cw = np.einsum("jab,jbc->jac", c, wt)
    inert = np.stack([cf.inertia for cf in configs])
    out[:, 3 * n - 3 : 6 * n - 3] = np.hstack(list(np.einsum("jab,jbc->jac", cw, inert)))
    if m > 1:
        out[:, 6 * n - 3 :] = np.hstack(list(cw[: m - 1]))
    return out


def build_nullspace(a_s, state, configs, m=None, c_ib=None):
    """Null-space basis ``S = [E; -C_BmI A_s]`` and its analytic time derivative."""
    m = rw_count(configs) if m is None else m
    c = state.dcms() if c_ib is None else c_ib
    nv = a_s.shape[1]
    cm_t = c[m - 1].T
    s = np.vstack([np.eye(nv), -cm_t @ a_s])
    a_s_dot = _a_s_dot(state, configs, m, c)
    lower = tilde(state.omega[m - 1]) @ cm_t @ a_s - cm_t @ a_s_dot
    s_dot = np.vstack([np.zeros((nv, nv)), lower])
    return s, s_dot


def mass_matrix(configs, m):
    n = len(configs)
    nz, _ = dims(n, m)
    out = np.zeros((nz, nz))
    mass = masses(configs)
    for j in range(1, n):
        k = 3 * (j - 1)
        out[k : k + 3, k : k + 3] = mass[j] * np.eye(3)
    for j, cf in enumerate(configs):
        k = 3 * n - 3 + 3 * j
        out[k : k + 3, k : k + 3] = cf.inertia
    out[6 * n - 3 :, 6 * n - 3 :] = np.eye(3 * m)
    return out


def coriolis_matrix(state, configs, m):
    n = state.n
    nz, _ = dims(n, m)
    out = np.zeros((nz, nz))
    for j, cf in enumerate(configs):
        k = 3 * n - 3 + 3 * j
        out[k : k + 3, k : k + 3] = -tilde(cf.inertia @ state.omega[j] + state.h[j])
    return out


def input_matrix(n, m, inverse=False):
    """``[B]`` mapping ``u_c`` onto the rows of the averaged equations, or its inverse."""
    nz, _ = dims(n, m)
    out = np.eye(nz)
    sign = 1.0 if inverse else -1.0
    out[3 * n - 3 : 3 * n - 3 + 3 * m, 6 * n - 3 :] = sign * np.eye(3 * m)
    return out


def t1_matrix(sigma, m):
    """``T_1(sigma)`` with ``q_s_dot = T_1 v``."""
    n = sigma.shape[0]
    _, nv = dims(n, m)
    out = np.zeros((6 * n - 3, nv))
    out[: 3 * n - 3, : 3 * n - 3] = np.eye(3 * n - 3)
    for j in range(n):
        k = 3 * n - 3 + 3 * j
        out[k : k + 3, k : k + 3] = mrp_kinematics_matrix(sigma[j])
    return out


@dataclass(frozen=True)
class KinematicsWorkspace:
    n: int
    m: int
    A: np.ndarray
    A_s: np.ndarray
    S: np.ndarray
    S_dot: np.ndarray
    M: np.ndarray
    C: np.ndarray
    B: np.ndarray
    B_inv: np.ndarray
    R: np.ndarray
    T1: np.ndarray
    M_bar: np.ndarray
    C_bar: np.ndarray
    B_bar: np.ndarray
    B_bar_rinv: np.ndarray
    c_ib: np.ndarray
    cond: float


def build_reduced_dynamics(state, configs, a_s, s, s_dot, m=None, c_ib=None):
    """Projected matrices ``M_bar, C_bar, B_bar, B_bar_rinv, T1`` at ``state``."""
    n = state.n
    m = rw_count(configs) if m is None else m
    mm = mass_matrix(configs, m)
    cc = coriolis_matrix(state, configs, m)
    b = input_matrix(n, m)
    b_inv = input_matrix(n, m, inverse=True)
    m_bar = s.T @ mm @ s
    m_bar = 0.5 * (m_bar + m_bar.T)
    cond = np.linalg.cond(m_bar)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditioned(f"reduced mass matrix condition {cond:.3g} exceeds {COND_LIMIT:.0e}")
    c_bar = s.T @ (mm @ s_dot + cc @ s)
    b_bar = s.T @ b
    factor = cho_factor(m_bar)
    ms = mm @ s
    b_bar_rinv = b_inv @ cho_solve(factor, ms.T).T
    t1 = t1_matrix(state.sigma, m)
    return m_bar, c_bar, b_bar, b_bar_rinv, t1, (mm, cc, b, b_inv, cond)


def build_workspace(state, configs):
    """Evaluate every kinematics matrix at ``state``."""
    m = rw_count(configs)
    c = state.dcms()
    a, a_s = build_constraint(state, configs, m, c)
    s, s_dot = build_nullspace(a_s, state, configs, m, c)
    m_bar, c_bar, b_bar, b_bar_rinv, t1, (mm, cc, b, b_inv, cond) = build_reduced_dynamics(
        state, configs, a_s, s, s_dot, m, c
    )
    r = moment_arm_matrix(state, configs, m, c)
    return KinematicsWorkspace(
        n=state.n, m=m, A=a, A_s=a_s, S=s, S_dot=s_dot, M=mm, C=cc, B=b, B_inv=b_inv, R=r,
        T1=t1, M_bar=m_bar, C_bar=c_bar, B_bar=b_bar, B_bar_rinv=b_bar_rinv, c_ib=c, cond=cond,
    )


@dataclass(frozen=True)
class ReducedStates:
    q_s: np.ndarray
    v: np.ndarray
    zeta: np.ndarray
    xi: np.ndarray  # (m, 3) body components
    L: np.ndarray  # I components


def reduced_states(state, configs, L_d=None):
    """Reduced coordinates ``q_s``, controlled velocities ``v``, ``zeta`` and ``xi``."""
    m = rw_count(configs)
    c = state.dcms()
    big_l = angular_momentum(state, configs, about_first=True)
    l_body = np.einsum("jba,b->ja", c[:m], big_l)
    xi = state.h[:m] - l_body / m
    q_s = np.concatenate([state.r[1:].ravel(), state.sigma.ravel()])
    zeta = np.concatenate([state.v[1:].ravel(), state.omega.ravel(), xi.ravel()])
    v = zeta[:-3]
    return ReducedStates(q_s=q_s, v=v, zeta=zeta, xi=xi, L=big_l)


def xi_targets(sigma_d, m, L_d=None):
    """Wheel-state targets ``xi_jd = -C_BjI L_d / m`` evaluated at target attitudes."""
    if L_d is None:
        return np.zeros((m, 3))
    from .mathkit import mrp_to_dcm_stack

    c = mrp_to_dcm_stack(np.asarray(sigma_d)[:m])
    return -np.einsum("jba,b->ja", c, np.asarray(L_d, dtype=float)) / m

"""Far-field magnetic dipole interaction and AC dipole averaging.

All vectors are I-frame components.  ``r_jk = r_j - r_k`` points from the
source dipole ``k`` to the acted-upon dipole ``j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import FarFieldViolation
from .mathkit import cross3

MU0 = 4.0e-7 * math.pi
K_MAG = MU0 / (4.0 * math.pi)  # 1e-7 T m / A


@dataclass(frozen=True)
class Wrench:
    """Force [N, I frame] and torque [N m] with an explicit torque frame tag."""

    force: np.ndarray
    torque: np.ndarray
    frame: str = "I"

    def __add__(self, other):
        if other.frame != self.frame:
            raise ValueError(f"cannot add wrenches in frames {self.frame} and {other.frame}")
        return Wrench(self.force + other.force, self.torque + other.torque, self.frame)


@dataclass(frozen=True)
class AcDipoleSet:
    """Sine/cosine dipole amplitudes [A m^2, I frame] at a common AC frequency."""

    mu_sin: np.ndarray
    mu_cos: np.ndarray
    omega_f: float

    def __post_init__(self):
        s = np.asarray(self.mu_sin, dtype=float).reshape(-1, 3)
        c = np.asarray(self.mu_cos, dtype=float).reshape(-1, 3)
        if s.shape != c.shape:
            raise ValueError("mu_sin and mu_cos must have the same shape")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(c))):
            raise ValueError("dipole amplitudes must be finite")
        if not self.omega_f > 0.0:
            raise ValueError("omega_f must be positive")
        object.__setattr__(self, "mu_sin", s)
        object.__setattr__(self, "mu_cos", c)

    @property
    def n(self):
        return self.mu_sin.shape[0]

    @classmethod
    def zeros(cls, n, omega_f):
        return cls(np.zeros((n, 3)), np.zeros((n, 3)), omega_f)

    def flat(self):
        return np.concatenate([self.mu_sin.ravel(), self.mu_cos.ravel()])

    @classmethod
    def from_flat(cls, x, omega_f):
        x = np.asarray(x, dtype=float)
        half = x.size // 2
        return cls(x[:half].reshape(-1, 3), x[half:].reshape(-1, 3), omega_f)


def coil_dipole(turns, current, area, normal):
    """Dipole moment of a flat circular coil, ``N c A n``."""
    nrm = np.asarray(normal, dtype=float)
    if abs(np.linalg.norm(nrm) - 1.0) > 1e-9:
        raise ValueError("coil normal must be a unit vector")
    if not area > 0.0:
        raise ValueError("coil area must be positive")
    return turns * current * area * nrm


def _check_distance(d, d_min, pair=None):
    if d < d_min or d == 0.0:
        raise FarFieldViolation(
            f"separation {d:.4g} m below far-field floor {d_min:.4g} m"
            + (f" for pair {pair}" if pair is not None else ""),
            pair=pair,
            distance=d,
        )


def dipole_field(mu_k, r_jk, d_min=0.0):
    """Field [T] of dipole ``mu_k`` at offset ``r_jk`` from it."""
    mu = np.asarray(mu_k, dtype=float)
    r = np.asarray(r_jk, dtype=float)
    d = math.sqrt(r @ r)
    _check_distance(d, d_min)
    return K_MAG * (3.0 * r * (mu @ r) / d**5 - mu / d**3)


def dipole_force(mu_k, mu_j, r_jk, d_min=0.0):
    """Force [N] on dipole ``j`` exerted by dipole ``k``."""
    a = np.asarray(mu_k, dtype=float)
    b = np.asarray(mu_j, dtype=float)
    r = np.asarray(r_jk, dtype=float)
    d = math.sqrt(r @ r)
    _check_distance(d, d_min)
    ar = a @ r
    br = b @ r
    return (3.0 * K_MAG) * (
        (a @ b) * r / d**5 + ar * b / d**5 + br * a / d**5 - 5.0 * ar * br * r / d**7
    )


def dipole_force_batch(mu_k, mu_j, r_jk):
    """Row-wise :func:`dipole_force` for ``(N, 3)`` arrays (no far-field check)."""
    a = np.asarray(mu_k, dtype=float)
    b = np.asarray(mu_j, dtype=float)
    r = np.asarray(r_jk, dtype=float)
    d = np.sqrt(np.einsum("iw,iw->i", r, r))[:, None]
    ar = np.einsum("iw,iw->i", a, r)[:, None]
    br = np.einsum("iw,iw->i", b, r)[:, None]
    ab = np.einsum("iw,iw->i", a, b)[:, None]
    return (3.0 * K_MAG) * (ab * r / d**5 + ar * b / d**5 + br * a / d**5 - 5.0 * ar * br * r / d**7)


def dipole_torque(mu_k, mu_j, r_jk, d_min=0.0):
    """Torque [N m, I frame] on dipole ``j`` from the field of dipole ``k``."""
    return np.cross(np.asarray(mu_j, dtype=float), dipole_field(mu_k, r_jk, d_min))


def pair_offsets(positions, d_min=0.0):
    """``r[j, k] = p_j - p_k`` and distances, checking the far-field floor."""
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    r = p[:, None, :] - p[None, :, :]
    d = np.sqrt(np.einsum("jkw,jkw->jk", r, r))
    n = p.shape[0]
    off = ~np.eye(n, dtype=bool)
    if n > 1:
        dmin_found = d[off].min()
        if dmin_found < d_min or dmin_found == 0.0:
            j, k = np.argwhere(off & (d == dmin_found))[0]
            raise FarFieldViolation(
                f"satellites {j + 1} and {k + 1} are {dmin_found:.4g} m apart, "
                f"below far-field floor {d_min:.4g} m",
                pair=(int(j), int(k)),
                distance=float(dmin_found),
            )
    np.fill_diagonal(d, np.inf)
    return r, d


def interaction_tensors(positions, d_min=0.0):
    """Bilinear coefficient tensors of the pairwise force and torque.

    Returns ``F, T`` of shape ``(n, n, 3, 3, 3)`` such that the force and
    torque on ``j`` due to ``k`` are ``f_w = mu_k @ F[j, k, w] @ mu_j`` and
    ``tau_w = mu_k @ T[j, k, w] @ mu_j``.  Diagonal (j == k) blocks are zero.
    """
    r, d = pair_offsets(positions, d_min)
    n = r.shape[0]
    inv_d = 1.0 / d
    u = r * inv_d[..., None]  # unit offsets, zero on diagonal
    u[np.arange(n), np.arange(n)] = 0.0
    c_f = 3.0 * K_MAG * inv_d**4
    c_b = K_MAG * inv_d**3
    eye = np.eye(3)
    uu = np.einsum("jka,jkb->jkab", u, u)
    # F_w = c (u_w E + u e_w^T + e_w u^T - 5 u_w u u^T)
    F = (
        np.einsum("jkw,ab->jkwab", u, eye)
        + np.einsum("jka,wb->jkwab", u, eye)
        + np.einsum("wa,jkb->jkwab", eye, u)
        - 5.0 * np.einsum("jkw,jkab->jkwab", u, uu)
    ) * c_f[..., None, None, None]
    # T_w = G tilde(e_w), G = c_b (3 u u^T - E)
    G = (3.0 * uu - eye) * c_b[..., None, None]
    G[np.arange(n), np.arange(n)] = 0.0
    T = np.einsum("jkac,wcb->jkwab", G, _LEVI_TILDE)
    return F, T


# _LEVI_TILDE[w] = tilde(e_w)
_LEVI_TILDE = np.array(
    [
        [[0, 0, 0], [0, 0, -1], [0, 1, 0]],
        [[0, 0, 1], [0, 0, 0], [-1, 0, 0]],
        [[0, -1, 0], [1, 0, 0], [0, 0, 0]],
    ],
    dtype=float,
)


def _pair_wrench_sums(mu_src, mu_dst, positions, d_min, offsets=None):
    """Per-satellite sums ``sum_k f(mu_src_k, mu_dst_j, r_jk)`` and the matching torques.

    Dipole arrays may carry a leading batch axis, ``(..., n, 3)``.
    """
    r, d = pair_offsets(positions, d_min) if offsets is None else offsets
    a = np.asarray(mu_src, dtype=float)
    b = np.asarray(mu_dst, dtype=float)
    inv_d = 1.0 / d
    i3 = inv_d**3
    i5 = inv_d**5
    ar = np.einsum("...kw,jkw->...jk", a, r)  # mu_k . r_jk
    br = np.einsum("...jw,jkw->...jk", b, r)  # mu_j . r_jk
    ab = np.einsum("...jw,...kw->...jk", b, a)
    f = (3.0 * K_MAG) * (
        np.einsum("...jk,jkw->...jw", ab * i5 - 5.0 * ar * br * inv_d**7, r)
        + (ar * i5).sum(-1)[..., None] * b
        + np.einsum("...jk,...kw->...jw", br * i5, a)
    )
    bsum = K_MAG * (
        3.0 * np.einsum("...jk,jkw->...jw", ar * i5, r) - np.einsum("jk,...kw->...jw", i3, a)
    )
    return f, cross3(b, bsum)


def system_wrench_dc(mus, positions, d_min=0.0):
    """Force and I-frame torque on every satellite for constant dipoles.

    Returns ``(forces, torques)`` as ``(n, 3)`` arrays.
    """
    return _pair_wrench_sums(mus, mus, positions, d_min)


def ac_dipole_at(dipoles, j, t):
    """Instantaneous dipole of satellite ``j`` at time ``t``."""
    if not 0 <= j < dipoles.n:
        raise IndexError(f"satellite index {j} out of range for {dipoles.n} satellites")
    ph = dipoles.omega_f * t
    return dipoles.mu_sin[j] * math.sin(ph) + dipoles.mu_cos[j] * math.cos(ph)


def ac_dipoles_at(dipoles, t):
    ph = dipoles.omega_f * t
    return dipoles.mu_sin * math.sin(ph) + dipoles.mu_cos * math.cos(ph)


def averaged_system_wrench(dipoles, positions, d_min=0.0):
    """First-order averaged force and I-frame torque for same-frequency AC drive."""
    mus = np.stack([dipoles.mu_sin, dipoles.mu_cos])
    f, tau = _pair_wrench_sums(mus, mus, positions, d_min)
    return 0.5 * f.sum(0), 0.5 * tau.sum(0)


@dataclass(frozen=True)
class TwoToneAverage:
    wrench: Wrench
    window: float
    exact: bool


def _cos_mean(omega, phase, window):
    """Mean of cos(omega t + phase) over [0, window]."""
    if omega == 0.0:
        return math.cos(phase)
    return (math.sin(omega * window + phase) - math.sin(phase)) / (omega * window)


def two_tone_average(
    mu_a_amp, mu_b_amp, omega_a, omega_b, theta, r_ba, horizon=None, max_denominator=1000
):
    """Time average of the force/torque between two sinusoidal dipoles.

    ``mu_a(t) = mu_a_amp sin(omega_a t + theta)`` acts on
    ``mu_b(t) = mu_b_amp sin(omega_b t)``.  The averaging window is the
    shortest common period of the sum and difference tones; when the
    frequencies are not commensurable within ``max_denominator`` the window
    is truncated at ``horizon`` and the result is tagged inexact.
    """
    if not (omega_a > 0.0 and omega_b > 0.0):
        raise ValueError("tone frequencies must be positive")
    f = dipole_force(mu_a_amp, mu_b_amp, r_ba)
    tau = dipole_torque(mu_a_amp, mu_b_amp, r_ba)
    w_minus = omega_a - omega_b
    w_plus = omega_a + omega_b
    exact = True
    if w_minus == 0.0:
        window = 2.0 * math.pi / w_plus
    else:
        ratio = Fraction(abs(w_minus) / w_plus).limit_denominator(max_denominator)
        if ratio == 0 or abs(float(ratio) - abs(w_minus) / w_plus) > 1e-12 * (abs(w_minus) / w_plus):
            exact = False
            window = horizon if horizon is not None else 1000.0 * 2.0 * math.pi / min(abs(w_minus), w_plus)
        else:
            # |w-| = p g, w+ = q g with g the common fundamental
            g = w_plus / ratio.denominator
            window = 2.0 * math.pi / g
    # sin(A) sin(B) = 0.5 [cos(A - B) - cos(A + B)]
    kappa = 0.5 * (_cos_mean(w_minus, theta, window) - _cos_mean(w_plus, theta, window))
    return TwoToneAverage(Wrench(kappa * f, kappa * tau), window, exact)

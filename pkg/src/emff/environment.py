"""Truth-model dynamics of the formation.

Relative translation is written in the invariant orientation frame (I):
a non-rotating frame at the formation centre whose x axis is the orbit
radial direction at t = 0 and whose z axis is the orbit normal.  The
formation centre itself follows an unperturbed circular orbit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import magnetics as mag
from .errors import ModelValidityError
from .mathkit import (
    cross3,
    mrp_kinematics_stack,
    mrp_shadow_switch_stack,
    mrp_to_dcm_stack,
    rk4_step,
)

MU_EARTH = 3.986e14  # m^3/s^2
R_EARTH = 6378.0e3  # m
MU_GEOMAG = 8.1e22  # A m^2
GEOMAG_TILT_DEG = 11.0


@dataclass(frozen=True)
class OrbitReference:
    """Circular reference orbit of the formation centre, expressed in I."""

    radius: float
    mu_g: float = MU_EARTH
    phase: float = 0.0
    inclination: float = 0.0  # rad, orbit plane relative to the geographic equator

    @classmethod
    def from_altitude(cls, altitude, **kw):
        return cls(radius=R_EARTH + altitude, **kw)

    @property
    def mean_motion(self):
        return math.sqrt(self.mu_g / self.radius**3)

    @property
    def period(self):
        return 2.0 * math.pi / self.mean_motion

    def radial_unit(self, t):
        """Orbit radial direction o_x(t) in I components."""
        a = self.mean_motion * t + self.phase
        return np.array([math.cos(a), math.sin(a), 0.0])

    def position(self, t):
        """Geocentric position of the formation centre, I components [m]."""
        return self.radius * self.radial_unit(t)

    def geomagnetic_axis(self):
        """Unit vector of Earth's magnetic dipole moment in I components.

        The geographic north pole is the orbit normal tilted by the
        inclination about I's x axis; the magnetic axis is tilted a further
        11 degrees toward I's x axis.  The moment points toward the south.
        """
        i = self.inclination
        pole = np.array([0.0, -math.sin(i), math.cos(i)])
        tilt = math.radians(GEOMAG_TILT_DEG)
        ex = np.array([1.0, 0.0, 0.0])
        ex = ex - pole * (pole @ ex)
        ex /= np.linalg.norm(ex)
        return -(math.cos(tilt) * pole + math.sin(tilt) * ex)


@dataclass(frozen=True)
class SatelliteConfig:
    mass: float
    inertia: np.ndarray
    has_rw: bool = True
    coil_radius: float = 1.0
    mu_max: float | None = None
    rw_h_max: float | None = None

    def __post_init__(self):
        j = np.asarray(self.inertia, dtype=float)
        if j.shape == (3,):
            j = np.diag(j)
        if j.shape != (3, 3):
            raise ValueError("inertia must be a 3x3 matrix or a 3-vector of principal moments")
        if not np.allclose(j, j.T):
            raise ValueError("inertia must be symmetric")
        if np.linalg.eigvalsh(j).min() <= 0.0:
            raise ValueError("inertia must be positive definite")
        if not self.mass > 0.0:
            raise ValueError("mass must be positive")
        object.__setattr__(self, "inertia", j)


@dataclass
class SystemState:
    """Stacked per-satellite states.

    ``r, v`` are I-frame positions relative to the formation centre and
    their I-frame derivatives; ``sigma`` are body attitudes relative to I,
    ``omega`` body rates and ``h`` wheel momenta, both in body components.
    Satellites without wheels carry ``h = 0``.
    """

    r: np.ndarray
    v: np.ndarray
    sigma: np.ndarray
    omega: np.ndarray
    h: np.ndarray
    t: float
    orbit: OrbitReference

    @property
    def n(self):
        return self.r.shape[0]

    def flat(self):
        return np.concatenate(
            [self.r.ravel(), self.v.ravel(), self.sigma.ravel(), self.omega.ravel(), self.h.ravel()]
        )

    def with_flat(self, y, t):
        n = self.n
        b = y.reshape(5, n, 3)
        return replace(self, r=b[0].copy(), v=b[1].copy(), sigma=b[2].copy(),
                       omega=b[3].copy(), h=b[4].copy(), t=t)

    def copy(self):
        return replace(self, r=self.r.copy(), v=self.v.copy(), sigma=self.sigma.copy(),
                       omega=self.omega.copy(), h=self.h.copy())

    def dcms(self):
        """``(n, 3, 3)`` stack of C_IB."""
        return mrp_to_dcm_stack(self.sigma)

    @classmethod
    def at_rest(cls, positions, orbit, t=0.0):
        p = np.asarray(positions, dtype=float).reshape(-1, 3)
        z = np.zeros_like(p)
        return cls(p.copy(), z.copy(), z.copy(), z.copy(), z.copy(), t, orbit)


def masses(configs):
    return np.array([c.mass for c in configs])


def far_field_floor(configs):
    """Minimum admissible separation: twice the largest coil radius."""
    return 2.0 * max(c.coil_radius for c in configs)


def linear_momentum(state, configs):
    return masses(configs) @ state.v


def angular_momentum(state, configs, about_first=True):
    """Total angular momentum in I components.

    Orbital terms are taken about satellite 1 (``about_first``) as used by
    the controller, or about the formation centre.
    """
    m = masses(configs)
    c = state.dcms()
    ref = state.r[0] if about_first else np.zeros(3)
    orbital = cross3(state.r - ref, state.v) * m[:, None]
    spin = np.einsum("jab,jbc,jc->ja", c, _inertias(configs), state.omega)
    wheel = np.einsum("jab,jb->ja", c, state.h)
    return orbital.sum(0) + spin.sum(0) + wheel.sum(0)


def _inertias(configs):
    return np.stack([c.inertia for c in configs])


def relative_accel(state, j, applied_force, configs):
    """Acceleration of satellite ``j`` under an applied I-frame force."""
    orbit = state.orbit
    r = state.r[j]
    if np.linalg.norm(r) >= 1e-2 * orbit.radius:
        raise ModelValidityError(
            f"satellite {j + 1} is {np.linalg.norm(r):.3g} m from the centre; "
            "relative dynamics require |r| << orbit radius"
        )
    ox = orbit.radial_unit(state.t)
    n2 = orbit.mu_g / orbit.radius**3
    return np.asarray(applied_force, dtype=float) / configs[j].mass + n2 * (3.0 * ox * (ox @ r) - r)


def tidal_accels(r, orbit, t):
    ox = orbit.radial_unit(t)
    n2 = orbit.mu_g / orbit.radius**3
    return n2 * (3.0 * np.outer(r @ ox, ox) - r)


def attitude_derivative(cfg, omega, h, tau_external_body, rw_torque):
    """Body-rate and wheel-momentum derivatives of one satellite."""
    omega = np.asarray(omega, dtype=float)
    h = np.asarray(h, dtype=float)
    rw_torque = np.asarray(rw_torque, dtype=float)
    if not cfg.has_rw and np.any(rw_torque != 0.0):
        raise ValueError("wheel torque commanded on a satellite without reaction wheels")
    j = cfg.inertia
    rhs = np.asarray(tau_external_body, dtype=float) - np.cross(omega, j @ omega + h) - rw_torque
    return np.linalg.solve(j, rhs), rw_torque.copy()


def gravity_gradient_torque(cfg, r_body, mu_g=MU_EARTH):
    """Gravity-gradient torque [N m, body] for geocentric position ``r_body``."""
    r = np.asarray(r_body, dtype=float)
    d = np.linalg.norm(r)
    if d == 0.0:
        raise ValueError("geocentric position must be non-zero")
    return 3.0 * mu_g / d**5 * np.cross(r, cfg.inertia @ r)


def geomagnetic_field(r, axis=None, moment=MU_GEOMAG):
    """Earth dipole field [T] at geocentric position ``r`` (same frame as ``axis``)."""
    r = np.asarray(r, dtype=float)
    d = np.linalg.norm(r)
    if d < R_EARTH:
        raise ValueError(f"position radius {d:.4g} m is below the Earth's surface")
    if axis is None:
        axis = OrbitReference(radius=d).geomagnetic_axis()
    return mag.dipole_field(moment * np.asarray(axis, dtype=float), r)


@dataclass(frozen=True)
class DipoleDrive:
    """Coil command held over a propagation step.

    ``ac`` are the AC amplitudes (may be None) and ``dc`` constant dipoles
    (may be None), both in I components.
    """

    ac: mag.AcDipoleSet | None = None
    dc: np.ndarray | None = None

    def instantaneous(self, n, t):
        mu = np.zeros((n, 3))
        if self.ac is not None:
            mu = mu + mag.ac_dipoles_at(self.ac, t)
        if self.dc is not None:
            mu = mu + self.dc
        return mu


@dataclass(frozen=True)
class EnvironmentOptions:
    tidal: bool = True
    gravity_gradient: bool = True
    geomagnetic: bool = False
    check_validity: bool = True


AVERAGED = "averaged"
INSTANTANEOUS = "instantaneous"


def em_wrench(drive, positions, t, mode, d_min):
    """I-frame EM forces and torques on all satellites for the given drive."""
    n = positions.shape[0]
    if mode == INSTANTANEOUS:
        return mag.system_wrench_dc(drive.instantaneous(n, t), positions, d_min)
    f = np.zeros((n, 3))
    tau = np.zeros((n, 3))
    if drive.ac is not None:
        fa, ta = mag.averaged_system_wrench(drive.ac, positions, d_min)
        f += fa
        tau += ta
    if drive.dc is not None:
        # AC-DC cross terms average to zero
        fd, td = mag.system_wrench_dc(drive.dc, positions, d_min)
        f += fd
        tau += td
    return f, tau


def geomagnetic_dipoles(drive, n, t, mode):
    """Dipoles that couple to the geomagnetic field (AC parts average out)."""
    if mode == INSTANTANEOUS:
        return drive.instantaneous(n, t)
    if drive.dc is not None:
        return np.asarray(drive.dc, dtype=float)
    return np.zeros((n, 3))


def external_body_torques(state, configs, drive, options, mode, c_ib=None):
    """Gravity-gradient and geomagnetic torques [N m, body] on every satellite."""
    n = state.n
    c = state.dcms() if c_ib is None else c_ib
    tau = np.zeros((n, 3))
    orbit = state.orbit
    rc = orbit.position(state.t)
    if options.gravity_gradient:
        rb = np.einsum("jba,b->ja", c, rc)
        d = np.linalg.norm(rc)
        jr = np.einsum("jab,jb->ja", _inertias(configs), rb)
        tau += 3.0 * orbit.mu_g / d**5 * cross3(rb, jr)
    if options.geomagnetic:
        be = geomagnetic_field(rc, orbit.geomagnetic_axis())
        mu = geomagnetic_dipoles(drive, n, state.t, mode)
        tau += np.einsum("jba,jb->ja", c, cross3(mu, be))
    return tau


def check_validity(state, configs, d_min=None):
    if d_min is None:
        d_min = far_field_floor(configs)
    mag.pair_offsets(state.r, d_min)
    ratio = np.linalg.norm(state.r, axis=1).max() / state.orbit.radius
    if ratio >= 1e-2:
        raise ModelValidityError(f"formation extent ratio {ratio:.3g} violates |r| << R")
    if not np.all(np.isfinite(state.flat())):
        raise ModelValidityError("non-finite state")


def make_derivative(state, configs, drive, rw_torques, options, mode):
    """Closure ``f(t, y)`` for the coupled translational/attitude dynamics."""
    n = state.n
    m = masses(configs)
    inert = _inertias(configs)
    inv_inert = np.linalg.inv(inert)
    rw = np.zeros((n, 3)) if rw_torques is None else np.asarray(rw_torques, dtype=float).reshape(n, 3)
    for j, cfg in enumerate(configs):
        if not cfg.has_rw and np.any(rw[j] != 0.0):
            raise ValueError(f"wheel torque commanded on satellite {j + 1}, which has no wheels")
    d_min = far_field_floor(configs)
    orbit = state.orbit

    def deriv(t, y):
        b = y.reshape(5, n, 3)
        r, v, sigma, omega, h = b
        c = mrp_to_dcm_stack(sigma)
        f_em, t_em = em_wrench(drive, r, t, mode, d_min)
        acc = f_em / m[:, None]
        if options.tidal:
            acc = acc + tidal_accels(r, orbit, t)
        tau = np.einsum("jba,jb->ja", c, t_em)
        tmp = replace(state, r=r, sigma=sigma, t=t)
        tau += external_body_torques(tmp, configs, drive, options, mode, c_ib=c)
        jw = np.einsum("jab,jb->ja", inert, omega)
        rhs = tau - cross3(omega, jw + h) - rw
        wdot = np.einsum("jab,jb->ja", inv_inert, rhs)
        sdot = mrp_kinematics_stack(sigma, omega)
        return np.concatenate([v.ravel(), acc.ravel(), sdot.ravel(), wdot.ravel(), rw.ravel()])

    return deriv


def propagate(state, configs, drive, rw_torques, dt, mode=AVERAGED, options=EnvironmentOptions()):
    """Advance the truth state by one RK4 step of length ``dt``.

    Wheel torques are body-frame, one row per satellite.  The MRP shadow set
    is applied after the step.
    """
    if mode not in (AVERAGED, INSTANTANEOUS):
        raise ValueError(f"unknown propagation mode {mode!r}")
    if mode == INSTANTANEOUS and drive.ac is not None:
        limit = (2.0 * math.pi / drive.ac.omega_f) / 20.0
        if dt > limit * (1.0 + 1e-12):
            raise ValueError(f"instantaneous mode needs dt <= {limit:.4g} s (20 steps per AC period)")
    if options.check_validity:
        check_validity(state, configs)
    f = make_derivative(state, configs, drive, rw_torques, options, mode)
    y = rk4_step(state.flat(), f, dt, t=state.t)
    new = state.with_flat(y, state.t + dt)
    new.sigma = mrp_shadow_switch_stack(new.sigma)
    if options.check_validity:
        check_validity(new, configs)
    return new

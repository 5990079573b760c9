"""Small linear algebra helpers, MRP attitude algebra and a fixed-step RK4.

Conventions
-----------
``C_IB`` denotes the direction-cosine matrix mapping body-frame components
to inertial (I) frame components, ``v_I = C_IB @ v_B``.  Its transpose maps
I components into the body frame.
"""

from __future__ import annotations

import numpy as np

from .errors import IntegrationError

E3 = np.eye(3)


def tilde(a):
    """Skew matrix with ``tilde(a) @ b == cross(a, b)``."""
    a = np.asarray(a, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"tilde expects a 3-vector, got shape {a.shape}")
    return np.array(
        [
            [0.0, -a[2], a[1]],
            [a[2], 0.0, -a[0]],
            [-a[1], a[0], 0.0],
        ]
    )


def tilde_stack(a):
    """Vectorised :func:`tilde` over the leading axis of an ``(k, 3)`` array."""
    a = np.asarray(a, dtype=float)
    out = np.zeros(a.shape[:-1] + (3, 3))
    out[..., 0, 1] = -a[..., 2]
    out[..., 0, 2] = a[..., 1]
    out[..., 1, 0] = a[..., 2]
    out[..., 1, 2] = -a[..., 0]
    out[..., 2, 0] = -a[..., 1]
    out[..., 2, 1] = a[..., 0]
    return out


def cross3(a, b):
    """Row-wise cross product of broadcastable ``(..., 3)`` arrays (faster than np.cross)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def mrp_kinematics_matrix(sigma):
    """Z(sigma) with sigma_dot = Z(sigma) @ omega_body."""
    s = np.asarray(sigma, dtype=float)
    s2 = s @ s
    return 0.25 * ((1.0 - s2) * E3 + 2.0 * tilde(s) + 2.0 * np.outer(s, s))


def mrp_kinematics(sigma, omega_body):
    """MRP rate for body angular velocity ``omega_body`` [rad/s]."""
    return mrp_kinematics_matrix(sigma) @ np.asarray(omega_body, dtype=float)


def mrp_shadow_switch(sigma):
    """Return the shadow set when ``|sigma| > 1``, otherwise ``sigma`` unchanged."""
    s = np.asarray(sigma, dtype=float)
    s2 = s @ s
    if s2 > 1.0:
        return -s / s2
    return s.copy()


def mrp_to_dcm(sigma):
    """C_IB for the attitude ``sigma`` of the body relative to I."""
    s = np.asarray(sigma, dtype=float)
    s2 = s @ s
    st = tilde(s)
    # body <- inertial map, then transpose
    c_bi = E3 + (8.0 * st @ st - 4.0 * (1.0 - s2) * st) / (1.0 + s2) ** 2
    return c_bi.T


def dcm_to_mrp(c_ib):
    """Inverse of :func:`mrp_to_dcm`, returning the set with ``|sigma| <= 1``."""
    q = dcm_to_quaternion(c_ib)
    if q[0] < 0.0:
        q = -q
    return q[1:] / (1.0 + q[0])


def dcm_to_quaternion(c_ib):
    """Scalar-first unit quaternion of the body attitude (Shepperd's method)."""
    c = np.asarray(c_ib, dtype=float).T  # body <- inertial
    tr = np.trace(c)
    b2 = np.array(
        [
            0.25 * (1.0 + tr),
            0.25 * (1.0 + 2.0 * c[0, 0] - tr),
            0.25 * (1.0 + 2.0 * c[1, 1] - tr),
            0.25 * (1.0 + 2.0 * c[2, 2] - tr),
        ]
    )
    i = int(np.argmax(b2))
    q = np.empty(4)
    if i == 0:
        q[0] = np.sqrt(b2[0])
        q[1] = (c[1, 2] - c[2, 1]) / (4.0 * q[0])
        q[2] = (c[2, 0] - c[0, 2]) / (4.0 * q[0])
        q[3] = (c[0, 1] - c[1, 0]) / (4.0 * q[0])
    elif i == 1:
        q[1] = np.sqrt(b2[1])
        q[0] = (c[1, 2] - c[2, 1]) / (4.0 * q[1])
        q[2] = (c[0, 1] + c[1, 0]) / (4.0 * q[1])
        q[3] = (c[2, 0] + c[0, 2]) / (4.0 * q[1])
    elif i == 2:
        q[2] = np.sqrt(b2[2])
        q[0] = (c[2, 0] - c[0, 2]) / (4.0 * q[2])
        q[1] = (c[0, 1] + c[1, 0]) / (4.0 * q[2])
        q[3] = (c[1, 2] + c[2, 1]) / (4.0 * q[2])
    else:
        q[3] = np.sqrt(b2[3])
        q[0] = (c[0, 1] - c[1, 0]) / (4.0 * q[3])
        q[1] = (c[2, 0] + c[0, 2]) / (4.0 * q[3])
        q[2] = (c[1, 2] + c[2, 1]) / (4.0 * q[3])
    return q


def dcm_derivative(c_ib, omega_body):
    """Time derivative of C_IB for body rate ``omega_body``."""
    return np.asarray(c_ib, dtype=float) @ tilde(omega_body)


def is_rotation(c, tol=1e-12):
    c = np.asarray(c, dtype=float)
    return bool(
        np.allclose(c.T @ c, E3, atol=tol, rtol=0.0)
        and abs(np.linalg.det(c) - 1.0) <= tol
    )


def rk4_step(state, derivative, dt, t=0.0):
    """One classical Runge-Kutta step of ``y' = derivative(t, y)``.

    Raises :class:`IntegrationError` if any stage derivative is non-finite.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    y = np.asarray(state, dtype=float)

    def stage(tt, yy):
        d = np.asarray(derivative(tt, yy), dtype=float)
        if d.shape != y.shape:
            raise ValueError(f"derivative shape {d.shape} != state shape {y.shape}")
        if not np.all(np.isfinite(d)):
            raise IntegrationError(f"non-finite derivative at t={tt:.6g}")
        return d

    h = dt
    k1 = stage(t, y)
    k2 = stage(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = stage(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = stage(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def block_diag(blocks):
    """Dense block-diagonal matrix from a sequence of 2-D arrays."""
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    i = j = 0
    for b in blocks:
        out[i : i + b.shape[0], j : j + b.shape[1]] = b
        i += b.shape[0]
        j += b.shape[1]
    return out


def mrp_to_dcm_stack(sigmas):
    """Vectorised :func:`mrp_to_dcm` over an ``(n, 3)`` array; returns ``(n, 3, 3)``."""
    s = np.asarray(sigmas, dtype=float).reshape(-1, 3)
    s2 = np.einsum("ij,ij->i", s, s)
    st = tilde_stack(s)
    st2 = st @ st
    c_bi = E3 + (8.0 * st2 - 4.0 * (1.0 - s2)[:, None, None] * st) / ((1.0 + s2) ** 2)[:, None, None]
    return np.transpose(c_bi, (0, 2, 1))


def mrp_kinematics_stack(sigmas, omegas):
    """Row-wise MRP rates for ``(n, 3)`` attitudes and body rates."""
    s = np.asarray(sigmas, dtype=float)
    w = np.asarray(omegas, dtype=float)
    s2 = np.einsum("ij,ij->i", s, s)
    sw = np.einsum("ij,ij->i", s, w)
    return 0.25 * ((1.0 - s2)[:, None] * w + 2.0 * cross3(s, w) + 2.0 * s * sw[:, None])


def mrp_shadow_switch_stack(sigmas):
    s = np.array(sigmas, dtype=float)
    s2 = np.einsum("ij,ij->i", s, s)
    flip = s2 > 1.0
    s[flip] = -s[flip] / s2[flip, None]
    return s

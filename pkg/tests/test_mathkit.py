import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from emff import mathkit as mk
from emff.errors import IntegrationError

finite = st.floats(-1e3, 1e3, allow_nan=False)
vec3 = arrays(np.float64, 3, elements=finite)
mrp = arrays(np.float64, 3, elements=st.floats(-0.57, 0.57, allow_nan=False))  # |sigma| < 1


def mrp_to_quat_xyzw(sigma):
    s2 = sigma @ sigma
    return np.r_[2.0 * sigma / (1.0 + s2), (1.0 - s2) / (1.0 + s2)]


@given(vec3, vec3)
def test_tilde_is_cross(a, b):
    assert np.allclose(mk.tilde(a) @ b, np.cross(a, b), atol=1e-9)
    assert np.allclose(mk.cross3(a[None], b[None])[0], np.cross(a, b), atol=1e-9)


def test_tilde_stack_matches_tilde(rng):
    a = rng.normal(size=(7, 3))
    assert np.array_equal(mk.tilde_stack(a), np.stack([mk.tilde(x) for x in a]))


def test_tilde_rejects_bad_shape():
    with pytest.raises(ValueError):
        mk.tilde(np.zeros(4))


@given(mrp)
def test_mrp_dcm_matches_quaternion_oracle(sigma):
    # C_IB maps body components to I: the active rotation of the body frame
    oracle = Rotation.from_quat(mrp_to_quat_xyzw(sigma)).as_matrix()
    assert np.allclose(mk.mrp_to_dcm(sigma), oracle, atol=1e-12)


def test_principal_rotation_example():
    # 90 deg about z: sigma = tan(phi/4) e_z
    c = mk.mrp_to_dcm(np.array([0.0, 0.0, np.tan(np.pi / 8)]))
    assert np.allclose(c @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)


@given(mrp)
def test_dcm_is_rotation_and_round_trips(sigma):
    c = mk.mrp_to_dcm(sigma)
    assert mk.is_rotation(c, tol=1e-12)
    assert np.allclose(mk.dcm_to_mrp(c), sigma, atol=1e-12)
    q = mk.dcm_to_quaternion(c)
    assert abs(np.linalg.norm(q) - 1.0) < 1e-12


def test_shadow_set_same_attitude(rng):
    for _ in range(50):
        s = rng.normal(size=3)
        s *= rng.uniform(1.05, 4.0) / np.linalg.norm(s)
        sh = mk.mrp_shadow_switch(s)
        assert np.linalg.norm(sh) <= 1.0
        assert np.allclose(mk.mrp_to_dcm(sh), mk.mrp_to_dcm(s), atol=1e-12)
    small = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(mk.mrp_shadow_switch(small), small)


def test_stack_versions_match_scalar(rng):
    s = rng.uniform(-0.5, 0.5, size=(6, 3))
    w = rng.normal(size=(6, 3))
    assert np.allclose(mk.mrp_to_dcm_stack(s), np.stack([mk.mrp_to_dcm(x) for x in s]), atol=1e-15)
    assert np.allclose(
        mk.mrp_kinematics_stack(s, w), np.stack([mk.mrp_kinematics(a, b) for a, b in zip(s, w)]), atol=1e-15
    )
    big = s * 5.0
    assert np.allclose(mk.mrp_shadow_switch_stack(big), np.stack([mk.mrp_shadow_switch(x) for x in big]))


def test_mrp_kinematics_finite_difference(rng):
    # dC/dt from sigma_dot must equal C tilde(omega)
    for _ in range(20):
        s = rng.uniform(-0.5, 0.5, 3)
        w = rng.normal(size=3)
        sd = mk.mrp_kinematics(s, w)
        h = 1e-6
        fd = (mk.mrp_to_dcm(s + h * sd) - mk.mrp_to_dcm(s - h * sd)) / (2 * h)
        assert np.allclose(fd, mk.dcm_derivative(mk.mrp_to_dcm(s), w), atol=1e-8)


def test_rk4_fourth_order():
    f = lambda t, y: np.array([y[1], -y[0]])  # noqa: E731
    errs = []
    for dt in (0.1, 0.05):
        y, t = np.array([1.0, 0.0]), 0.0
        for _ in range(int(round(2.0 / dt))):
            y = mk.rk4_step(y, f, dt, t)
            t += dt
        errs.append(abs(y[0] - np.cos(2.0)))
    assert 14.0 < errs[0] / errs[1] < 18.0


def test_rk4_rejects_nonfinite_and_bad_dt():
    with pytest.raises(IntegrationError):
        mk.rk4_step(np.ones(2), lambda t, y: np.array([np.nan, 0.0]), 0.1)
    with pytest.raises(ValueError):
        mk.rk4_step(np.ones(2), lambda t, y: y, 0.0)


def test_block_diag():
    out = mk.block_diag([np.eye(2), 3 * np.ones((1, 1))])
    assert out.shape == (3, 3) and out[2, 2] == 3.0 and out[0, 2] == 0.0

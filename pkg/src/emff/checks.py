"""Invariant suite evaluated on random states.

Each check returns a :class:`CheckResult`; :func:`run_suite` runs them all
and is what ``emff check`` prints.  Sizes default to the full acceptance
sizes; ``quick=True`` shrinks them for smoke use.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import environment as env
from . import magnetics as mag
from .kinematics import build_workspace, reduced_states


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float  # worst observed metric
    tol: float
    seconds: float
    detail: str = ""

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{tag}  {self.name:<28s} worst={self.value:.3e}  tol={self.tol:.1e}  ({self.seconds:.2f} s){extra}"


def _result(name, worst, tol, t0, detail=""):
    worst = float(worst)
    return CheckResult(name, bool(worst <= tol), worst, tol, time.perf_counter() - t0, detail)


def random_unit(rng, k):
    v = rng.normal(size=(k, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_positions(rng, n, box=10.0, min_sep=3.0):
    """Uniform positions in a cube with a minimum pairwise separation, centred on the origin."""
    for _ in range(10_000):
        p = rng.uniform(-box, box, size=(n, 3))
        d = np.linalg.norm(p[:, None] - p[None], axis=2) + np.eye(n) * 1e9
        if d.min() >= min_sep:
            return p - p.mean(0)
    raise RuntimeError("could not place satellites with the requested separation")


def random_formation(rng, n, m, altitude=700e3):
    """Random satellite configs and a random (constraint-consistent) state."""
    configs = [
        env.SatelliteConfig(
            mass=float(rng.uniform(100.0, 300.0)),
            inertia=rng.uniform(50.0, 150.0, size=3),
            has_rw=j < m,
        )
        for j in range(n)
    ]
    orbit = env.OrbitReference.from_altitude(altitude)
    mass = env.masses(configs)
    r = random_positions(rng, n)
    r -= (mass[:, None] * r).sum(0) / mass.sum()
    v = rng.normal(scale=0.01, size=(n, 3))
    v -= (mass[:, None] * v).sum(0) / mass.sum()
    sigma = random_unit(rng, n) * rng.uniform(0.0, 0.9, size=(n, 1))
    omega = rng.normal(scale=0.01, size=(n, 3))
    h = np.zeros((n, 3))
    h[:m] = rng.normal(scale=0.5, size=(m, 3))
    state = env.SystemState(r, v, sigma, omega, h, float(rng.uniform(0.0, 5000.0)), orbit)
    return state, configs


# -- magnetics -----------------------------------------------------------------------------------


def check_action_reaction(rng, pairs=10_000, tol=1e-13):
    """``f(mu_k, mu_j, r) + f(mu_j, mu_k, -r) = 0`` relative to the larger force of the pair."""
    t0 = time.perf_counter()
    a = rng.normal(scale=1e4, size=(pairs, 3))
    b = rng.normal(scale=1e4, size=(pairs, 3))
    r = random_unit(rng, pairs) * rng.uniform(2.0, 50.0, size=(pairs, 1))
    f1 = mag.dipole_force_batch(a, b, r)
    f2 = mag.dipole_force_batch(b, a, -r)
    scale = np.maximum(np.linalg.norm(f1, axis=1), np.linalg.norm(f2, axis=1))
    worst = (np.linalg.norm(f1 + f2, axis=1) / scale).max()
    return _result("action_reaction", worst, tol, t0, f"{pairs} pairs")


def check_wrench_closure(rng, configs=1000, tol=1e-12):
    """Total force and total moment about the origin vanish for any DC dipole set."""
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(configs):
        n = int(rng.integers(2, 7))
        p = random_positions(rng, n)
        mus = rng.normal(scale=1e4, size=(n, 3))
        f, tau = mag.system_wrench_dc(mus, p)
        moment = np.cross(p, f) + tau
        rel_f = np.linalg.norm(f.sum(0)) / np.linalg.norm(f, axis=1).sum()
        rel_m = np.linalg.norm(moment.sum(0)) / (
            np.linalg.norm(np.cross(p, f), axis=1).sum() + np.linalg.norm(tau, axis=1).sum()
        )
        worst = max(worst, rel_f, rel_m)
    return _result("wrench_closure", worst, tol, t0, f"{configs} configurations, n in 2..6")


def check_averaging(rng, sets=100, points=1000, tol=1e-9):
    """Analytic averaged wrench vs an equally spaced quadrature over one period pi/omega_f."""
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(sets):
        n = int(rng.integers(2, 7))
        p = random_positions(rng, n)
        omega_f = float(rng.uniform(1.0, 20.0))
        dip = mag.AcDipoleSet(rng.normal(scale=1e4, size=(n, 3)), rng.normal(scale=1e4, size=(n, 3)), omega_f)
        fa, ta = mag.averaged_system_wrench(dip, p)
        period = math.pi / omega_f
        ts = np.arange(points) * (period / points)
        ph = omega_f * ts
        mus = np.sin(ph)[:, None, None] * dip.mu_sin + np.cos(ph)[:, None, None] * dip.mu_cos
        # periodic trapezoid rule: the integrand is a trigonometric polynomial in 2*omega_f t
        fq, tq = mag._pair_wrench_sums(mus, mus, p, 0.0)
        fq, tq = fq.mean(0), tq.mean(0)
        scale = max(np.abs(fq).max(), np.abs(tq).max(), 1e-300)
        worst = max(worst, np.abs(fa - fq).max() / scale, np.abs(ta - tq).max() / scale)
    return _result("averaging_equivalence", worst, tol, t0, f"{sets} sets, {points} points")


# -- kinematics ----------------------------------------------------------------------------------

NULLSPACE_CASES = ((2, 1), (3, 2), (5, 5))


def check_nullspace(rng, states=100, tol_as=1e-12, tol_bbar=1e-10):
    """``A S = 0``, ``S^T S = E + A_s^T A_s`` and ``B_bar B_bar_rinv = E`` at random states.

    The first two are measured relative to the magnitude of the matrices
    involved.  Returns two results (the two tolerances differ).
    """
    t0 = time.perf_counter()
    worst_as = worst_bb = 0.0
    for n, m in NULLSPACE_CASES:
        for _ in range(states):
            state, configs = random_formation(rng, n, m)
            ws = build_workspace(state, configs)
            scale_as = np.abs(ws.A).max() * max(np.abs(ws.S).max(), 1.0)
            worst_as = max(worst_as, np.abs(ws.A @ ws.S).max() / scale_as)
            sts = ws.S.T @ ws.S
            ident = np.eye(sts.shape[0]) + ws.A_s.T @ ws.A_s
            worst_as = max(worst_as, np.abs(sts - ident).max() / max(np.abs(ident).max(), 1.0))
            eye = np.eye(ws.B_bar.shape[0])
            worst_bb = max(worst_bb, np.abs(ws.B_bar @ ws.B_bar_rinv - eye).max())
    return [
        _result("nullspace_AS_StS", worst_as, tol_as, t0, f"{states} states per (n, m) in {NULLSPACE_CASES}"),
        _result("nullspace_Bbar_inverse", worst_bb, tol_bbar, t0, "absolute, entries of B_bar B_bar_rinv - E"),
    ]


def _reduced_mass(state, configs):
    return build_workspace(state, configs).M_bar


def check_skew_symmetry(rng, trajectories=10, steps=20, dt=0.5, delta=1e-3, tol=1e-6):
    """``v^T (dM_bar/dt - 2 C_bar) v`` vanishes along propagated trajectories.

    ``dM_bar/dt`` comes from central differences of ``M_bar`` along the truth
    trajectory; the metric is scaled by ``|v|^2 (|dM_bar/dt| + 2 |C_bar|)``.
    """
    t0 = time.perf_counter()
    worst = 0.0
    opts = env.EnvironmentOptions(geomagnetic=False)
    for _ in range(trajectories):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, n + 1))
        state, configs = random_formation(rng, n, m)
        drive = env.DipoleDrive(None, rng.normal(scale=2e3, size=(n, 3)))
        rw = np.zeros((n, 3))
        rw[:m] = rng.normal(scale=0.01, size=(m, 3))
        for _ in range(steps):
            behind = env.propagate(state, configs, drive, rw, dt, env.AVERAGED, opts)
            state = env.propagate(behind, configs, drive, rw, delta, env.AVERAGED, opts)
            ahead = env.propagate(state, configs, drive, rw, delta, env.AVERAGED, opts)
            m_dot = (_reduced_mass(ahead, configs) - _reduced_mass(behind, configs)) / (2.0 * delta)
            ws = build_workspace(state, configs)
            v = reduced_states(state, configs).v
            x = m_dot - 2.0 * ws.C_bar
            scale = (v @ v) * (np.linalg.norm(m_dot) + 2.0 * np.linalg.norm(ws.C_bar))
            if scale > 0.0:
                worst = max(worst, abs(v @ x @ v) / scale)
    return _result("skew_symmetry", worst, tol, t0, f"{trajectories} trajectories x {steps} samples")


def check_orbit_period(altitude=700e3, expected=5926.0, tol=1.0):
    t0 = time.perf_counter()
    period = env.OrbitReference.from_altitude(altitude).period
    return _result("orbit_period", abs(period - expected), tol, t0, f"T = {period:.2f} s")


def run_suite(seed=0, quick=False):
    """Run every check; returns a list of :class:`CheckResult`."""
    rng = np.random.default_rng(seed)
    k = 10 if quick else 1
    return [
        check_action_reaction(rng, pairs=10_000 // k),
        check_wrench_closure(rng, configs=1000 // k),
        check_averaging(rng, sets=100 // k),
        *check_nullspace(rng, states=max(100 // k, 1)),
        check_skew_symmetry(rng, trajectories=max(10 // k, 1)),
        check_orbit_period(),
    ]

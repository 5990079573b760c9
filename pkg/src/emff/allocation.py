"""Dipole inversion: map commanded wrenches to coil dipoles.

Every averaged (AC) or constant (DC) EM force/torque component is a quadratic
form in the stacked dipole vector, so each constraint reads
``c_i(x) = 0.5 x^T Q_i x - t_i`` with a constant symmetric ``Q_i``.  Only
satellites 2..n are constrained; satellite 1's wrench follows from the
conservation of total linear and angular momentum.

Solver: augmented Lagrangian outer loop with Gauss-Newton inner solves for
the global phase, followed by a Newton-KKT polish that uses the exact
(constant-curvature) Hessian.  Warm starts carry dipoles and multipliers
between control steps; on failure, seeded random restarts are tried.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import magnetics as mag
from .errors import NoFeasibleSolution

AC_OPTIMAL = "ac_optimal"
AC_FEASIBLE = "ac_feasible"
DC = "dc"
MODES = (AC_OPTIMAL, AC_FEASIBLE, DC)


@dataclass(frozen=True)
class AllocationSettings:
    mode: str = AC_OPTIMAL
    tol_constraint: float = 1e-8  # scaled, infinity norm
    tol_gradient: float = 1e-6  # relative projected gradient
    max_outer: int = 50
    max_inner: int = 30
    restarts: int = 8
    rho0: float = 10.0
    rho_growth: float = 10.0
    polish_iters: int = 25
    dc_regularization: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown allocation mode {self.mode!r}; expected one of {MODES}")
        if self.restarts < 0 or self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")


@dataclass(frozen=True)
class AllocationProblem:
    """Targets for satellites 2..n (forces) and all n (torques), I frame."""

    positions: np.ndarray
    target_force: np.ndarray
    target_torque: np.ndarray
    omega_f: float = 4.0 * math.pi
    d_min: float = 0.0
    mu_max: float | None = None
    warm_start: mag.AcDipoleSet | None = None
    warm_multipliers: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        n = p.shape[0]
        if n < 2:
            raise ValueError("allocation needs at least two satellites")
        f = np.asarray(self.target_force, dtype=float).reshape(-1, 3)
        t = np.asarray(self.target_torque, dtype=float).reshape(-1, 3)
        if f.shape[0] != n - 1:
            raise ValueError(f"target_force must have {n - 1} rows (satellites 2..n), got {f.shape[0]}")
        if t.shape[0] not in (n - 1, n):
            raise ValueError(f"target_torque must have {n} rows, got {t.shape[0]}")
        if t.shape[0] == n:
            check_momentum_consistency(p, f, t)
            t = t[1:]
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "target_force", f)
        object.__setattr__(self, "target_torque", t)

    @property
    def n(self):
        return self.positions.shape[0]


@dataclass(frozen=True)
class AllocationSolution:
    dipoles: mag.AcDipoleSet | None  # AC modes
    dc_dipoles: np.ndarray | None  # DC mode, (n, 3)
    residual: float  # scaled constraint violation (inf-norm)
    objective: float  # (A m^2)^2 for AC, (N m)^2 for DC
    iterations: int
    restarts_used: int
    multipliers: np.ndarray = field(repr=False, default=None)
    achieved_torque: np.ndarray | None = field(repr=False, default=None)
    saturated: bool = False


def check_momentum_consistency(positions, target_force, target_torque, rtol=1e-6):
    """Reject targets whose implied system wrench does not vanish."""
    p = np.asarray(positions, dtype=float)
    f = np.asarray(target_force, dtype=float)
    t = np.asarray(target_torque, dtype=float)
    f_all = np.vstack([-f.sum(0), f])
    moment = np.cross(p, f_all).sum(0) + t.sum(0)
    scale = max(np.abs(np.cross(p, f_all)).max(initial=0.0), np.abs(t).max(initial=0.0), 1e-300)
    if np.linalg.norm(moment) > rtol * scale and np.linalg.norm(moment) > 1e-14:
        raise ValueError(
            f"targets violate angular-momentum balance: net moment {np.linalg.norm(moment):.3g} N m"
        )


# -- quadratic forms ---------------------------------------------------------------------------


def _pair_forms(coef):
    """Symmetric forms ``Q[j, w]`` (3n x 3n) with ``0.5 y^T Q y = sum_k y_k^T coef[j,k,w] y_j``."""
    n = coef.shape[0]
    q = np.zeros((n, 3, n, 3, n, 3))
    jj = np.arange(n)
    q[jj, :, :, :, jj, :] = coef.transpose(0, 2, 1, 3, 4)
    q = q + q.transpose(0, 1, 4, 5, 2, 3)
    return q.reshape(n, 3, 3 * n, 3 * n)


def dc_forms(positions, d_min=0.0):
    """DC force and torque forms for every satellite: ``(n, 3, 3n, 3n)`` each."""
    F, T = mag.interaction_tensors(positions, d_min)
    return _pair_forms(F), _pair_forms(T)


def _ac_lift(q):
    """AC average of a DC form over x = [mu_sin; mu_cos]: 0.5 blockdiag(Q, Q)."""
    k, d, _ = q.shape
    out = np.zeros((k, 2 * d, 2 * d))
    out[:, :d, :d] = 0.5 * q
    out[:, d:, d:] = 0.5 * q
    return out


# -- scaling -------------------------------------------------------------------------------------


@dataclass(frozen=True)
class ScaledProblem:
    """Nondimensional problem ``0.5 x^T Q_i x = t_i`` with ``mu = mu_ref x``."""

    Q: np.ndarray
    t: np.ndarray
    mu_ref: float
    f_ref: float
    d_ref: float
    row_scale: np.ndarray  # physical constraint = row_scale * scaled constraint
    identity: bool

    def to_scaled(self, mu):
        return np.asarray(mu, dtype=float) / self.mu_ref

    def to_physical(self, x):
        return np.asarray(x, dtype=float) * self.mu_ref


def characteristic_scales(problem):
    p = problem.positions
    diff = p[:, None, :] - p[None, :, :]
    d = np.sqrt((diff**2).sum(-1))
    n = p.shape[0]
    d_ref = d[~np.eye(n, dtype=bool)].mean()
    f_mag = np.abs(problem.target_force).max(initial=0.0)
    t_mag = np.abs(problem.target_torque).max(initial=0.0)
    f_ref = max(f_mag, t_mag / d_ref)
    return d_ref, f_ref


def scale_problem(problem, mode=AC_OPTIMAL):
    """Nondimensionalize dipoles by ``mu_ref`` and constraints by ``f_ref``, ``f_ref d_ref``.

    All-zero targets give the identity transform.
    """
    n = problem.n
    qf, qt = dc_forms(problem.positions, problem.d_min)
    qf = qf[1:].reshape(3 * (n - 1), 3 * n, 3 * n)
    qt = qt[1:].reshape(3 * (n - 1), 3 * n, 3 * n)
    t_phys = np.concatenate([problem.target_force.ravel(), problem.target_torque.ravel()])
    d_ref, f_ref = characteristic_scales(problem)
    if mode == DC:
        q_phys = np.concatenate([qf, qt])[: 3 * (n - 1)]
        t_phys = t_phys[: 3 * (n - 1)]
    else:
        q_phys = _ac_lift(np.concatenate([qf, qt]))
    if f_ref == 0.0:
        rows = np.ones(t_phys.size)
        return ScaledProblem(q_phys, t_phys, 1.0, 1.0, d_ref, rows, True)
    mu_ref = math.sqrt(4.0 * math.pi * d_ref**4 * f_ref / (3.0 * mag.MU0))
    rows = np.full(t_phys.size, f_ref)
    if mode != DC:
        rows[3 * (n - 1) :] = f_ref * d_ref
    q = q_phys * (mu_ref**2 / rows)[:, None, None]
    return ScaledProblem(q, t_phys / rows, mu_ref, f_ref, d_ref, rows, False)


def constraint_values(x, q, t):
    """``c(x)`` and its Jacobian for forms ``q`` (k, N, N) and offsets ``t``."""
    qx = q @ x  # (k, N)
    return 0.5 * (qx @ x) - t, qx


def residual_and_jacobian(x, problem, mode=AC_OPTIMAL, scaled=None):
    """Scaled constraint residual and its Jacobian with respect to physical ``x``.

    ``x`` stacks ``[mu_sin (3n); mu_cos (3n)]`` (AC) or the DC dipoles (3n).
    """
    sp = scale_problem(problem, mode) if scaled is None else scaled
    xs = sp.to_scaled(x)
    c, jac = constraint_values(xs, sp.Q, sp.t)
    return c, jac / sp.mu_ref


# -- solver core ---------------------------------------------------------------------------------


class _Objective:
    """Objective in least-squares form, 0.5 |r(x)|^2, with an exact Hessian."""

    def residual(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError


class _MinNorm(_Objective):
    def gauge(self, x):
        """Tangent of the AC phase symmetry (mu_sin, mu_cos) -> rotated pair."""
        half = x.size // 2
        return np.concatenate([-x[half:], x[:half]])

    def residual(self, x):
        return x, None  # Jacobian is the identity

    def value(self, x):
        return 0.5 * x @ x

    def gradient(self, x):
        return x

    def hessian(self, x):
        return np.eye(x.size)


class _TorqueNorm(_Objective):
    def __init__(self, qt, eps):
        self.qt = qt
        self.eps = eps
        self.se = math.sqrt(eps)

    def residual(self, x):
        qx = self.qt @ x
        tau = 0.5 * (qx @ x)
        return np.concatenate([self.se * x, tau]), np.vstack([self.se * np.eye(x.size), qx])

    def value(self, x):
        tau = 0.5 * ((self.qt @ x) @ x)
        return 0.5 * self.eps * x @ x + 0.5 * tau @ tau

    def gradient(self, x):
        qx = self.qt @ x
        tau = 0.5 * (qx @ x)
        return self.eps * x + qx.T @ tau

    def hessian(self, x):
        qx = self.qt @ x
        tau = 0.5 * (qx @ x)
        return self.eps * np.eye(x.size) + qx.T @ qx + np.tensordot(tau, self.qt, axes=1)


@dataclass
class _Result:
    x: np.ndarray
    lam: np.ndarray
    cnorm: float
    gnorm: float
    iterations: int
    converged: bool


def _projected_gradient(g, jac):
    """Component of ``g`` orthogonal to the row space of ``jac``."""
    if jac.shape[0] == 0:
        return g
    coef, *_ = np.linalg.lstsq(jac.T, g, rcond=None)
    return g - jac.T @ coef


def _converged(obj, x, q, t, settings, lam=None):
    c, jac = constraint_values(x, q, t)
    cn = np.abs(c).max(initial=0.0)
    if obj is None:
        return cn, 0.0, cn <= settings.tol_constraint
    g = obj.gradient(x)
    gtol = settings.tol_gradient * max(1.0, np.linalg.norm(x))
    gn = np.inf
    if lam is not None:
        # |g + J^T lam| bounds the projected gradient from above
        gn = np.linalg.norm(g + jac.T @ lam)
    if gn > gtol:
        gn = np.linalg.norm(_projected_gradient(g, jac))
    ok = cn <= settings.tol_constraint and gn <= gtol
    return cn, gn, ok


def _newton_kkt(obj, x, lam, q, t, settings):
    """Newton iterations on the KKT system with the exact Hessian."""
    k = t.size
    it = 0
    for it in range(1, settings.polish_iters + 1):
        c, jac = constraint_values(x, q, t)
        g = obj.gradient(x)
        grad_l = g + jac.T @ lam
        cn = np.abs(c).max(initial=0.0)
        if cn <= settings.tol_constraint and np.linalg.norm(grad_l) <= 1e-3 * settings.tol_gradient * max(
            1.0, np.linalg.norm(x)
        ):
            break
        h = obj.hessian(x) + np.tensordot(lam, q, axes=1)
        rows = jac
        gauge = getattr(obj, "gauge", None)
        if gauge is not None:
            # pin the continuous phase symmetry, otherwise the KKT matrix is singular
            gvec = gauge(x)
            gn = np.linalg.norm(gvec)
            if gn > 0.0:
                rows = np.vstack([jac, gvec / gn])
        kk = rows.shape[0]
        kkt = np.zeros((x.size + kk, x.size + kk))
        kkt[: x.size, : x.size] = h
        kkt[: x.size, x.size :] = rows.T
        kkt[x.size :, : x.size] = rows
        rhs = -np.concatenate([grad_l, c, np.zeros(kk - k)])
        try:
            step = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        x = x + step[: x.size]
        lam = lam + step[x.size : x.size + k]
        if np.abs(c).max(initial=0.0) > 1e6:
            break
    cn, gn, ok = _converged(obj, x, q, t, settings, lam)
    return _Result(x, lam, cn, gn, it, ok)


def _min_norm_feasibility(x, q, t, settings, max_iter=None):
    """Gauss-Newton steps ``x - J^+ c`` toward the nearest feasible point."""
    max_iter = max_iter or settings.max_outer * settings.max_inner
    it = 0
    for it in range(1, max_iter + 1):
        c, jac = constraint_values(x, q, t)
        cn = np.abs(c).max(initial=0.0)
        if cn <= settings.tol_constraint:
            break
        step, *_ = np.linalg.lstsq(jac, c, rcond=None)
        alpha = 1.0
        for _ in range(30):
            xn = x - alpha * step
            cn_new = np.abs(constraint_values(xn, q, t)[0]).max(initial=0.0)
            if cn_new < cn:
                break
            alpha *= 0.5
        x = xn
    cn, gn, ok = _converged(None, x, q, t, settings)
    return _Result(x, np.zeros(t.size), cn, gn, it, ok)


def _damped_newton_step(h, g):
    """Solve ``(h + mu E) p = -g`` with the smallest shift ``mu`` giving a positive definite matrix."""
    mu = 0.0
    scale = max(np.abs(np.diag(h)).max(initial=0.0), 1.0)
    eye = np.eye(h.shape[0])
    for _ in range(30):
        try:
            low = np.linalg.cholesky(h + mu * eye)
        except np.linalg.LinAlgError:
            mu = max(10.0 * mu, 1e-10 * scale)
            continue
        y = np.linalg.solve(low, -g)
        return np.linalg.solve(low.T, y)
    return -g


def _augmented_lagrangian(obj, x, lam, q, t, settings, stop_at=None):
    """Augmented-Lagrangian outer loop; inner solves use Newton steps on the exact AL Hessian.

    The Hessian includes the constraint curvature ``sum (lam_i + rho c_i) Q_i``,
    which dominates once multipliers are large; it is shifted to positive
    definiteness when needed.
    """
    rho = settings.rho0
    c, jac = constraint_values(x, q, t)
    c_prev = np.abs(c).max(initial=0.0)
    total = 0
    target = settings.tol_constraint if stop_at is None else stop_at

    def merit(xx):
        cc = constraint_values(xx, q, t)[0]
        return obj.value(xx) + lam @ cc + 0.5 * rho * cc @ cc

    for _ in range(settings.max_outer):
        for _ in range(settings.max_inner):
            total += 1
            c, jac = constraint_values(x, q, t)
            y = lam + rho * c
            g = obj.gradient(x) + jac.T @ y
            if np.linalg.norm(g) <= 1e-12 * max(1.0, np.linalg.norm(x)):
                break
            h = obj.hessian(x) + rho * jac.T @ jac + np.tensordot(y, q, axes=1)
            step = _damped_newton_step(h, g)
            phi0 = merit(x)
            slope = g @ step
            alpha = 1.0
            for _ in range(40):
                xn = x + alpha * step
                if merit(xn) <= phi0 + 1e-4 * alpha * slope:
                    break
                alpha *= 0.5
            x = xn
            if alpha * np.linalg.norm(step) <= 1e-13 * max(1.0, np.linalg.norm(x)):
                break
        c, jac = constraint_values(x, q, t)
        cn = np.abs(c).max(initial=0.0)
        lam = lam + rho * c
        if cn <= target:
            break
        if cn > 0.25 * c_prev:
            rho = min(rho * settings.rho_growth, 1e12)
        c_prev = cn
    cn, gn, ok = _converged(obj, x, q, t, settings, lam)
    return _Result(x, lam, cn, gn, total, ok)


def _solve_from(obj, x0, lam0, q, t, settings):
    """Polish directly when the start is nearly feasible, else run the global phase first."""
    iters = 0
    if obj is None:
        return _min_norm_feasibility(x0, q, t, settings)
    c0 = np.abs(constraint_values(x0, q, t)[0]).max(initial=0.0)
    x, lam = x0, lam0
    if c0 <= 1e-2 and lam0 is not None:
        res = _newton_kkt(obj, x, lam, q, t, settings)
        if res.converged:
            return res
        iters += res.iterations
    lam = np.zeros(t.size) if lam0 is None else lam0
    res = _augmented_lagrangian(obj, x0, lam, q, t, settings, stop_at=1e-6)
    iters += res.iterations
    if not res.converged:
        pol = _newton_kkt(obj, res.x, res.lam, q, t, settings)
        iters += pol.iterations
        if pol.converged:
            res = pol
        else:
            # polish did not take: finish in the globally convergent phase
            fin = _augmented_lagrangian(obj, res.x, res.lam, q, t, settings)
            iters += fin.iterations
            res = fin
            if not res.converged:
                pol = _newton_kkt(obj, res.x, res.lam, q, t, settings)
                iters += pol.iterations
                if pol.converged or pol.cnorm < res.cnorm:
                    res = pol
    res.iterations = iters
    return res


def _objective_for(mode, sp, problem, eps):
    if mode == AC_OPTIMAL:
        return _MinNorm()
    if mode == AC_FEASIBLE:
        return None
    n = problem.n
    _, qt = dc_forms(problem.positions, problem.d_min)
    qt = qt.reshape(3 * n, 3 * n, 3 * n) * (sp.mu_ref**2 / (sp.f_ref * sp.d_ref))
    return _TorqueNorm(qt, eps)


def _physical_objective(mode, x_phys, problem):
    if mode == DC:
        _, tau = mag.system_wrench_dc(x_phys.reshape(-1, 3), problem.positions, problem.d_min)
        return float((tau**2).sum()), tau
    return float(x_phys @ x_phys), None


def _ac_peak(dip):
    # max over t of |s sin + c cos| = largest singular value of [s c]
    m = np.stack([dip.mu_sin, dip.mu_cos], axis=-1)
    return np.linalg.svd(m, compute_uv=False)[:, 0]


def solve_allocation(problem, settings=AllocationSettings(), step_index=0):
    """Solve the configured allocation problem; see :func:`solve_ac_allocation`."""
    mode = settings.mode
    n = problem.n
    nvar = 3 * n if mode == DC else 6 * n
    sp = scale_problem(problem, mode)
    if sp.identity:
        return _package(mode, np.zeros(nvar), np.zeros(sp.t.size), 0.0, 0, 0, problem)
    obj = _objective_for(mode, sp, problem, settings.dc_regularization)
    attempts = []
    iters = 0
    if problem.warm_start is not None:
        if mode == DC:
            x0 = np.asarray(problem.warm_start, dtype=float).ravel()
        else:
            x0 = problem.warm_start.flat()
        x0 = sp.to_scaled(x0)
        if np.linalg.norm(x0) > 0.0:
            lam0 = problem.warm_multipliers
            if lam0 is not None and np.shape(lam0) != sp.t.shape:
                lam0 = None
            res = _solve_from(obj, x0, lam0, sp.Q, sp.t, settings)
            iters += res.iterations
            if res.converged:
                return _finish(mode, sp, res, iters, 0, problem)
            attempts.append(res)
    rng = np.random.default_rng([settings.seed, step_index])
    n_seeds = settings.restarts if attempts else max(settings.restarts, 1)
    restarts = 0
    for _ in range(n_seeds):
        x0 = rng.uniform(-1.0, 1.0, nvar)
        res = _solve_from(obj, x0, None, sp.Q, sp.t, settings)
        iters += res.iterations
        if attempts or restarts:
            restarts += 1
        attempts.append(res)
    feasible = [r for r in attempts if r.converged]
    if not feasible:
        best = min(attempts, key=lambda r: r.cnorm)
        raise NoFeasibleSolution(
            f"allocation failed after {restarts} restarts; best scaled residual {best.cnorm:.3g}",
            best_residual=best.cnorm,
            best=sp.to_physical(best.x),
        )
    # lowest objective, ties broken by attempt order
    vals = [obj.value(r.x) if obj is not None else 0.5 * r.x @ r.x for r in feasible]
    best = feasible[int(np.argmin(vals))]
    return _finish(mode, sp, best, iters, restarts, problem)


def _finish(mode, sp, res, iters, restarts, problem):
    return _package(mode, sp.to_physical(res.x), res.lam, res.cnorm, iters, restarts, problem)


def _package(mode, x_phys, lam, resid, iters, restarts, problem):
    objective, tau = _physical_objective(mode, x_phys, problem)
    if mode == DC:
        dc = x_phys.reshape(-1, 3)
        sat = problem.mu_max is not None and bool(np.linalg.norm(dc, axis=1).max() > problem.mu_max)
        return AllocationSolution(None, dc, float(resid), objective, iters, restarts, lam, tau, sat)
    dip = mag.AcDipoleSet.from_flat(x_phys, problem.omega_f)
    sat = problem.mu_max is not None and bool(_ac_peak(dip).max() > problem.mu_max)
    return AllocationSolution(dip, None, float(resid), objective, iters, restarts, lam, None, sat)


def solve_ac_allocation(problem, settings=AllocationSettings(), step_index=0):
    """Power-optimal (or feasibility-only) AC dipole allocation.

    Minimizes ``|mu_sin|^2 + |mu_cos|^2`` subject to the averaged wrench of
    satellites 2..n matching the targets.  Raises :class:`NoFeasibleSolution`
    when no attempt reaches the constraint tolerance.
    """
    if settings.mode == DC:
        raise ValueError("use solve_dc_allocation for the DC baseline")
    return solve_allocation(problem, settings, step_index)


def solve_dc_allocation(positions, target_forces, settings=None, warm_start=None,
                        warm_multipliers=None, d_min=0.0, step_index=0):
    """Torque-minimizing DC dipoles that realise ``target_forces`` on satellites 2..n.

    Returns an :class:`AllocationSolution` whose ``dc_dipoles`` are (n, 3) and
    whose ``achieved_torque`` lists the resulting I-frame torques on all n
    satellites.
    """
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    f = np.asarray(target_forces, dtype=float).reshape(-1, 3)
    if f.shape[0] == p.shape[0]:
        if np.linalg.norm(f.sum(0)) > 1e-9 * max(np.abs(f).max(), 1e-300):
            raise ValueError("DC force targets must sum to zero")
        f = f[1:]
    settings = settings or AllocationSettings(mode=DC)
    if settings.mode != DC:
        settings = AllocationSettings(**{**settings.__dict__, "mode": DC})
    prob = AllocationProblem(
        p, f, np.zeros((p.shape[0] - 1, 3)), d_min=d_min,
        warm_start=warm_start, warm_multipliers=warm_multipliers,
    )
    return solve_allocation(prob, settings, step_index)


def coaxial_pair_dipoles(distance, force):
    """Closed-form AC amplitudes giving an attractive averaged force ``force`` along the axis.

    For two coaxial, equal dipoles the DC attraction is ``6 K mu^2 / d^4``;
    the AC average halves it, so ``mu^2 = 2 pi d^4 F / (3 mu0) * 2``.
    """
    mu2 = 2.0 * math.pi * distance**4 * force / (3.0 * mag.MU0) * 2.0
    return math.sqrt(mu2)

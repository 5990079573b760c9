import math

import numpy as np
import pytest

from emff import allocation as alloc
from emff import magnetics as mag
from emff.errors import NoFeasibleSolution

ANG = np.radians([105.0, 165.0, 285.0, -15.0])
FIVE = np.array([[0.0, 0.0, 0.0]] + [[10 * math.cos(a), 10 * math.sin(a), z] for a, z in zip(ANG, [-2, 2, -2, 2])])


def _targets_from(dip, pos):
    f, tau = mag.averaged_system_wrench(dip, pos)
    return f[1:], tau


def test_coaxial_pair_matches_closed_form_and_seed_bound():
    d, force = 8.0, 0.02
    mu = alloc.coaxial_pair_dipoles(d, force)
    seed = mag.AcDipoleSet([[0, 0, mu], [0, 0, mu]], np.zeros((2, 3)), 4 * math.pi)
    pos = np.array([[0, 0, 0], [0, 0, d]], float)
    f_seed, _ = mag.averaged_system_wrench(seed, pos)
    assert np.allclose(f_seed[1], [0, 0, -force], rtol=1e-12)
    prob = alloc.AllocationProblem(pos, [[0, 0, -force]], np.zeros((2, 3)))
    sol = alloc.solve_ac_allocation(prob)
    f, tau = mag.averaged_system_wrench(sol.dipoles, pos)
    assert np.allclose(f[1], [0, 0, -force], rtol=1e-8, atol=1e-8 * force)
    assert np.abs(tau).max() <= 1e-8 * force * d
    seed_objective = float(seed.flat() @ seed.flat())
    assert sol.objective <= seed_objective * (1 + 1e-9)


def test_jacobian_finite_difference(rng):
    dip = mag.AcDipoleSet(rng.normal(scale=300, size=(5, 3)), rng.normal(scale=300, size=(5, 3)), 4 * math.pi)
    f, tau = _targets_from(dip, FIVE)
    prob = alloc.AllocationProblem(FIVE, f, tau)
    for mode in (alloc.AC_OPTIMAL, alloc.DC):
        x = rng.normal(scale=300, size=30 if mode != alloc.DC else 15)
        c, jac = alloc.residual_and_jacobian(x, prob, mode)
        h = 1e-3
        fd = np.stack(
            [(alloc.residual_and_jacobian(x + h * e, prob, mode)[0] - alloc.residual_and_jacobian(x - h * e, prob, mode)[0]) / (2 * h)
             for e in np.eye(x.size)],
            axis=1,
        )
        assert np.allclose(fd, jac, rtol=1e-6, atol=1e-9 * np.abs(jac).max())


def test_reachable_targets_are_met(rng):
    for k in range(10):
        dip = mag.AcDipoleSet(rng.normal(scale=300, size=(5, 3)), rng.normal(scale=300, size=(5, 3)), 4 * math.pi)
        f, tau = _targets_from(dip, FIVE)
        sol = alloc.solve_ac_allocation(alloc.AllocationProblem(FIVE, f, tau), step_index=k)
        assert sol.residual < 1e-8
        fa, ta = mag.averaged_system_wrench(sol.dipoles, FIVE)
        assert np.allclose(fa[1:], f, rtol=0, atol=1e-7 * np.abs(f).max())
        assert np.allclose(ta, tau, rtol=0, atol=1e-7 * np.abs(f).max() * 10)
        # power optimality: no worse than the generating dipoles
        assert sol.objective <= float(dip.flat() @ dip.flat()) * (1 + 1e-9)


def test_warm_start_converges_in_few_iterations(rng):
    dip = mag.AcDipoleSet(rng.normal(scale=300, size=(5, 3)), rng.normal(scale=300, size=(5, 3)), 4 * math.pi)
    f, tau = _targets_from(dip, FIVE)
    cold = alloc.solve_ac_allocation(alloc.AllocationProblem(FIVE, f, tau))
    warm = alloc.solve_ac_allocation(
        alloc.AllocationProblem(FIVE, f * 1.01, tau * 1.01, warm_start=cold.dipoles, warm_multipliers=cold.multipliers)
    )
    assert warm.restarts_used == 0 and warm.iterations <= 10 and warm.residual < 1e-8
    rel = np.linalg.norm(warm.dipoles.flat() - cold.dipoles.flat()) / np.linalg.norm(cold.dipoles.flat())
    assert rel < 0.02


def test_feasible_mode_and_determinism(rng):
    dip = mag.AcDipoleSet(rng.normal(scale=300, size=(4, 3)), rng.normal(scale=300, size=(4, 3)), 4 * math.pi)
    pos = FIVE[:4]
    f, tau = _targets_from(dip, pos)
    settings = alloc.AllocationSettings(mode=alloc.AC_FEASIBLE, seed=3)
    a = alloc.solve_ac_allocation(alloc.AllocationProblem(pos, f, tau), settings, step_index=7)
    b = alloc.solve_ac_allocation(alloc.AllocationProblem(pos, f, tau), settings, step_index=7)
    assert a.residual < 1e-8
    assert np.array_equal(a.dipoles.flat(), b.dipoles.flat())


def test_momentum_inconsistent_targets_rejected():
    with pytest.raises(ValueError):
        alloc.AllocationProblem(FIVE[:2], [[0, 0, 1e-3]], [[0, 0, 0], [0, 0, 1e-3]])


def test_zero_targets_give_zero_dipoles():
    sol = alloc.solve_ac_allocation(alloc.AllocationProblem(FIVE, np.zeros((4, 3)), np.zeros((5, 3))))
    assert not sol.dipoles.flat().any() and sol.residual == 0.0


def test_dc_allocation_meets_forces_and_reports_torque(rng):
    mus = rng.normal(scale=300, size=(5, 3))
    f, _ = mag.system_wrench_dc(mus, FIVE)
    sol = alloc.solve_dc_allocation(FIVE, f[1:])
    fa, ta = mag.system_wrench_dc(sol.dc_dipoles, FIVE)
    assert np.allclose(fa[1:], f[1:], rtol=0, atol=1e-7 * np.abs(f).max())
    assert np.allclose(sol.achieved_torque, ta)
    with pytest.raises(ValueError):
        alloc.solve_dc_allocation(FIVE, np.ones((5, 3)))


def test_exhausted_budget_raises_no_feasible_solution(rng):
    dip = mag.AcDipoleSet(rng.normal(scale=300, size=(5, 3)), rng.normal(scale=300, size=(5, 3)), 4 * math.pi)
    f, tau = _targets_from(dip, FIVE)
    settings = alloc.AllocationSettings(restarts=1, max_outer=1, max_inner=1, polish_iters=1)
    with pytest.raises(NoFeasibleSolution) as err:
        alloc.solve_ac_allocation(alloc.AllocationProblem(FIVE, f, tau), settings)
    assert err.value.best_residual > settings.tol_constraint
    assert err.value.best is not None


def test_settings_validation():
    with pytest.raises(ValueError):
        alloc.AllocationSettings(mode="bogus")
    with pytest.raises(ValueError):
        alloc.solve_ac_allocation(alloc.AllocationProblem(FIVE, np.zeros((4, 3)), np.zeros((5, 3))), alloc.AllocationSettings(mode=alloc.DC))


def test_mu_max_flag(rng):
    dip = mag.AcDipoleSet(rng.normal(scale=300, size=(5, 3)), rng.normal(scale=300, size=(5, 3)), 4 * math.pi)
    f, tau = _targets_from(dip, FIVE)
    sol = alloc.solve_ac_allocation(alloc.AllocationProblem(FIVE, f, tau, mu_max=1.0))
    assert sol.saturated

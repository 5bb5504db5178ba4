import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rkit.averaging import TrigPolynomial
from rkit.errors import ConvergenceError, PrerequisiteError
from rkit.experiments import pendulum_potential
from rkit.lattice import OrderedBasis
from rkit.slowsys import ConvexModel, MechanicalLagrangian, slow_system_from_potentials
from rkit.weakkam import (
    DiscreteActionConfig,
    GridProblem,
    GridValueFunction,
    aubry_set,
    calibrated_curve,
    grid_points,
    lax_oleinik_step,
    legendre_dual,
    mane_defect,
    mane_set,
    midpoint_convex,
    nonincreasing,
    peierls_barrier,
    rotation_number,
    semicontinuity_experiment,
    solve_weak_kam,
    static_classes,
    verify_alpha_relation,
)

EPS = 0.25
CFG = DiscreteActionConfig()


def free(S):
    S = np.atleast_2d(np.asarray(S, float))
    return MechanicalLagrangian(np.linalg.inv(S), TrigPolynomial.zero(len(S)))


def pendulum(eps=EPS):
    return MechanicalLagrangian(np.eye(1), pendulum_potential(eps))


def exact_profile(phi, eps=EPS):
    return 2 * math.sqrt(eps) / math.pi * (1 - np.abs(np.cos(math.pi * phi)))


@pytest.fixture(scope="module")
def pendulum_solution():
    return solve_weak_kam(pendulum(), [0.0], CFG)


@pytest.fixture(scope="module")
def pendulum_barrier(pendulum_solution):
    return peierls_barrier(pendulum(), [0.0], CFG, pendulum_solution.alpha)


# --- configuration ----------------------------------------------------------

@pytest.mark.parametrize("kw", [{"h": 0.0}, {"h": 1.5}, {"W": 0}, {"W": 4}, {"rule": "simpson"}])
def test_config_ranges(kw):
    with pytest.raises(ValueError):
        DiscreteActionConfig(**kw)


def test_default_resolution_and_winding():
    assert [CFG.resolution(d) for d in (1, 2, 3)] == [128, 48, 16]
    with pytest.raises(ValueError):
        CFG.resolution(4)
    assert CFG.winding(np.eye(1), [1.0]) == 1
    assert CFG.winding(np.eye(1), [3.0]) == 2


# --- the operator -----------------------------------------------------------

def test_flat_fixed_point():
    u = GridValueFunction(1, 32, np.zeros(32), 0.0, np.zeros(1))
    Tu = lax_oleinik_step(u, free(1.0), [0.0], CFG)
    assert np.array_equal(Tu.values, np.zeros(32)) and Tu.shift == 0.0


def test_free_shift_gives_alpha():
    c = np.array([0.625])  # chord velocity Sc lies on the grid for N=32, h=0.2
    u = GridValueFunction(1, 32, np.zeros(32), 0.0, c)
    Tu = lax_oleinik_step(u, free(1.0), c, CFG)
    assert np.abs(Tu.values).max() == 0.0
    assert Tu.alpha == pytest.approx(0.5 * c[0] ** 2, abs=1e-14)


def test_single_cell_grid():
    L = pendulum()
    cfg = DiscreteActionConfig(N=1)
    u = GridValueFunction(1, 1, np.zeros(1), 0.0, np.zeros(1))
    Tu = lax_oleinik_step(u, L, [0.3], cfg)
    # offsets are whole windings w, velocity w/h, potential U(0)=0
    best = min(cfg.h * (0.5 * (w / cfg.h) ** 2 - 0.3 * w / cfg.h) for w in (-1, 0, 1))
    assert Tu.shift == pytest.approx(best, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3))
def test_monotone_nonexpansive_and_shift_equivariant(seed, k):
    rng = np.random.default_rng(seed)
    prob = GridProblem(pendulum(), [0.4], CFG, 32)
    u = rng.normal(size=32)
    v = u + np.abs(rng.normal(size=32))
    Tu, Tv = prob.apply(u), prob.apply(v)
    assert np.all(Tu <= Tv)
    w = rng.normal(size=32)
    assert np.abs(prob.apply(w) - Tu).max() <= np.abs(w - u).max() + 1e-12
    assert np.allclose(prob.apply(u + k), Tu + k, atol=1e-12)


def test_convergence_error_carries_history():
    with pytest.raises(ConvergenceError) as err:
        solve_weak_kam(pendulum(), [0.0], CFG, tol=1e-14, max_iter=5)
    assert len(err.value.residuals) == 5


# --- alpha oracles ----------------------------------------------------------

@pytest.mark.parametrize("c", [0.0, 0.3, -0.7, 1.1, 2.0])
def test_free_alpha_1d(c):
    u = solve_weak_kam(free(1.0), [c], CFG)
    assert abs(u.alpha - 0.5 * c * c) <= 2 * 1.0 * (1 / 128 + CFG.h)


def test_free_alpha_2d():
    u = solve_weak_kam(free(np.eye(2)), [1.0, 0.0], CFG)
    assert abs(u.alpha - 0.5) <= 2 * (1 / 48 + CFG.h)
    assert np.ptp(u.values) <= 1e-8


def test_pendulum_alpha_and_profile(pendulum_solution):
    u = pendulum_solution
    assert abs(u.alpha) <= 1e-3
    phi = u.grid()[:, 0]
    lip = 2 * math.sqrt(EPS)
    assert np.abs(u.flat - exact_profile(phi)).max() <= 5 / 128 * lip


def test_rectangle_rule_is_coarser(pendulum_solution):
    rect = solve_weak_kam(pendulum(), [0.0], DiscreteActionConfig(rule="rectangle"))
    phi = rect.grid()[:, 0]
    err_rect = np.abs(rect.flat - exact_profile(phi)).max()
    err_trap = np.abs(pendulum_solution.flat - exact_profile(phi)).max()
    assert err_trap < err_rect


def test_alpha_convex_in_rotation_regime():
    cs = np.linspace(1.0, 2.0, 6)
    alphas = [solve_weak_kam(pendulum(), [c], DiscreteActionConfig(N=64)).alpha for c in cs]
    assert midpoint_convex(cs, alphas, tol=0.0)
    assert np.all(np.diff(alphas, 2) > 0)


# --- barrier, Aubry and Mane sets -------------------------------------------

def test_pendulum_barrier_values(pendulum_barrier):
    tab = pendulum_barrier
    assert tab.converged
    assert abs(tab.values[0, 0]) <= 1e-6
    assert abs(tab.values[0, 64] - 2 * math.sqrt(EPS) / math.pi) <= 5 / 128
    assert tab.diagonal().min() >= -1e-6
    sym = tab.values + tab.values.T
    assert sym.min() >= -2e-6


def test_pendulum_aubry_is_near_zero(pendulum_barrier):
    A = aubry_set(pendulum(), [0.0], CFG, 1e-4, table=pendulum_barrier)
    phi = grid_points(1, 128)[A, 0]
    assert 0 in A
    assert np.all(np.minimum(phi, 1 - phi) <= 0.05)
    assert len(static_classes(pendulum_barrier, A, 1e-4)) == 1


def test_two_well_aubry_has_both_minima():
    L = MechanicalLagrangian(np.eye(1), TrigPolynomial.cosine([2], -EPS) + TrigPolynomial.cosine([0], EPS))
    cfg = DiscreteActionConfig(N=64)
    alpha = solve_weak_kam(L, [0.0], cfg).alpha
    A = aubry_set(L, [0.0], cfg, 1e-4, alpha=alpha)
    assert 0 in A and 32 in A


def test_free_sets_are_everything():
    cfg = DiscreteActionConfig(N=32)
    tab = peierls_barrier(free(1.0), [0.0], cfg, 0.0, iters=400)
    assert len(aubry_set(free(1.0), [0.0], cfg, 1e-9, table=tab)) == 32
    assert len(mane_set(free(1.0), [0.0], cfg, 1e-9, table=tab)) == 32
    # one grid cell per step: barrier is at most the cost of half a turn
    assert tab.values.max() <= 1 / (4 * 32 * cfg.h) + 1e-9


def test_mane_contains_aubry(pendulum_barrier):
    A = aubry_set(pendulum(), [0.0], CFG, 1e-4, table=pendulum_barrier)
    M = mane_set(pendulum(), [0.0], CFG, 1e-4, table=pendulum_barrier)
    assert set(A.tolist()) <= set(M.tolist())


def test_mane_at_critical_cohomology_is_full_circle():
    cstar = 4 * math.sqrt(EPS) / math.pi
    cfg = DiscreteActionConfig(N=64)
    u = solve_weak_kam(pendulum(), [cstar], cfg)
    tab = peierls_barrier(pendulum(), [cstar], cfg, u.alpha)
    A = aubry_set(pendulum(), [cstar], cfg, 1e-3, table=tab)
    assert mane_defect(tab, A).max() <= 1e-3
    assert len(mane_set(pendulum(), [cstar], cfg, 1e-3, table=tab, aubry=A)) == 64


def test_mane_needs_aubry(pendulum_barrier):
    with pytest.raises(PrerequisiteError):
        mane_set(pendulum(), [0.0], CFG, 1e-4, table=pendulum_barrier, aubry=np.array([], dtype=int))


# --- curves and rotation ----------------------------------------------------

def test_pendulum_curve_descends_to_fixed_point(pendulum_solution):
    cur = calibrated_curve(pendulum_solution, pendulum(), [0.0], [0.25], 200, CFG)
    x = cur.positions[:, 0]
    assert np.all(np.diff(x) <= 0)
    assert abs(x[-1]) <= 1 / 128
    assert np.allclose(rotation_number(cur, discard=100), 0.0)


def test_free_curve_velocity_and_rotation():
    S = np.array([[1.0]])
    c = [0.625]
    u = solve_weak_kam(free(S), c, DiscreteActionConfig(N=32))
    cur = calibrated_curve(u, free(S), c, [0.0], 200, DiscreteActionConfig(N=32))
    assert np.allclose(cur.velocities, 0.625)
    assert abs(rotation_number(cur)[0] - 0.625) <= 1 / 200


def test_legendre_dual_free_system():
    cs = np.linspace(-2, 2, 81)
    alphas = 0.5 * cs**2
    rho = np.linspace(-1.5, 1.5, 7)
    beta = legendre_dual(cs, alphas, rho)
    assert np.abs(beta - 0.5 * rho**2).max() <= (cs[1] - cs[0]) ** 2
    assert midpoint_convex(rho, beta)
    assert np.all(alphas[:, None] + beta[None, :] >= cs[:, None] * rho[None, :] - 1e-12)


def test_fenchel_defect_on_pendulum():
    cs = np.linspace(-1.5, 1.5, 13)
    cfg = DiscreteActionConfig(N=64)
    alphas = []
    rhos = []
    for c in cs:
        u = solve_weak_kam(pendulum(), [c], cfg)
        alphas.append(u.alpha)
        cur = calibrated_curve(u, pendulum(), [c], [0.3], 600, cfg)
        rhos.append(rotation_number(cur, discard=300)[0])
    beta = legendre_dual(cs, alphas, np.array(rhos))
    defect = np.array(alphas) + beta - cs * np.array(rhos)
    grid_err = 2 * (1 / 64 + cfg.h)
    assert defect.min() >= -1e-12
    assert defect.max() <= 2 * grid_err


# --- slow-system experiments ------------------------------------------------

def member(mu, amp=0.5, decay=3.0, zero=False):
    B = OrderedBasis(((1, 0, 0), (0, mu, 1)), 1)
    uwk = TrigPolynomial.zero(2) if zero else TrigPolynomial.cosine([1, 1], amp * mu ** (-decay))
    return slow_system_from_potentials(ConvexModel(np.eye(2), 10.0), np.zeros(2), B, pendulum_potential(EPS), [uwk])


def test_alpha_relation_zero_weak_potential():
    sys = member(5, zero=True)
    # weak chord velocity C~ c^wk = 3 / (N h) is resolved exactly by the grid
    rep = verify_alpha_relation(sys, [0.2, 0.3125 / 25], CFG)
    assert rep.defect <= 2 * max(rep.solver_alpha_tol, 1e-8)
    assert rep.passed


def test_alpha_relation_restriction():
    sys = member(5)
    rep = verify_alpha_relation(sys, [0.2, 0.0], CFG)
    assert rep.quadratic == 0.0 and rep.passed


def test_semicontinuity_zero_family():
    fam = [member(mu, zero=True) for mu in (5, 11)]
    rep = semicontinuity_experiment(fam[0].strong_system(), fam, [np.zeros(2)] * 2, CFG, q=3.0)
    assert max(rep.oscillations) <= 1e-9


def test_nonincreasing_helper():
    assert nonincreasing([1.0, 1.05, 0.5])
    assert not nonincreasing([1.0, 1.2])
    assert nonincreasing([1e-9, 2e-9], floor=1e-8)


def test_strong_velocity_compactness():
    bounds = []
    for mu in (5, 11):
        sys = member(mu)
        u = solve_weak_kam(sys.lagrangian(), [0.3, 0.0], CFG, tol=1e-6)
        cur = calibrated_curve(u, sys.lagrangian(), [0.3, 0.0], [0.25, 0.5], 300, CFG)
        bounds.append(np.abs(cur.velocities[:, 0] - sys.S[0, 0] * 0.3).max())
    assert max(bounds) <= 2 * math.sqrt(2 * 2 * EPS) + 1.0

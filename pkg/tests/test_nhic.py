import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rkit.averaging import TrigPolynomial
from rkit.errors import ModelError
from rkit.experiments import pendulum_potential
from rkit.lattice import OrderedBasis
from rkit.nhic import (
    FAIL,
    INCONCLUSIVE,
    NOT_CHECKED,
    PASS,
    IsolatingBlockSpec,
    Mollifier,
    SmoothMap,
    center_grid,
    check_block_conditions,
    cylinder_witness,
    involution,
    linear_map,
    linearized_map,
    mollified_map,
    pendulum_rate,
    persistence_demo,
    slow_block_maps,
)
from rkit.slowsys import ConvexModel, SlowSystem, slow_system_from_potentials

EPS = 0.25
BOX1 = IsolatingBlockSpec(1, 1, (-1.0,), (1.0,), 0.1, mu=2.0, nu=1.5, n_samples=256, n_pairs=128)


def verdicts(rep, side="forward"):
    return {k: v.verdict for k, v in getattr(rep, side).items()}


def test_spec_validation():
    with pytest.raises(ValueError):
        IsolatingBlockSpec(1, 1, (0.0,), (1.0,), 0.0)
    with pytest.raises(ValueError):
        IsolatingBlockSpec(1, 1, (0.0,), (1.0,), 0.1, mu=1.0)
    with pytest.raises(ValueError):
        IsolatingBlockSpec(1, 1, (0.0,), (1.0,), 0.1, nu=0.9)


def test_linear_hyperbolic_passes_with_exact_margins():
    F, Fi = linear_map(np.diag([0.5, 2.0, 1.0]))
    rep = check_block_conditions(F, BOX1, Fi)
    assert rep.verdict == PASS and rep.label == "sampled certificate"
    assert rep.forward["C1"].details["contraction"] == pytest.approx(0.5, abs=1e-12)
    assert rep.forward["C2"].details["expansion"] == pytest.approx(2.0, abs=1e-12)
    assert rep.forward["C4"].details["min_ratio"] == pytest.approx(2.0, abs=1e-12)


def test_swapped_roles_fail():
    F, Fi = linear_map(np.diag([2.0, 0.5, 1.0]))
    rep = check_block_conditions(F, BOX1, Fi)
    v = verdicts(rep)
    assert v["C2"] == FAIL and v["C4"] == FAIL
    assert rep.verdict == FAIL


def test_inverse_not_checked_is_not_a_pass():
    F, _ = linear_map(np.diag([0.5, 2.0, 1.0]))
    rep = check_block_conditions(F, BOX1)
    assert set(verdicts(rep, "inverse").values()) == {NOT_CHECKED}
    assert rep.verdict == INCONCLUSIVE


def test_margin_at_resolution_is_inconclusive():
    F, Fi = linear_map(np.diag([0.5, 1.5, 1.0]))
    rep = check_block_conditions(F, BOX1, Fi)
    assert rep.forward["C4"].verdict == INCONCLUSIVE
    assert rep.verdict == INCONCLUSIVE


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(1.1, 4.0), st.floats(0.95, 1.05))
def test_linear_classification_and_involution_symmetry(a, b, c):
    spec = IsolatingBlockSpec(1, 1, (-1.0,), (1.0,), 0.1, mu=2.0, nu=1.05, n_samples=128, n_pairs=64)
    M = np.diag([a, b, c])
    F, Fi = linear_map(M)
    rep = check_block_conditions(F, spec, Fi)
    if b > spec.nu * 1.001 and 1 / a > spec.nu * 1.001:
        assert rep.forward["C1"].verdict == PASS and rep.forward["C2"].verdict == PASS
    # the inverse side of M equals the forward side of I M^{-1} I
    P = involution(1, 1, 1)
    G, Gi = linear_map(P @ np.linalg.inv(M) @ P)
    other = check_block_conditions(G, spec, Gi)
    assert verdicts(rep, "inverse") == verdicts(other, "forward")


def test_two_dimensional_unstable_winding():
    spec = IsolatingBlockSpec(1, 2, (-1.0,), (1.0,), 0.1, mu=2.0, nu=1.5, n_samples=128, n_pairs=64)
    F, _ = linear_map(np.diag([0.5, 2.0, 3.0, 1.0]))
    rep = check_block_conditions(F, spec)
    assert rep.forward["C2"].verdict == PASS
    assert rep.forward["C2"].details["winding_numbers"] == [1]


def test_dimension_mismatch():
    F, _ = linear_map(np.eye(4))
    with pytest.raises(ModelError):
        check_block_conditions(F, BOX1)


# --- mollifier --------------------------------------------------------------

def nonlinear_map():
    def call(Z):
        x, y, z = Z[:, 0], Z[:, 1], Z[:, 2]
        V = np.stack([0.5 * x + 0.1 * x * z, 2 * y + 0.2 * y * z**2, z + 0.05 * np.sin(z)], 1)
        J = np.zeros((len(Z), 3, 3))
        J[:, 0, 0], J[:, 0, 2] = 0.5 + 0.1 * z, 0.1 * x
        J[:, 1, 1], J[:, 1, 2] = 2 + 0.2 * z**2, 0.4 * y * z
        J[:, 2, 2] = 1 + 0.05 * np.cos(z)
        return V, J

    return SmoothMap(call, 3)


def test_mollified_map_blends_and_differentiates():
    F = nonlinear_map()
    L = linearized_map(F, 1, 1)
    rho = Mollifier(2, 0.5, 1.0)
    G = mollified_map(F, L, rho)
    Z = np.array([[0.05, -0.02, 0.2], [0.05, -0.02, 1.5], [0.03, 0.04, 0.7]])
    V, J = G(Z)
    assert np.allclose(V[0], F.value(Z[:1])[0]) and np.allclose(V[1], L.value(Z[1:2])[0])
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (G.value(Z + e) - G.value(Z - e)) / (2 * h)
        assert np.abs(fd - J[:, :, k]).max() <= 1e-6


# --- slow maps and witnesses ------------------------------------------------

def member(mu, amp=0.5, decay=5.0):
    B = OrderedBasis(((1, 0, 0), (0, mu, 1)), 1)
    uwk = TrigPolynomial.cosine([1, 1], amp * mu ** (-decay)) if amp else TrigPolynomial.zero(2)
    return slow_system_from_potentials(ConvexModel(np.eye(2), 10.0), np.zeros(2), B, pendulum_potential(EPS), [uwk])


def block_spec(lam, **kw):
    return IsolatingBlockSpec(1, 1, (-2.0, -2.0), (2.0, 2.0), 1e-3, 2.0, math.exp(lam) - 1.0, **kw)


def test_pendulum_block_passes():
    sys = SlowSystem(np.eye(1), 1, pendulum_potential(EPS))
    F, Fi, chart, lam = slow_block_maps(sys, 5.0)
    assert lam == pytest.approx(pendulum_rate(1.0, EPS))
    spec = IsolatingBlockSpec(1, 1, (), (), 1e-3, 2.0, math.exp(lam) - 0.1, n_samples=256, n_pairs=128)
    assert check_block_conditions(F, spec, Fi).verdict == PASS


def test_product_member_has_zero_distance():
    sys = member(5, amp=0.0)
    F, Fi, chart, lam = slow_block_maps(sys, 5.0)
    spec = block_spec(lam)
    wit = cylinder_witness(F, Fi, spec, center_grid(spec, 3))
    assert wit.strong_distance(chart) == 0.0 and wit.inside


def test_huge_weak_potential_does_not_pass():
    sys = member(5, amp=50.0, decay=0.0)
    F, Fi, chart, lam = slow_block_maps(sys, 5.0)
    spec = block_spec(lam, n_samples=256, n_pairs=128, n_boundary=64)
    out = persistence_demo([sys], spec, 1e-3, 5.0)
    assert not out[0].passed
    assert out[0].report.verdict in (FAIL, INCONCLUSIVE)


def test_involution_requires_square_split():
    with pytest.raises(ModelError):
        involution(1, 2, 0)

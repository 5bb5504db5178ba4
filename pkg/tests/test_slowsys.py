import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rkit.averaging import TrigPolynomial, decaying_hamiltonian
from rkit.errors import ConditioningError, ModelError
from rkit.lattice import OrderedBasis
from rkit.slowsys import (
    ConvexModel,
    SlowSystem,
    block_decomposition,
    build_slow_system,
    cbar,
    eta,
    kinetic_matrix,
    lagrangian_split_eval,
    slow_system_from_potentials,
    ztilde_bound_check,
)

ID2 = ConvexModel(np.eye(2), 10.0)


def spd(rng, d):
    M = rng.normal(size=(d, d))
    return M @ M.T + d * np.eye(d)


def system_from_S(S, m, seed=0):
    d = len(S)
    rng = np.random.default_rng(seed)
    ust = TrigPolynomial.cosine([1] * m, 0.3, rng.random()) if m else TrigPolynomial.zero(0)
    uwk = [TrigPolynomial.cosine([1] * (m + j + 1) + [0] * (d - m - j - 1), 0.05, rng.random()) for j in range(d - m)]
    return SlowSystem(np.asarray(S, float), m, ust, uwk)


# --- model and kinetic matrix ----------------------------------------------

def test_convexity_violation_is_model_error():
    with pytest.raises(ModelError):
        ConvexModel(np.diag([1.0, 20.0]), 10.0).hessian(np.zeros(2))
    with pytest.raises(ModelError):
        build_slow_system(ConvexModel(np.diag([1.0, 0.01]), 10.0), np.zeros(2),
                          OrderedBasis(((1, 0, 0), (0, 1, 0)), 1), decaying_hamiltonian(2, 7, 2))


@pytest.mark.parametrize(
    "vectors, expected",
    [
        (((1, 0, 0), (0, 1, 0)), [[1, 0], [0, 1]]),
        (((1, 0, 0), (1, 1, 0)), [[1, 1], [1, 2]]),
        (((1, 0, 1),), [[1]]),
    ],
)
def test_kinetic_matrix_examples(vectors, expected):
    B = OrderedBasis(vectors, 1)
    assert np.array_equal(kinetic_matrix(ID2, np.zeros(2), B), np.array(expected, float))


def test_kinetic_matrix_reconstruction():
    Q0 = np.array([[2.0, 0.3], [0.3, 1.0]])
    B = OrderedBasis(((1, 0, 0), (0, 11, 1)), 1)
    S = kinetic_matrix(ConvexModel(Q0, 10.0), np.zeros(2), B)
    P = np.array(B.vectors, float).T[:2]
    assert np.abs(S - P.T @ Q0 @ P).max() <= 1e-12


def test_strong_restriction_identity():
    H = decaying_hamiltonian(2, 8.0, 6, seed=1)
    B = OrderedBasis(((1, 0, 0), (0, 5, 1)), 1)
    sys = build_slow_system(ID2, np.zeros(2), B, H)
    strong = build_slow_system(ID2, np.zeros(2), OrderedBasis(B.strong, 1), H)
    assert np.array_equal(sys.strong_system().S, strong.S)
    assert np.array_equal(sys.ust.amps, strong.ust.amps)


def test_json_round_trip_is_bit_faithful():
    H = decaying_hamiltonian(2, 8.0, 5, seed=2)
    sys = build_slow_system(ID2, np.zeros(2), OrderedBasis(((1, 0, 0), (0, 5, 1)), 1), H)
    back = SlowSystem.from_json(json.loads(json.dumps(sys.to_json())))
    assert np.array_equal(back.S, sys.S)
    assert all(np.array_equal(a.amps, b.amps) for a, b in zip(back.uwk, sys.uwk))
    assert back.basis == sys.basis


# --- block decomposition ----------------------------------------------------

def test_two_by_two_example():
    dec = block_decomposition(np.array([[2.0, 1.0], [1.0, 2.0]]), 1)
    assert dec.A[0, 0] == 2 and dec.B[0, 0] == 1 and dec.C[0, 0] == 2
    assert dec.Ctilde[0, 0] == pytest.approx(1.5)
    assert np.allclose(dec.E, [[1, -0.5], [0, 1]])
    assert dec.ztilde[0] == pytest.approx(1.5)
    assert cbar(dec, [0.0, 1.0])[0] == pytest.approx(0.5)


def test_no_weak_part():
    dec = block_decomposition(np.array([[2.0, 1.0], [1.0, 2.0]]), 2)
    assert dec.Ctilde.size == 0 and np.array_equal(dec.E, np.eye(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_random_spd_decomposition(seed, d):
    rng = np.random.default_rng(seed)
    S = spd(rng, d)
    m = int(rng.integers(1, d))
    dec = block_decomposition(S, m)
    assert dec.diag_residual(S) <= 1e-10
    schur = S[m:, m:] - S[m:, :m] @ np.linalg.solve(S[:m, :m], S[:m, m:])
    assert np.abs(dec.Ctilde - schur).max() <= 1e-10
    assert np.linalg.eigvalsh(dec.Ctilde).min() > 0
    c = rng.normal(size=d)
    assert np.allclose(eta(dec, c)[:m], cbar(dec, c), atol=1e-12)


def test_cbar_trivial_cases():
    dec = block_decomposition(np.diag([2.0, 3.0]), 1)
    assert cbar(dec, [0.4, 7.0])[0] == 0.4
    dec = block_decomposition(np.array([[2.0, 1.0], [1.0, 2.0]]), 1)
    assert cbar(dec, [0.4, 0.0])[0] == 0.4


def test_ill_conditioned_raises():
    S = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]])
    with pytest.raises(ConditioningError):
        block_decomposition(S, 1)


# --- Lagrangian -------------------------------------------------------------

def test_split_eval_zero_case():
    sys = system_from_S(np.array([[2.0, 1.0], [1.0, 2.0]]), 1).with_weak([TrigPolynomial.zero(2)])
    sys = SlowSystem(sys.S, 1, TrigPolynomial.zero(1), sys.uwk)
    direct, coarse, fine, res = lagrangian_split_eval(sys, np.zeros(2), np.zeros((1, 2)), np.zeros((1, 2)))
    assert direct[0] == coarse[0] == fine[0] == 0.0 and res == 0.0


@pytest.mark.parametrize("d, m", [(2, 1), (3, 1), (4, 2)])
def test_split_eval_agreement(d, m):
    rng = np.random.default_rng(d * 10 + m)
    S = np.array([[2.0, 1.0], [1.0, 2.0]]) if d == 2 else spd(rng, d)
    sys = system_from_S(S, m)
    *_, res = lagrangian_split_eval(sys, rng.normal(size=d), rng.random((100, d)), rng.normal(size=(100, d)))
    assert res <= 1e-10


def test_legendre_involution():
    rng = np.random.default_rng(0)
    sys = system_from_S(spd(rng, 3), 1)
    L = sys.lagrangian()
    phi, v = rng.random((200, 3)), rng.normal(size=(200, 3))
    assert L.legendre_residual(phi, v) <= 1e-9
    assert np.allclose(L.hamiltonian(phi, L.momentum(v)), sys.hamiltonian(phi, L.momentum(v)))


# --- z~ bounds --------------------------------------------------------------

def test_ztilde_diagonal():
    S = np.diag([1.0, 4.0, 9.0])
    B = OrderedBasis(((1, 0, 0, 0), (0, 2, 0, 0), (0, 0, 3, 0)), 1)
    sys = SlowSystem(S, 1, TrigPolynomial.zero(1), [TrigPolynomial.zero(3)] * 2, basis=B)
    assert np.allclose(block_decomposition(sys).ztilde, [4.0, 9.0])
    assert ztilde_bound_check(sys).holds


def test_ztilde_family_slope():
    sizes, zinv = [5, 11, 23], []
    for mu in sizes:
        B = OrderedBasis(((1, 0, 0), (0, mu, 1)), 1)
        sys = slow_system_from_potentials(ID2, np.zeros(2), B, TrigPolynomial.zero(1), [TrigPolynomial.zero(2)])
        rep = ztilde_bound_check(sys)
        dec = block_decomposition(sys)
        assert rep.ztilde_inv[0] == pytest.approx(1 / dec.Ctilde[0, 0], rel=1e-12)
        zinv.append(rep.ztilde_inv[0])
    slope = np.polyfit(np.log(sizes), np.log(zinv), 1)[0]
    assert slope <= 2 + 0.3

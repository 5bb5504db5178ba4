import itertools
import math
import random

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st
from sympy.matrices.normalforms import smith_normal_form as sympy_snf

from rkit.errors import ContainmentError, DegenerateInputError, RankError
from rkit.lattice import (
    OrderedBasis,
    ResonanceLattice,
    adapted_basis,
    adapted_basis_report,
    column_hermite_form,
    elementary_divisors,
    gram_inverse_bound,
    homology_from_coordinates,
    induced_homology,
    integer_rank,
    is_irreducible,
    is_sublattice,
    is_z_basis,
    minor_gcd,
    relative_norm,
    relative_norm_bruteforce,
    saturate,
    smith_normal_form,
    successive_minima,
    supnorm,
)

small_int = st.integers(-9, 9)


def int_matrices(rows, cols):
    return st.lists(st.lists(small_int, min_size=cols, max_size=cols), min_size=rows, max_size=rows)


def random_instance(rng):
    """Random (Bst, L) pair with n <= 4, d <= 3, entries <= 20."""
    while True:
        n = rng.randint(2, 4)
        d = rng.randint(2, min(3, n))
        m = rng.randint(1, d - 1)
        gens = [tuple(rng.randint(-20, 20) for _ in range(n + 1)) for _ in range(d)]
        if integer_rank(gens) == d:
            L = saturate(gens)
            Lst = saturate(gens[:m])
            return OrderedBasis(tuple(Lst.generators), m), L


# --- Smith normal form -------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4).flatmap(lambda r: st.integers(1, 4).flatmap(lambda c: int_matrices(r, c))))
def test_snf_factorization_and_sympy_oracle(m):
    D, U, V = smith_normal_form(m)
    assert (np.array(U) @ np.array(m) @ np.array(V) == np.array(D)).all()
    assert abs(round(np.linalg.det(np.array(U, dtype=float)))) == 1
    assert abs(round(np.linalg.det(np.array(V, dtype=float)))) == 1
    ours = [x for x in elementary_divisors(m)]
    ref = sympy_snf(sympy.Matrix(m), domain=sympy.ZZ)
    theirs = [abs(int(ref[i, i])) for i in range(min(ref.shape)) if ref[i, i] != 0]
    assert ours == theirs
    for a, b in zip(ours, ours[1:]):
        assert b % a == 0


def test_hermite_form_is_canonical():
    a = column_hermite_form([(2, 2, 0), (0, 4, 2)])
    b = column_hermite_form([(2, 6, 2), (2, 2, 0)])
    assert a == b


# --- saturation and irreducibility -------------------------------------------

def test_saturate_trivial():
    assert saturate([(2, 0, 0)]) == ResonanceLattice(((1, 0, 0),))
    L = ResonanceLattice(((1, 0, 0), (0, 1, 0)))
    assert saturate(L) == L


def test_saturate_span_membership_oracle():
    gens = [(2, 2, 0), (0, 4, 2)]
    sat = saturate(gens)
    span_points = 0
    for k in itertools.product(range(-8, 9), repeat=3):
        if any(k) and integer_rank(gens + [k]) == 2:
            span_points += 1
            assert sat.contains(k)
    assert span_points > 0
    assert sat == ResonanceLattice(((1, 1, 0), (0, 2, 1)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3).flatmap(lambda d: int_matrices(d, 4)))
def test_saturate_idempotent(gens):
    if integer_rank(gens) != len(gens):
        with pytest.raises(DegenerateInputError):
            saturate(gens)
        return
    s1 = saturate(gens)
    assert saturate(s1) == s1
    assert is_irreducible(s1)
    assert is_sublattice(ResonanceLattice(tuple(map(tuple, gens))), s1)


def test_is_irreducible_examples():
    assert is_irreducible([(1, 0, 0)])
    assert not is_irreducible([(2, 0, 0)])
    gens = [(3, 1, 0), (1, 2, 1)]
    minors = [gens[0][i] * gens[1][j] - gens[0][j] * gens[1][i] for i, j in itertools.combinations(range(3), 2)]
    oracle = math.gcd(*minors) == 1
    assert is_irreducible(gens) == oracle
    assert minor_gcd(gens) == math.gcd(*minors)


def test_time_only_vector_detected():
    assert ResonanceLattice(((0, 0, 2),)).has_time_only_vector()
    assert ResonanceLattice(((1, 0, 1), (0, 0, 1))).has_time_only_vector()
    assert not ResonanceLattice(((1, 0, 1), (0, 1, 0))).has_time_only_vector()


# --- relative norm -----------------------------------------------------------

def test_relative_norm_examples():
    e1 = [(1, 0, 0)]
    assert relative_norm([(1, 0, 0), (0, 1, 0)], e1) == 1
    assert relative_norm([(1, 0, 0), (0, 5, 1)], e1) == 5
    assert relative_norm([(1, 0, 0), (0, 7, 3)], e1) == 7
    for L in ([(1, 0, 0), (0, 5, 1)], [(1, 0, 0), (0, 7, 3)]):
        assert relative_norm(L, e1) == relative_norm_bruteforce(L, e1, 8)


def test_relative_norm_errors():
    with pytest.raises(ContainmentError):
        relative_norm([(1, 0, 0)], [(0, 1, 0)])
    with pytest.raises(DegenerateInputError):
        relative_norm([(1, 0, 0)], [(1, 0, 0)])


def test_relative_norm_random_bruteforce():
    rng = random.Random(7)
    checked = 0
    while checked < 25:
        n = rng.randint(1, 2)
        gens = [tuple(rng.randint(-4, 4) for _ in range(n + 1)) for _ in range(2)]
        if integer_rank(gens) < 2:
            continue
        L = saturate(gens)
        Lst = saturate(gens[:1])
        M = relative_norm(L, Lst)
        assert M == relative_norm_bruteforce(L, Lst, M)
        checked += 1


# --- adapted bases -----------------------------------------------------------

def test_adapted_basis_trivial():
    B = adapted_basis(OrderedBasis(((1, 0, 0),), 1), [(1, 0, 0), (0, 1, 0)])
    assert B.vectors == ((1, 0, 0), (0, 1, 0))


def test_adapted_basis_dominant_example():
    L = ResonanceLattice(((1, 0, 0), (0, 5, 1)))
    B = adapted_basis(OrderedBasis(((1, 0, 0),), 1), L)
    (M2, w), = successive_minima(OrderedBasis(((1, 0, 0),), 1), L)
    assert M2 == 5 and supnorm(B.vectors[1]) == 5
    assert is_z_basis(B.vectors, L)


def test_adapted_basis_rejects_foreign_strong():
    with pytest.raises(ContainmentError):
        adapted_basis(OrderedBasis(((0, 0, 1),), 1), [(1, 0, 0), (0, 5, 1)])


def test_adapted_basis_random_inequalities():
    rng = random.Random(2024)
    for _ in range(15):
        Bst, L = random_instance(rng)
        r = adapted_basis_report(Bst, L)
        B = r["basis"]
        m, d = Bst.rank, L.rank
        assert B.vectors[:m] == Bst.vectors
        for j in range(m + 1, d + 1):
            assert is_z_basis(B.vectors[:j], saturate(B.vectors[:j]))
        Mbar = sum(supnorm(k) for k in Bst.vectors)
        for j, Mj in enumerate(r["minima"], start=m):
            assert supnorm(B.vectors[j]) <= Mbar + (d - m) * Mj
            for i in range(j):
                assert supnorm(B.vectors[i]) <= Mbar + (d - m) * supnorm(B.vectors[j])


def test_successive_minima_nondecreasing():
    rng = random.Random(5)
    for _ in range(10):
        Bst, L = random_instance(rng)
        norms = [M for M, _ in successive_minima(Bst, L)]
        assert norms == sorted(norms)


# --- homology and Gram bound -------------------------------------------------

def test_induced_homology_examples():
    assert homology_from_coordinates([(2, 3)]) == (3, -2)
    assert homology_from_coordinates([(1, 0)]) == (0, 1)
    h = homology_from_coordinates([(1, 0, 1), (0, 1, 1)])
    assert h == (1, 1, -1)
    with pytest.raises(RankError):
        homology_from_coordinates([(1, 0, 0)])


def test_induced_homology_from_bases():
    sup = OrderedBasis(((1, 0, 0), (0, 1, 0)), 1)
    sub = OrderedBasis(((2, 3, 0),), 1)
    assert induced_homology(sub, sup) == (3, -2)


@settings(max_examples=40, deadline=None)
@given(int_matrices(2, 3))
def test_homology_primitive_and_orthogonal(rows):
    if integer_rank(rows) != 2:
        return
    h = homology_from_coordinates(rows)
    assert math.gcd(*h) == 1
    assert all(sum(a * b for a, b in zip(r, h)) == 0 for r in rows)
    assert next(x for x in h if x) > 0


def test_gram_inverse_bound():
    assert gram_inverse_bound(np.eye(3, dtype=int))[0] == pytest.approx(1.0)
    sigma, holds = gram_inverse_bound([[1, 0], [0, 5]])
    assert sigma == pytest.approx(1.0) and holds
    with pytest.raises(RankError):
        gram_inverse_bound([[1, 2], [2, 4], [0, 0]])


@settings(max_examples=40, deadline=None)
@given(int_matrices(3, 2))
def test_gram_inverse_bound_eigen_oracle(rows):
    P = np.array(rows)
    if integer_rank(P.T.tolist()) != 2:
        return
    sigma, holds = gram_inverse_bound(P)
    ref = np.linalg.svd(P.astype(float), compute_uv=False).min()
    assert sigma == pytest.approx(ref, rel=1e-9, abs=1e-12)
    assert holds

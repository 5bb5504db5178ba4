"""Integer resonance lattices: saturation, relative norms, adapted bases.

All lattice arithmetic is exact (Python integers and ``fractions.Fraction``);
floating point only appears in enumeration radii, and every candidate found
by a float-pruned search is re-verified with integer arithmetic.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import BasisError, ContainmentError, DegenerateInputError, RankError

MAX_ENTRY = 10**6

IntMatrix = list[list[int]]


def supnorm(k: Sequence[int]) -> int:
    return max(abs(int(x)) for x in k)


def _as_int_matrix(rows) -> IntMatrix:
    out = [[int(x) for x in row] for row in rows]
    for row in out:
        for x in row:
            if abs(x) > MAX_ENTRY:
                raise DegenerateInputError(f"entry {x} exceeds {MAX_ENTRY}")
    return out


def _transpose(m: IntMatrix) -> IntMatrix:
    return [list(col) for col in zip(*m)] if m else []


def _identity(n: int) -> IntMatrix:
    return [[int(i == j) for j in range(n)] for i in range(n)]


def _matmul(a, b):
    bt = list(zip(*b))
    return [[sum(x * y for x, y in zip(row, col)) for col in bt] for row in a]


# ---------------------------------------------------------------------------
# Smith / Hermite normal forms
# ---------------------------------------------------------------------------

def smith_normal_form(m: Sequence[Sequence[int]]):
    """Return ``(D, U, V)`` with ``U @ m @ V == D`` and D in Smith form.

    U and V are unimodular. Diagonal entries are nonnegative and each divides
    the next.
    """
    a = _as_int_matrix(m)
    rows = len(a)
    cols = len(a[0]) if rows else 0
    U = _identity(rows)
    V = _identity(cols)

    def swap_rows(i, j):
        a[i], a[j] = a[j], a[i]
        U[i], U[j] = U[j], U[i]

    def swap_cols(i, j):
        for r in a:
            r[i], r[j] = r[j], r[i]
        for r in V:
            r[i], r[j] = r[j], r[i]

    def add_row(dst, src, f):
        # row_dst += f * row_src
        a[dst] = [x + f * y for x, y in zip(a[dst], a[src])]
        U[dst] = [x + f * y for x, y in zip(U[dst], U[src])]

    def add_col(dst, src, f):
        for r in a:
            r[dst] += f * r[src]
        for r in V:
            r[dst] += f * r[src]

    t = 0
    while t < min(rows, cols):
        nz = [(abs(a[i][j]), i, j) for i in range(t, rows) for j in range(t, cols) if a[i][j]]
        if not nz:
            break
        _, pi, pj = min(nz)
        swap_rows(t, pi)
        swap_cols(t, pj)
        while True:
            done = True
            for i in range(t + 1, rows):
                if a[i][t]:
                    q = a[i][t] // a[t][t]
                    add_row(i, t, -q)
                    if a[i][t]:
                        done = False
            for j in range(t + 1, cols):
                if a[t][j]:
                    q = a[t][j] // a[t][t]
                    add_col(j, t, -q)
                    if a[t][j]:
                        done = False
            if done:
                # divisibility of the remaining block
                bad = next(((i, j) for i in range(t + 1, rows) for j in range(t + 1, cols)
                            if a[i][j] % a[t][t]), None)
                if bad is None:
                    break
                add_row(t, bad[0], 1)
                continue
            nz = [(abs(a[i][t]), i, t) for i in range(t, rows) if a[i][t]]
            nz += [(abs(a[t][j]), t, j) for j in range(t, cols) if a[t][j]]
            _, pi, pj = min(nz)
            swap_rows(t, pi)
            swap_cols(t, pj)
        if a[t][t] < 0:
            a[t] = [-x for x in a[t]]
            U[t] = [-x for x in U[t]]
        t += 1
    return a, U, V


def elementary_divisors(m) -> list[int]:
    D, _, _ = smith_normal_form(m)
    return [D[i][i] for i in range(min(len(D), len(D[0]) if D else 0)) if D[i][i]]


def integer_rank(m) -> int:
    return len(elementary_divisors(m))


def _inverse_unimodular(U: IntMatrix) -> IntMatrix:
    n = len(U)
    aug = [[Fraction(x) for x in row] + [Fraction(int(i == j)) for j in range(n)]
           for i, row in enumerate(U)]
    for c in range(n):
        p = next(r for r in range(c, n) if aug[r][c] != 0)
        aug[c], aug[p] = aug[p], aug[c]
        piv = aug[c][c]
        aug[c] = [x / piv for x in aug[c]]
        for r in range(n):
            if r != c and aug[r][c] != 0:
                f = aug[r][c]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[c])]
    inv = [[aug[i][n + j] for j in range(n)] for i in range(n)]
    out = []
    for row in inv:
        if any(x.denominator != 1 for x in row):
            raise RankError("matrix is not unimodular")
        out.append([int(x) for x in row])
    return out


def column_hermite_form(cols: Sequence[Sequence[int]]) -> IntMatrix:
    """Canonical basis of the lattice spanned by ``cols``.

    Returns the nonzero columns (as a list of vectors) of the column-style
    Hermite normal form: lower echelon, positive pivots, entries to the left
    of a pivot reduced into ``[0, pivot)``. Two generating sets span the same
    lattice iff their Hermite forms coincide.
    """
    vecs = [list(map(int, c)) for c in cols]
    if not vecs:
        return []
    n = len(vecs[0])
    basis: list[list[int]] = []
    work = [v for v in vecs if any(v)]
    row = 0
    pivots = []
    while work and row < n:
        active = [v for v in work if v[row]]
        rest = [v for v in work if not v[row]]
        if not active:
            row += 1
            continue
        while len(active) > 1:
            active.sort(key=lambda v: abs(v[row]))
            p = active[0]
            nxt = [p]
            for v in active[1:]:
                q = v[row] // p[row]
                w = [x - q * y for x, y in zip(v, p)]
                if w[row]:
                    nxt.append(w)
                elif any(w):
                    rest.append(w)
            active = nxt
        p = active[0]
        if p[row] < 0:
            p = [-x for x in p]
        basis.append(p)
        pivots.append(row)
        work = rest
        row += 1
    # reduce entries at earlier pivot rows
    for j in range(len(basis)):
        for i in range(j):
            r = pivots[j]
            piv = basis[j][r]
            q = basis[i][r] // piv
            if q:
                basis[i] = [x - q * y for x, y in zip(basis[i], basis[j])]
    return basis


def integer_kernel(rows: Sequence[Sequence[int]]) -> IntMatrix:
    """Z-basis (list of vectors) of ``{h in Z^s : rows @ h = 0}``."""
    a = _as_int_matrix(rows)
    s = len(a[0])
    D, _, V = smith_normal_form(a)
    r = sum(1 for i in range(min(len(D), s)) if D[i][i])
    return [[V[i][j] for i in range(s)] for j in range(r, s)]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResonanceLattice:
    """Sublattice of Z^{n+1} given by integer generators (stored as vectors)."""

    generators: tuple[tuple[int, ...], ...]
    ambient_dim: int = field(default=0)

    def __post_init__(self):
        gens = tuple(tuple(int(x) for x in g) for g in self.generators)
        if not gens:
            raise DegenerateInputError("lattice needs at least one generator")
        dim = len(gens[0])
        if any(len(g) != dim for g in gens):
            raise DegenerateInputError("generators have inconsistent lengths")
        if dim < 2:
            raise DegenerateInputError("ambient dimension must be at least 2")
        _as_int_matrix(gens)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "ambient_dim", dim)

    @classmethod
    def from_json(cls, obj: dict) -> "ResonanceLattice":
        lat = cls(tuple(map(tuple, obj["generators"])))
        if "ambient_dim" in obj and obj["ambient_dim"] != lat.ambient_dim:
            raise DegenerateInputError("ambient_dim does not match generators")
        return lat

    def to_json(self) -> dict:
        return {"ambient_dim": self.ambient_dim, "generators": [list(g) for g in self.generators]}

    @property
    def rank(self) -> int:
        return integer_rank(self.generators)

    def matrix(self) -> np.ndarray:
        """Generators as columns, shape (n+1, d)."""
        return np.array(self.generators, dtype=np.int64).T

    def canonical(self) -> IntMatrix:
        return column_hermite_form(self.generators)

    def __eq__(self, other):
        if not isinstance(other, ResonanceLattice):
            return NotImplemented
        return self.ambient_dim == other.ambient_dim and self.canonical() == other.canonical()

    def __hash__(self):
        return hash(tuple(map(tuple, self.canonical())))

    def contains(self, k: Sequence[int]) -> bool:
        return self.coordinates(k) is not None

    def coordinates(self, k: Sequence[int]) -> list[int] | None:
        """Integer coordinates of k in the Hermite basis, or None if k is not in the lattice."""
        basis = self.canonical()
        rest = [int(x) for x in k]
        coeffs = []
        row = 0
        for b in basis:
            while b[row] == 0:
                if rest[row]:
                    return None
                row += 1
            if rest[row] % b[row]:
                return None
            q = rest[row] // b[row]
            coeffs.append(q)
            rest = [x - q * y for x, y in zip(rest, b)]
            row += 1
        return coeffs if not any(rest) else None

    def has_time_only_vector(self) -> bool:
        """True if the rational span meets the k^0 axis, i.e. the resonance condition fails."""
        # (0,...,0,1) in span_R iff adding it does not raise the rank
        e = [0] * (self.ambient_dim - 1) + [1]
        return integer_rank(list(self.generators) + [e]) == self.rank


@dataclass(frozen=True)
class OrderedBasis:
    vectors: tuple[tuple[int, ...], ...]
    split_index: int = 0

    def __post_init__(self):
        vecs = tuple(tuple(int(x) for x in v) for v in self.vectors)
        object.__setattr__(self, "vectors", vecs)
        if not 0 <= self.split_index <= len(vecs):
            raise BasisError("split index out of range")
        if vecs and integer_rank(vecs) != len(vecs):
            raise BasisError("basis vectors are linearly dependent")

    @property
    def rank(self) -> int:
        return len(self.vectors)

    @property
    def strong(self) -> tuple[tuple[int, ...], ...]:
        return self.vectors[: self.split_index]

    @property
    def weak(self) -> tuple[tuple[int, ...], ...]:
        return self.vectors[self.split_index:]

    def lattice(self) -> ResonanceLattice:
        return ResonanceLattice(self.vectors)

    def prefix(self, j: int) -> "OrderedBasis":
        return OrderedBasis(self.vectors[:j], min(self.split_index, j))

    def matrix(self) -> np.ndarray:
        return np.array(self.vectors, dtype=np.int64).T

    def to_json(self) -> dict:
        return {"vectors": [list(v) for v in self.vectors], "split_index": self.split_index}

    @classmethod
    def from_json(cls, obj: dict) -> "OrderedBasis":
        return cls(tuple(map(tuple, obj["vectors"])), int(obj.get("split_index", 0)))


def _lattice(x) -> ResonanceLattice:
    if isinstance(x, ResonanceLattice):
        return x
    if isinstance(x, OrderedBasis):
        return x.lattice()
    return ResonanceLattice(tuple(map(tuple, x)))


# ---------------------------------------------------------------------------
# Saturation and irreducibility
# ---------------------------------------------------------------------------

def saturate(L) -> ResonanceLattice:
    """Smallest irreducible lattice of the same rank containing L."""
    L = _lattice(L)
    d = len(L.generators)
    if L.rank != d:
        raise DegenerateInputError("generators are not linearly independent")
    # columns of G: G = U^{-1} D V^{-1}, so span_R G = span_R of first d cols of U^{-1}
    G = _transpose([list(g) for g in L.generators])
    _, U, _ = smith_normal_form(G)
    Uinv = _inverse_unimodular(U)
    cols = [[Uinv[i][j] for i in range(len(Uinv))] for j in range(d)]
    return ResonanceLattice(tuple(map(tuple, column_hermite_form(cols))))


def minor_gcd(L) -> int:
    """gcd of all maximal minors of the generator matrix (exact)."""
    L = _lattice(L)
    gens = [list(g) for g in L.generators]
    d = len(gens)
    g = 0
    for rows in itertools.combinations(range(L.ambient_dim), d):
        sub = [[gens[j][i] for j in range(d)] for i in rows]
        g = math.gcd(g, abs(_det_int(sub)))
    return g


def _det_int(m) -> int:
    n = len(m)
    a = [[Fraction(x) for x in row] for row in m]
    det = Fraction(1)
    for c in range(n):
        p = next((r for r in range(c, n) if a[r][c] != 0), None)
        if p is None:
            return 0
        if p != c:
            a[c], a[p] = a[p], a[c]
            det = -det
        det *= a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] / a[c][c]
            if f:
                a[r] = [x - f * y for x, y in zip(a[r], a[c])]
    return int(det)


def is_irreducible(L) -> bool:
    L = _lattice(L)
    gens = L.generators
    if integer_rank(gens) != len(gens):
        # dependent generators: compare with the saturation of a basis
        basis = column_hermite_form(gens)
        return all(d == 1 for d in elementary_divisors(basis))
    return all(d == 1 for d in elementary_divisors(gens))


def is_z_basis(vectors, L) -> bool:
    """Smith check: ``vectors`` are independent and generate exactly the lattice L."""
    L = _lattice(L)
    vectors = [tuple(map(int, v)) for v in vectors]
    if integer_rank(vectors) != len(vectors):
        return False
    if not all(L.contains(v) for v in vectors):
        return False
    return ResonanceLattice(tuple(vectors)) == L


def is_sublattice(sub, sup) -> bool:
    sub, sup = _lattice(sub), _lattice(sup)
    return all(sup.contains(g) for g in sub.generators)


def in_real_span(k: Sequence[int], vectors) -> bool:
    vectors = [list(v) for v in vectors]
    if not vectors:
        return not any(k)
    return integer_rank(vectors + [list(k)]) == integer_rank(vectors)


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------

def gram_inverse_bound(P) -> tuple[float, bool]:
    """Smallest singular value of an integer matrix with independent columns.

    Returns ``(sigma_min, holds)`` where ``holds`` reports whether
    ``sigma_min >= 1 / (c_n * prod |k_i|)`` with :func:`c_n`.
    """
    P = np.asarray(P, dtype=np.int64)
    if P.ndim != 2:
        raise RankError("expected a matrix")
    cols = [tuple(P[:, j]) for j in range(P.shape[1])]
    if integer_rank(cols) != P.shape[1]:
        raise RankError("columns are linearly dependent")
    G = P.T.astype(float) @ P.astype(float)
    lam = np.linalg.eigvalsh(G)
    sigma = float(math.sqrt(max(lam[0], 0.0)))
    n = P.shape[0] - 1
    bound = 1.0 / (c_n(n) * math.prod(supnorm(c) for c in cols))
    return sigma, sigma >= bound * (1 - 1e-12)


def c_n(n: int) -> float:
    """Constant for the lower bound on the smallest singular value.

    With s <= n+1 columns, trace((P^T P)^{-1}) <= sum_i prod_{j != i} |k_j|_2^2
    (Cramer + Hadamard) <= s (n+1)^{s-1} prod |k_j|^2, and s (n+1)^{s-1} <= (n+1)^{n+1}.
    """
    return float((n + 1) ** ((n + 1) / 2))


def lll_reduce(gens, delta: Fraction = Fraction(3, 4)) -> list[tuple[int, ...]]:
    """LLL-reduced basis of the lattice spanned by independent integer vectors (exact arithmetic)."""
    b = [list(map(int, g)) for g in gens]
    n = len(b)
    if n == 0:
        return []

    def dot(u, v):
        return sum(x * y for x, y in zip(u, v))

    def gso():
        bs: list[list[Fraction]] = []
        mu = [[Fraction(0)] * n for _ in range(n)]
        for i in range(n):
            v = [Fraction(x) for x in b[i]]
            for j in range(i):
                mu[i][j] = dot(b[i], bs[j]) / dot(bs[j], bs[j])
                v = [x - mu[i][j] * y for x, y in zip(v, bs[j])]
            bs.append(v)
        return bs, mu

    bs, mu = gso()
    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = round(mu[k][j])
            if q:
                b[k] = [x - q * y for x, y in zip(b[k], b[j])]
                bs, mu = gso()
        if dot(bs[k], bs[k]) >= (delta - mu[k][k - 1] ** 2) * dot(bs[k - 1], bs[k - 1]):
            k += 1
        else:
            b[k], b[k - 1] = b[k - 1], b[k]
            bs, mu = gso()
            k = max(k - 1, 1)
    return [tuple(v) for v in b]


def enumerate_lattice_points(gens, radius: int) -> list[tuple[int, ...]]:
    """All nonzero lattice points with sup-norm <= radius, sign-normalized, sorted.

    Each point appears once up to sign (first nonzero entry positive).
    Coefficients are searched with Fincke-Pohst in the ell^2 ball of radius
    sqrt(n+1) * radius, which contains the sup-norm ball.
    """
    gens = lll_reduce(gens)
    P = np.array(gens, dtype=float).T
    dim, d = P.shape
    r2 = dim * float(radius) ** 2 * (1 + 1e-9) + 1e-9
    # Gram-Schmidt on columns
    G = P.T @ P
    Lc = np.linalg.cholesky(G)  # G = Lc Lc^T ; quadratic form q(a) = |Lc^T a|^2
    R = Lc.T  # upper triangular
    out = set()
    a = [0] * d

    def rec(i, partial):
        # choose a[i] given a[i+1:]; term i: (R[i,i] a_i + sum_{j>i} R[i,j] a_j)^2
        shift = sum(R[i, j] * a[j] for j in range(i + 1, d))
        rem = r2 - partial
        if rem < 0:
            return
        half = math.sqrt(rem) / R[i, i]
        center = -shift / R[i, i]
        lo = math.ceil(center - half - 1e-9)
        hi = math.floor(center + half + 1e-9)
        for ai in range(lo, hi + 1):
            a[i] = ai
            t = R[i, i] * ai + shift
            if i == 0:
                if any(a):
                    k = tuple(sum(gens[j][c] * a[j] for j in range(d)) for c in range(dim))
                    if supnorm(k) <= radius:
                        out.add(sign_normalize(k))
            else:
                rec(i - 1, partial + t * t)
        a[i] = 0

    rec(d - 1, 0.0)
    return sorted(out, key=lambda k: (supnorm(k), k))


def sign_normalize(k: Sequence[int]) -> tuple[int, ...]:
    k = tuple(int(x) for x in k)
    for x in k:
        if x:
            return k if x > 0 else tuple(-y for y in k)
    return k


def _min_outside(L: ResonanceLattice, inside: Sequence[Sequence[int]]) -> tuple[int, tuple[int, ...]]:
    """Minimal sup-norm vector of L outside span_R(inside); ties broken lexicographically."""
    reduced = lll_reduce(L.canonical())
    witnesses = [g for g in reduced if not in_real_span(g, inside)]
    if not witnesses:
        raise DegenerateInputError("no lattice vector outside the given span")
    radius = min(supnorm(g) for g in witnesses)
    cands = enumerate_lattice_points(reduced, radius)
    inside = [list(v) for v in inside]
    normals = _orthogonal_complement(inside, L.ambient_dim) if inside else None
    best = None
    for k in cands:
        if normals is not None and all(sum(a * b for a, b in zip(nrm, k)) == 0 for nrm in normals):
            continue
        if normals is None and not any(k):
            continue
        key = (supnorm(k), k)
        if best is None or key < best:
            best = key
    assert best is not None
    return best[0], best[1]


def _orthogonal_complement(vectors, dim) -> IntMatrix:
    """Integer vectors n with n . v = 0 for all v; span_R(vectors) = their common kernel."""
    return integer_kernel(vectors) if vectors else _identity(dim)


def relative_norm(L, Lst) -> int:
    """M(L | Lst) = min sup-norm over L minus Lst."""
    return relative_norm_witness(L, Lst)[0]


def relative_norm_witness(L, Lst) -> tuple[int, tuple[int, ...]]:
    L, Lst = _lattice(L), _lattice(Lst)
    if not is_sublattice(Lst, L):
        raise ContainmentError("strong lattice is not contained in the lattice")
    if Lst.rank >= L.rank:
        raise DegenerateInputError("ranks must satisfy rank(Lst) < rank(L)")
    # L \ Lst vs L \ span_R(Lst): equal when Lst is irreducible (within L's saturation)
    return _min_outside(L, [list(g) for g in Lst.canonical()])


def relative_norm_bruteforce(L, Lst, radius: int) -> int | None:
    """Oracle: min sup-norm of integer points of L outside Lst within a sup-norm box."""
    L, Lst = _lattice(L), _lattice(Lst)
    best = None
    dim = L.ambient_dim
    for k in itertools.product(range(-radius, radius + 1), repeat=dim):
        if not any(k):
            continue
        if L.contains(k) and not Lst.contains(k):
            s = supnorm(k)
            if best is None or s < best:
                best = s
    return best


# ---------------------------------------------------------------------------
# Adapted bases
# ---------------------------------------------------------------------------

def successive_minima(Bst: OrderedBasis, L) -> list[tuple[int, tuple[int, ...]]]:
    """The vectors k'_{m+1..d} and their norms M_j."""
    L = saturate(_lattice(L))
    chosen = [list(v) for v in Bst.vectors]
    out = []
    for _ in range(L.rank - len(chosen)):
        M, k = _min_outside(L, chosen)
        out.append((M, k))
        chosen.append(list(k))
    return out


def _triangular_form(X: list[list[Fraction]]) -> list[list[Fraction]]:
    """Upper-triangular basis of the rational lattice spanned by columns of X.

    Basis vector j has support in coordinates 0..j, minimal positive j-th
    entry, and entries i<j reduced into [0, b_i[i]).
    """
    d = len(X)
    den = 1
    for row in X:
        for x in row:
            den = den * x.denominator // math.gcd(den, x.denominator)
    cols = [[int(X[i][j] * den) for i in range(d)] for j in range(len(X[0]))]
    # eliminate from the last coordinate upward
    basis: list[list[int] | None] = [None] * d
    work = [c for c in cols if any(c)]
    for row in range(d - 1, -1, -1):
        active = [v for v in work if v[row]]
        rest = [v for v in work if not v[row]]
        while len(active) > 1:
            active.sort(key=lambda v: abs(v[row]))
            p = active[0]
            nxt = [p]
            for v in active[1:]:
                q = v[row] // p[row]
                w = [x - q * y for x, y in zip(v, p)]
                if w[row]:
                    nxt.append(w)
                elif any(w):
                    rest.append(w)
            active = nxt
        if not active:
            raise RankError("coordinate lattice is not full rank")
        p = active[0]
        if p[row] < 0:
            p = [-x for x in p]
        basis[row] = p
        work = rest
    B = [b for b in basis]  # type: ignore[assignment]
    for j in range(d):
        for i in range(j - 1, -1, -1):
            piv = B[i][i]
            q = B[j][i] // piv
            if q:
                B[j] = [x - q * y for x, y in zip(B[j], B[i])]
    return [[Fraction(x, den) for x in b] for b in B]


def _solve_rational(K: list[list[int]], targets: list[list[int]]) -> list[list[Fraction]]:
    """Coordinates of each target in the (independent) columns K; exact."""
    dim = len(K[0])
    d = len(K)
    cols = []
    for t in targets:
        # least-squares normal equations are exact for vectors in the span
        G = [[Fraction(sum(K[i][c] * K[j][c] for c in range(dim))) for j in range(d)] for i in range(d)]
        rhs = [Fraction(sum(K[i][c] * t[c] for c in range(dim))) for i in range(d)]
        aug = [G[i] + [rhs[i]] for i in range(d)]
        for c in range(d):
            p = next(r for r in range(c, d) if aug[r][c] != 0)
            aug[c], aug[p] = aug[p], aug[c]
            piv = aug[c][c]
            aug[c] = [x / piv for x in aug[c]]
            for r in range(d):
                if r != c and aug[r][c] != 0:
                    f = aug[r][c]
                    aug[r] = [x - f * y for x, y in zip(aug[r], aug[c])]
        sol = [aug[i][d] for i in range(d)]
        check = [sum(sol[i] * K[i][c] for i in range(d)) for c in range(dim)]
        if check != [Fraction(x) for x in t]:
            raise ContainmentError("vector not in the span of the basis")
        cols.append(sol)
    # return as d x len(targets) matrix
    return [[cols[j][i] for j in range(len(targets))] for i in range(d)]


def adapted_basis(Bst: OrderedBasis, L) -> OrderedBasis:
    """Extend a basis of the strong lattice to a nice basis of L.

    Weak vectors come from successive minima relative to the growing span,
    then are turned into a Z-basis by the triangular reduction with
    coefficients ``0 <= c_{j,i} < 1`` and ``0 < c_j <= 1``.
    """
    L = _lattice(L)
    if not is_irreducible(L):
        raise DegenerateInputError("lattice must be irreducible")
    if not Bst.vectors:
        Bst = OrderedBasis((), 0)
    if Bst.vectors and not is_sublattice(Bst.lattice(), L):
        raise ContainmentError("strong basis is not contained in the lattice")
    if Bst.vectors and not is_irreducible(Bst.lattice()):
        raise ContainmentError("strong basis does not span an irreducible lattice")
    m = len(Bst.vectors)
    if m >= L.rank:
        raise DegenerateInputError("strong rank must be smaller than lattice rank")
    minima = successive_minima(Bst, L)
    kprime = [list(v) for v in Bst.vectors] + [list(k) for _, k in minima]
    basis_L = L.canonical()
    X = _solve_rational(kprime, basis_L)
    T = _triangular_form(X)
    vecs = []
    for b in T:
        v = [sum(b[i] * kprime[i][c] for i in range(len(kprime))) for c in range(L.ambient_dim)]
        if any(x.denominator != 1 for x in v):
            raise BasisError("triangular reduction produced a non-integer vector")
        vecs.append(tuple(int(x) for x in v))
    return OrderedBasis(tuple(vecs), m)


def adapted_basis_report(Bst: OrderedBasis, L) -> dict:
    """Adapted basis plus the norm inequalities it must satisfy."""
    B = adapted_basis(Bst, L)
    minima = successive_minima(Bst, L)
    m, d = B.split_index, B.rank
    Mbar = sum(supnorm(k) for k in B.strong)
    norms = [supnorm(k) for k in B.vectors]
    Ms = [M for M, _ in minima]
    item1 = all(norms[j] <= Mbar + (d - m) * Ms[j - m] for j in range(m, d))
    item2 = all(norms[i] <= Mbar + (d - m) * norms[j] for j in range(m, d) for i in range(m, j))
    lat = saturate(_lattice(L))
    prefix_ok = all(
        is_z_basis(B.vectors[:j], saturate(ResonanceLattice(B.vectors[:j]))) for j in range(1, d + 1)
    ) and is_z_basis(B.vectors, lat)
    return {
        "basis": B,
        "minima": Ms,
        "witnesses": [k for _, k in minima],
        "Mbar": Mbar,
        "norms": norms,
        "norm_bound_item1": item1,
        "norm_bound_item2": item2,
        "prefix_z_basis": prefix_ok,
        "strong_unchanged": tuple(B.strong) == tuple(Bst.vectors),
    }


# ---------------------------------------------------------------------------
# Induced homology
# ---------------------------------------------------------------------------

def induced_homology(B_sub: OrderedBasis, B_sup: OrderedBasis) -> tuple[int, ...]:
    """Primitive h in Z^s with a_i . h = 0, a_i the coordinates of B_sub in B_sup."""
    s = B_sup.rank
    if B_sub.rank != s - 1:
        raise RankError("sub-basis must have rank one less than the super-basis")
    coords = _solve_rational([list(v) for v in B_sup.vectors], [list(v) for v in B_sub.vectors])
    rows = []
    for i in range(B_sub.rank):
        row = [coords[j][i] for j in range(s)]
        if any(x.denominator != 1 for x in row):
            raise ContainmentError("sub-basis is not in the lattice of the super-basis")
        rows.append([int(x) for x in row])
    return homology_from_coordinates(rows)


def homology_from_coordinates(rows: Sequence[Sequence[int]]) -> tuple[int, ...]:
    ker = integer_kernel(rows)
    if len(ker) != 1:
        raise RankError(f"kernel has dimension {len(ker)}, expected 1")
    h = ker[0]
    g = reduce(math.gcd, (abs(x) for x in h))
    h = [x // g for x in h]
    return sign_normalize(h)

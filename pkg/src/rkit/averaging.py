"""Finite Fourier models, lattice projections and weak-potential bookkeeping.

A perturbation ``H1`` is stored by its Fourier coefficients at the working
point ``p0``. Projecting onto a lattice basis ``B = [k_1..k_d]`` keeps the
modes lying in the lattice and re-indexes them by their integer coordinates,
giving a trigonometric polynomial on ``T^d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import BasisError, ModelError, RegularityError
from .lattice import OrderedBasis, is_irreducible, supnorm

TWO_PI = 2.0 * math.pi


def _merge_terms(idx: np.ndarray, amps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum duplicate indices and drop exact zeros; output sorted lexicographically."""
    if len(idx) == 0:
        return idx.reshape(0, idx.shape[1] if idx.ndim == 2 else 0), amps.reshape(0)
    R = int(np.abs(idx).max())
    dims = (2 * R + 1,) * idx.shape[1]
    keys = np.ravel_multi_index(tuple((idx + R).T), dims)
    uniq, inv = np.unique(keys, return_inverse=True)
    out = np.zeros(len(uniq), dtype=complex)
    np.add.at(out, inv.reshape(-1), amps)
    keep = out != 0
    rows = np.stack(np.unravel_index(uniq[keep], dims), axis=1) - R
    return rows.astype(np.int64).reshape(-1, idx.shape[1]), out[keep]


def _hermitian_defect(idx: np.ndarray, amps: np.ndarray) -> float:
    """max |a_{-l} - conj(a_l)| over the support (missing partners count as 0)."""
    if len(idx) == 0:
        return 0.0
    R = int(np.abs(idx).max())
    dims = (2 * R + 1,) * idx.shape[1]
    keys = np.ravel_multi_index(tuple((idx + R).T), dims)
    neg = np.ravel_multi_index(tuple((R - idx).T), dims)
    order = np.argsort(keys)
    pos = np.searchsorted(keys[order], neg)
    pos = np.minimum(pos, len(keys) - 1)
    found = keys[order][pos] == neg
    partner = np.where(found, amps[order][pos], 0.0)
    return float(np.abs(partner - np.conj(amps)).max())


@dataclass(frozen=True, eq=False)
class TrigPolynomial:
    """Real trigonometric polynomial ``f(phi) = sum_l a_l exp(2 pi i l . phi)`` on ``T^d``."""

    torus_dim: int
    indices: np.ndarray = field(repr=False)
    amps: np.ndarray = field(repr=False)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, self.torus_dim)
        amps = np.asarray(self.amps, dtype=complex).reshape(-1)
        if len(idx) != len(amps):
            raise ModelError("indices and amplitudes differ in length")
        idx, amps = _merge_terms(idx, amps)
        idx.setflags(write=False)
        amps.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "amps", amps)

    # construction -----------------------------------------------------------
    @classmethod
    def zero(cls, d: int) -> "TrigPolynomial":
        return cls(d, np.zeros((0, d), dtype=np.int64), np.zeros(0, dtype=complex))

    @classmethod
    def cosine(cls, l: Sequence[int], amplitude: float = 1.0, phase: float = 0.0) -> "TrigPolynomial":
        """``amplitude * cos(2 pi l . phi + phase)``."""
        l = np.asarray(l, dtype=np.int64)
        a = 0.5 * amplitude * np.exp(1j * phase)
        if not l.any():
            return cls(len(l), l[None, :], np.array([amplitude * math.cos(phase)]))
        return cls(len(l), np.stack([l, -l]), np.array([a, np.conj(a)]))

    @classmethod
    def from_terms(cls, d: int, terms: dict) -> "TrigPolynomial":
        if not terms:
            return cls.zero(d)
        idx = np.array([list(k) for k in terms], dtype=np.int64)
        return cls(d, idx, np.array(list(terms.values()), dtype=complex))

    def to_json(self) -> dict:
        return {
            "torus_dim": self.torus_dim,
            "terms": [
                {"l": [int(x) for x in l], "re": float(a.real), "im": float(a.imag)}
                for l, a in zip(self.indices, self.amps)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrigPolynomial":
        d = int(obj["torus_dim"])
        terms = obj.get("terms", [])
        idx = np.array([t["l"] for t in terms], dtype=np.int64).reshape(-1, d)
        amps = np.array([complex(t["re"], t["im"]) for t in terms], dtype=complex)
        return cls(d, idx, amps)

    # algebra ----------------------------------------------------------------
    def __add__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        if other.torus_dim != self.torus_dim:
            raise ModelError("torus dimensions differ")
        return TrigPolynomial(
            self.torus_dim,
            np.concatenate([self.indices, other.indices]),
            np.concatenate([self.amps, other.amps]),
        )

    def __neg__(self) -> "TrigPolynomial":
        return TrigPolynomial(self.torus_dim, self.indices, -self.amps)

    def __sub__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        return self + (-other)

    def scale(self, s: float) -> "TrigPolynomial":
        return TrigPolynomial(self.torus_dim, self.indices, s * self.amps)

    def embed(self, d: int) -> "TrigPolynomial":
        """Same function viewed on ``T^d`` (trailing angles ignored)."""
        if d < self.torus_dim:
            raise ModelError("cannot embed into a smaller torus")
        pad = np.zeros((len(self.indices), d - self.torus_dim), dtype=np.int64)
        return TrigPolynomial(d, np.hstack([self.indices, pad]), self.amps)

    def truncate(self, d: int) -> "TrigPolynomial":
        """Drop trailing axes; requires zero coefficients on them."""
        if np.any(self.indices[:, d:]):
            raise ModelError("polynomial depends on the dropped angles")
        return TrigPolynomial(d, self.indices[:, :d], self.amps)

    def is_zero(self) -> bool:
        return len(self.amps) == 0

    def active_axes(self) -> list[int]:
        return [i for i in range(self.torus_dim) if np.any(self.indices[:, i])]

    def hermitian_defect(self) -> float:
        return _hermitian_defect(self.indices, self.amps)

    def coefficient_mass(self) -> float:
        return float(np.abs(self.amps).sum())

    def max_index(self) -> int:
        return int(np.abs(self.indices).max()) if len(self.indices) else 0

    # evaluation -------------------------------------------------------------
    def evaluate(self, phi, order: int = 0, chunk: int = 4096):
        """Values (and derivatives up to ``order``) at points ``phi`` of shape (N, d).

        Returns ``f`` with shape (N,), plus ``grad`` (N, d) when order >= 1 and
        ``hess`` (N, d, d) when order >= 2.
        """
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        N, d = phi.shape
        if d != self.torus_dim:
            raise ModelError(f"expected points in T^{self.torus_dim}, got dimension {d}")
        f = np.zeros(N)
        g = np.zeros((N, d)) if order >= 1 else None
        h = np.zeros((N, d, d)) if order >= 2 else None
        if self.is_zero():
            return (f, g, h)[: order + 1] if order else f
        L = self.indices.astype(float)
        for s in range(0, N, chunk):
            E = np.exp(1j * TWO_PI * (phi[s:s + chunk] @ L.T))
            Ea = E * self.amps
            f[s:s + chunk] = Ea.sum(axis=1).real
            if order >= 1:
                g[s:s + chunk] = -TWO_PI * (Ea @ L).imag
            if order >= 2:
                h[s:s + chunk] = -(TWO_PI**2) * np.einsum("nk,ki,kj->nij", Ea, L, L).real
        if order == 0:
            return f
        return (f, g, h)[: order + 1]

    def __call__(self, phi):
        return self.evaluate(phi)

    def imag_residual(self, phi) -> float:
        """Largest imaginary part of the raw complex sum (zero for real polynomials)."""
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        if self.is_zero():
            return 0.0
        E = np.exp(1j * TWO_PI * (phi @ self.indices.T.astype(float)))
        return float(np.abs((E @ self.amps).imag).max())

    def grid_derivatives(self, N: int) -> np.ndarray:
        """Max abs of f, every first and every second partial derivative on the N^d grid.

        Returned as a flat array [f, d_1..d_d, d_11, d_12, ...]; the grid sum is
        a separable matrix product over axes.
        """
        d = self.torus_dim
        if self.is_zero():
            return np.zeros(1 + d + d * (d + 1) // 2)
        lo = self.indices.min(axis=0)
        hi = self.indices.max(axis=0)
        shape = tuple(int(x) for x in hi - lo + 1)
        grid = np.arange(N) / N
        axes_E = [np.exp(1j * TWO_PI * np.outer(np.arange(lo[i], hi[i] + 1), grid)) for i in range(d)]

        def grid_sum(weights):
            T = np.zeros(shape, dtype=complex)
            np.add.at(T, tuple((self.indices - lo).T), self.amps * weights)
            for i in range(d):
                T = np.tensordot(T, axes_E[i], axes=([0], [0]))
            return T.real

        L = self.indices.astype(float)
        out = [np.abs(grid_sum(np.ones(len(self.amps)))).max()]
        for i in range(d):
            out.append(np.abs(grid_sum(1j * TWO_PI * L[:, i])).max())
        for i in range(d):
            for j in range(i, d):
                out.append(np.abs(grid_sum(-(TWO_PI**2) * L[:, i] * L[:, j])).max())
        return np.array(out)


@dataclass(frozen=True, eq=False)
class FourierHamiltonian:
    """Perturbation ``H1(theta, t) = sum_k h_k exp(2 pi i k . (theta, t))`` frozen at ``p0``."""

    ambient_dim: int
    indices: np.ndarray = field(repr=False)
    amps: np.ndarray = field(repr=False)
    declared_regularity: float = 0.0

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, self.ambient_dim)
        amps = np.asarray(self.amps, dtype=complex).reshape(-1)
        if self.ambient_dim < 2:
            raise ModelError("ambient dimension must be at least 2")
        idx, amps = _merge_terms(idx, amps)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "amps", amps)

    @property
    def n(self) -> int:
        return self.ambient_dim - 1

    def hermitian_defect(self) -> float:
        return _hermitian_defect(self.indices, self.amps)

    def time_only_indices(self) -> np.ndarray:
        mask = ~self.indices[:, :-1].any(axis=1) & (self.indices[:, -1] != 0)
        return self.indices[mask]

    @classmethod
    def from_json(cls, obj: dict, complete_hermitian: bool = False, resonance_context: bool = False):
        dim = int(obj["ambient_dim"])
        r = float(obj.get("declared_regularity", 0.0))
        table: dict[tuple[int, ...], complex] = {}
        for c in obj.get("coefficients", []):
            k = tuple(int(x) for x in c["k"])
            if len(k) != dim:
                raise ModelError(f"index {k} has wrong length")
            table[k] = table.get(k, 0) + complex(c.get("re", 0.0), c.get("im", 0.0))
        if complete_hermitian:
            for k, a in list(table.items()):
                mk = tuple(-x for x in k)
                if mk not in table:
                    table[mk] = np.conj(a)
                elif abs(table[mk] - np.conj(a)) > 1e-12 * max(1.0, abs(a)):
                    raise ModelError(f"coefficients at {k} and {mk} are not conjugate")
        idx = np.array(list(table), dtype=np.int64).reshape(-1, dim)
        H = cls(dim, idx, np.array(list(table.values()), dtype=complex), r)
        if H.hermitian_defect() > 1e-12:
            raise ModelError("coefficients violate Hermitian symmetry (real H1 required)")
        if resonance_context and len(H.time_only_indices()):
            raise ModelError("time-only indices (0,...,0,k0) are not allowed in a resonance context")
        return H

    def to_json(self) -> dict:
        return {
            "ambient_dim": self.ambient_dim,
            "declared_regularity": self.declared_regularity,
            "coefficients": [
                {"k": [int(x) for x in k], "re": float(a.real), "im": float(a.imag)}
                for k, a in zip(self.indices, self.amps)
            ],
        }

    def as_trig(self) -> TrigPolynomial:
        return TrigPolynomial(self.ambient_dim, self.indices, self.amps)

    def restrict_norm(self, lo: int, hi: int | None = None) -> "FourierHamiltonian":
        """Modes with ``lo <= |k| (<= hi)``."""
        s = np.abs(self.indices).max(axis=1) if len(self.indices) else np.zeros(0)
        mask = s >= lo
        if hi is not None:
            mask &= s <= hi
        return FourierHamiltonian(self.ambient_dim, self.indices[mask], self.amps[mask], self.declared_regularity)


def decaying_hamiltonian(n: int, r: float, radius: int, seed: int = 0) -> FourierHamiltonian:
    """``|h_k| = (1+|k|)^(-r-(n+1))`` for ``0 < |k| <= radius`` with random Hermitian phases."""
    dim = n + 1
    rng = np.random.default_rng(seed)
    axes = [np.arange(-radius, radius + 1)] * dim
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    # index of -k in C order is the reversed position
    raw = rng.uniform(0.0, 2 * math.pi, size=len(idx))
    theta = raw - raw[::-1]
    mag = (1.0 + np.abs(idx).max(axis=1)) ** (-(r + dim))
    amps = mag * np.exp(1j * theta)
    keep = np.abs(idx).max(axis=1) > 0
    return FourierHamiltonian(dim, idx[keep], amps[keep], float(r))


# ---------------------------------------------------------------------------
# Projection and splitting
# ---------------------------------------------------------------------------

def lattice_coordinates(indices: np.ndarray, B: OrderedBasis) -> tuple[np.ndarray, np.ndarray]:
    """Integer coordinates in B of those indices lying in lattice(B); returns (mask, coords)."""
    P = np.array(B.vectors, dtype=np.int64).T
    if len(indices) == 0:
        return np.zeros(0, dtype=bool), np.zeros((0, P.shape[1]), dtype=np.int64)
    sol, *_ = np.linalg.lstsq(P.astype(float), indices.T.astype(float), rcond=None)
    coords = np.rint(sol).astype(np.int64).T
    mask = np.all(coords @ P.T == indices, axis=1)
    return mask, coords


def project_to_lattice(H1: FourierHamiltonian, B: OrderedBasis) -> TrigPolynomial:
    """``Z_B(phi) = sum_l h_{l_1 k_1 + ... + l_d k_d} exp(2 pi i l . phi)``."""
    if B.rank == 0:
        raise BasisError("empty basis")
    if len(B.vectors[0]) != H1.ambient_dim:
        raise BasisError("basis vectors do not match the ambient dimension")
    if not is_irreducible(B.vectors):
        raise BasisError("basis is not a Z-basis of an irreducible lattice")
    mask, coords = lattice_coordinates(H1.indices, B)
    return TrigPolynomial(B.rank, coords[mask], H1.amps[mask])


@dataclass(frozen=True, eq=False)
class PotentialSplit:
    """``U^st`` on ``T^m`` and weak parts ``U^wk_j`` on ``T^d`` with ``-Z_B = U^st + sum_j U^wk_j``."""

    m: int
    d: int
    ust: TrigPolynomial
    uwk: tuple[TrigPolynomial, ...]
    zb: TrigPolynomial

    def total(self) -> TrigPolynomial:
        out = self.ust.embed(self.d)
        for u in self.uwk:
            out = out + u
        return out

    def weak_total(self) -> TrigPolynomial:
        out = TrigPolynomial.zero(self.d)
        for u in self.uwk:
            out = out + u
        return out

    def telescoping_residual(self) -> float:
        res = self.total() + self.zb
        return float(np.abs(res.amps).max()) if not res.is_zero() else 0.0


def weak_potential_split(H1: FourierHamiltonian, B: OrderedBasis, p0=None) -> PotentialSplit:
    """Strong potential ``-Z_{B_m}`` and increments ``-(Z_{B_i} - Z_{B_{i-1}})``.

    ``p0`` is accepted for interface symmetry; coefficients are already frozen there.
    """
    zb = project_to_lattice(H1, B)
    m, d = B.split_index, B.rank
    L = zb.indices
    # the term with coordinates l belongs to Z_{B_i} iff l vanishes beyond position i
    last = np.where(L.any(axis=1), d - 1 - np.argmax(L[:, ::-1] != 0, axis=1), -1)
    st_mask = last < m
    ust = TrigPolynomial(d, L[st_mask], -zb.amps[st_mask]).truncate(m)
    uwk = []
    for j in range(1, d - m + 1):
        mask = last == m + j - 1
        uwk.append(TrigPolynomial(d, L[mask], -zb.amps[mask]))
    return PotentialSplit(m, d, ust, tuple(uwk), zb)


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

def default_grid(d: int) -> int:
    return 32 if d >= 4 else 64


def c2_norm(f: TrigPolynomial, method: str = "grid_sup", points: int | None = None) -> float:
    """C^2 size of ``f``: a certified upper bound or a dense-grid maximum."""
    if method == "coefficient_bound":
        if f.is_zero():
            return 0.0
        s = np.abs(f.indices).max(axis=1)
        return float(((1.0 + TWO_PI * s) ** 2 * np.abs(f.amps)).sum())
    if method == "grid_sup":
        N = points or default_grid(f.torus_dim)
        return float(f.grid_derivatives(N).max())
    raise ValueError(f"unknown method {method!r}")


def c0_norm(f: TrigPolynomial, method: str = "coefficient_bound", points: int | None = None) -> float:
    if f.is_zero():
        return 0.0
    if method == "coefficient_bound":
        return float(np.abs(f.amps).sum())
    N = points or default_grid(f.torus_dim)
    return float(f.grid_derivatives(N)[0])


def _shell_count(j: np.ndarray, dim: int) -> np.ndarray:
    """Number of integer points of Z^dim with sup-norm exactly j (j >= 1)."""
    j = j.astype(float)
    return (2 * j + 1) ** dim - (2 * j - 1) ** dim


def family_tail_coefficient_bound(r: float, n: int, M: int, cutoff: int = 200_000) -> float:
    """Upper bound on the C^2 coefficient sum of ``sum_{|k|>=M}`` for the decaying family.

    The family is ``|h_k| = (1+|k|)^(-r-(n+1))``; the sum is over shells of
    Z^{n+1}, with an explicit integral bound on shells past ``cutoff``.
    """
    dim = n + 1
    j = np.arange(max(M, 1), cutoff + 1, dtype=float)
    terms = (1 + TWO_PI * j) ** 2 * _shell_count(j, dim) * (1 + j) ** (-(r + dim))
    # for j > cutoff: term <= (1+2pi)^2 j^2 * 2 dim (3j)^n * j^(-r-dim)
    expo = r + dim - 2 - n
    K = (1 + TWO_PI) ** 2 * 2 * dim * 3.0**n
    remainder = K * cutoff ** (1 - expo) / (expo - 1)
    return float(math.fsum(terms) + remainder)


@lru_cache(maxsize=None)
def tail_constant(n: int) -> float:
    """C_n for :func:`tail_bound`, equal to the family bound at r = n+4, M = 1.

    For r >= n+4 and M >= 1 the family tail times M^(r-n-4) is a sum of the
    same shell terms weighted by (M/(1+j))^(r-n-4) <= 1, so this value dominates
    every member of the decaying family.
    """
    return family_tail_coefficient_bound(n + 4, n, 1)


def tail_bound(r: float, n: int, M: float) -> float:
    """``C_n M^(-r+n+4)``."""
    if r < n + 4:
        raise RegularityError(f"need r >= n+4, got r={r}, n={n}")
    if M < 1:
        raise ValueError("M must be at least 1")
    return tail_constant(n) * float(M) ** (-r + n + 4)


# ---------------------------------------------------------------------------
# Dominance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DominanceCertificate:
    kappa: float
    q: float
    norms: tuple[tuple[int, float], ...]
    mu: int
    order_margins: tuple[float, ...]
    size_margins: tuple[float, ...]
    verdict: bool

    def to_json(self) -> dict:
        return {
            "kappa": self.kappa,
            "q": self.q,
            "norms": [list(x) for x in self.norms],
            "mu": self.mu,
            "order_margins": list(self.order_margins),
            "size_margins": list(self.size_margins),
            "verdict": self.verdict,
        }


def dominance_check(B: OrderedBasis, uwk: Sequence[TrigPolynomial], kappa: float, q: float,
                    method: str = "coefficient_bound") -> DominanceCertificate:
    """Membership test for the dominant class with constants (kappa, q).

    Margins are ``bound - value``; a nonnegative margin means the condition holds.
    """
    if kappa <= 1 or q <= 0:
        raise ValueError("need kappa > 1 and q > 0")
    weak = B.weak
    if len(weak) != len(uwk):
        raise ModelError("one weak potential per weak basis vector is required")
    sizes = [supnorm(k) for k in weak]
    order = []
    for j in range(len(sizes)):
        for i in range(j):
            order.append(kappa * (1 + sizes[j]) - sizes[i])
    norms = [c2_norm(u, method) for u in uwk]
    size = [kappa * s ** (-q) - c for s, c in zip(sizes, norms)]
    verdict = all(x >= 0 for x in order) and all(x >= 0 for x in size)
    return DominanceCertificate(
        kappa=float(kappa),
        q=float(q),
        norms=tuple(zip(sizes, norms)),
        mu=min(sizes) if sizes else 0,
        order_margins=tuple(order),
        size_margins=tuple(size),
        verdict=verdict,
    )


def calibrate_kappa(members: Sequence[tuple[OrderedBasis, Sequence[TrigPolynomial]]], q: float,
                    method: str = "coefficient_bound") -> float:
    """Smallest kappa (> 1) admitting every member: the max observed ratio."""
    worst = 1.0
    for B, uwk in members:
        sizes = [supnorm(k) for k in B.weak]
        for j in range(len(sizes)):
            for i in range(j):
                worst = max(worst, sizes[i] / (1 + sizes[j]))
        for s, u in zip(sizes, uwk):
            worst = max(worst, c2_norm(u, method) * s**q)
    return worst * (1 + 1e-9) if worst > 1.0 else 1.0 + 1e-9


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])

"""Slow mechanical systems, their block structure and Lagrangian splits.

The slow Hamiltonian is ``H^s(phi, I) = 1/2 I.S I - U(phi)`` on ``T^d x R^d``
with ``S = P^T Q P`` (``P`` holds the basis vectors as columns, ``Q`` is the
Hessian of ``H0`` padded with a zero time row and column). The Lagrangian is
``L^s(phi, v) = 1/2 v.S^{-1} v + U(phi)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .averaging import FourierHamiltonian, TrigPolynomial, weak_potential_split
from .errors import ConditioningError, ModelError
from .lattice import OrderedBasis, supnorm

COND_LIMIT = 1e12


def spd_solve(M: np.ndarray, rhs: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Solve ``M x = rhs`` for symmetric positive-definite ``M`` via Cholesky."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((0,) + np.shape(rhs)[1:])
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ConditioningError(f"{what} has condition number {cond:.3g}")
    try:
        fac = cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"{what} is not positive definite") from exc
    return cho_solve(fac, rhs)


def spd_inverse(M: np.ndarray, what: str = "matrix") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return spd_solve(M, np.eye(len(M)), what)


@dataclass(frozen=True, eq=False)
class ConvexModel:
    """Quadratic model of ``H0`` near ``p0``: Hessian ``Q0`` with ``D^-1 <= Q0 <= D``."""

    Q0: np.ndarray | Callable
    D: float = 10.0

    def hessian(self, p0) -> np.ndarray:
        Q = self.Q0(np.asarray(p0, float)) if callable(self.Q0) else self.Q0
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ModelError("Q0 must be square")
        if not np.allclose(Q, Q.T, atol=1e-14):
            raise ModelError("Q0 must be symmetric")
        ev = np.linalg.eigvalsh(Q)
        if self.D <= 1 or ev.min() < 1.0 / self.D - 1e-14 or ev.max() > self.D + 1e-14:
            raise ModelError(f"convexity bounds violated: eigenvalues {ev} with D={self.D}")
        return Q

    @property
    def n(self) -> int:
        if callable(self.Q0):
            raise ModelError("dimension of a callable Q0 is only known after evaluation")
        return np.atleast_2d(self.Q0).shape[0]

    def padded(self, p0) -> np.ndarray:
        """``Q = diag(Q0, 0)`` acting on ``(k_bar, k0)``."""
        Q0 = self.hessian(p0)
        n = Q0.shape[0]
        Q = np.zeros((n + 1, n + 1))
        Q[:n, :n] = Q0
        return Q


def kinetic_matrix(model: ConvexModel, p0, B: OrderedBasis) -> np.ndarray:
    P = np.array(B.vectors, dtype=float).T
    return P.T @ model.padded(p0) @ P


@dataclass(frozen=True, eq=False)
class SlowSystem:
    """``H^s = 1/2 I.S I - U^st(phi^st) - sum_j U^wk_j(phi)``."""

    S: np.ndarray
    m: int
    ust: TrigPolynomial
    uwk: tuple[TrigPolynomial, ...] = ()
    p0: np.ndarray = field(default_factory=lambda: np.zeros(0))
    basis: OrderedBasis | None = None

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        object.__setattr__(self, "uwk", tuple(self.uwk))
        d = S.shape[0]
        if S.shape != (d, d) or not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise ModelError("S must be a symmetric square matrix")
        if np.linalg.eigvalsh(S).min() <= 0:
            raise ModelError("S must be positive definite")
        if not 0 <= self.m <= d:
            raise ModelError("split index out of range")
        if self.ust.torus_dim != self.m:
            raise ModelError("strong potential must live on T^m")
        if self.m < d and len(self.uwk) != d - self.m:
            raise ModelError("need one weak potential per weak direction")
        if any(u.torus_dim != d for u in self.uwk):
            raise ModelError("weak potentials must live on T^d")
        if self.basis is not None:
            P = np.array(self.basis.vectors, dtype=float).T
            if P.shape[1] != d:
                raise ModelError("basis rank differs from S")

    @property
    def d(self) -> int:
        return self.S.shape[0]

    @property
    def weak_potential(self) -> TrigPolynomial:
        out = TrigPolynomial.zero(self.d)
        for u in self.uwk:
            out = out + u
        return out

    @property
    def potential(self) -> TrigPolynomial:
        return self.ust.embed(self.d) + self.weak_potential

    @property
    def weak_sizes(self) -> list[int]:
        if self.basis is None:
            raise ModelError("system has no basis attached")
        return [supnorm(k) for k in self.basis.weak]

    @property
    def mu(self) -> int:
        sizes = self.weak_sizes
        return min(sizes) if sizes else 0

    def strong_system(self) -> "SlowSystem":
        """``H^st = K(I^st, 0) - U^st``."""
        Bst = None if self.basis is None else OrderedBasis(self.basis.strong, self.m)
        return SlowSystem(self.S[: self.m, : self.m], self.m, self.ust, (), self.p0, Bst)

    def with_weak(self, uwk: Sequence[TrigPolynomial]) -> "SlowSystem":
        return SlowSystem(self.S, self.m, self.ust, tuple(uwk), self.p0, self.basis)

    def hamiltonian(self, phi, I) -> np.ndarray:
        phi, I = np.atleast_2d(phi), np.atleast_2d(I)
        return 0.5 * np.einsum("ni,ij,nj->n", I, self.S, I) - self.potential.evaluate(phi)

    def lagrangian(self) -> "MechanicalLagrangian":
        return MechanicalLagrangian(spd_inverse(self.S, "S"), self.potential)

    def to_json(self) -> dict:
        return {
            "S": self.S.tolist(),
            "m": self.m,
            "ust": self.ust.to_json(),
            "uwk": [u.to_json() for u in self.uwk],
            "p0": self.p0.tolist(),
            "basis": None if self.basis is None else self.basis.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SlowSystem":
        return cls(
            np.array(obj["S"], dtype=float),
            int(obj["m"]),
            TrigPolynomial.from_json(obj["ust"]),
            tuple(TrigPolynomial.from_json(u) for u in obj.get("uwk", [])),
            np.array(obj.get("p0", []), dtype=float),
            None if obj.get("basis") is None else OrderedBasis.from_json(obj["basis"]),
        )


def build_slow_system(model: ConvexModel, p0, B: OrderedBasis, H1: FourierHamiltonian) -> SlowSystem:
    """Slow system from the quadratic model, a basis and the perturbation's Fourier data."""
    S = kinetic_matrix(model, p0, B)
    split = weak_potential_split(H1, B, p0)
    return SlowSystem(S, B.split_index, split.ust, split.uwk, np.asarray(p0, float), B)


def slow_system_from_potentials(model: ConvexModel, p0, B: OrderedBasis, ust: TrigPolynomial,
                                uwk: Sequence[TrigPolynomial]) -> SlowSystem:
    """Slow system with user-supplied potentials (for synthetic dominant families)."""
    S = kinetic_matrix(model, p0, B)
    return SlowSystem(S, B.split_index, ust, tuple(uwk), np.asarray(p0, float), B)


# ---------------------------------------------------------------------------
# Block decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlockDecomposition:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Ctilde: np.ndarray
    Ainv: np.ndarray
    E: np.ndarray
    ztilde: np.ndarray
    m: int

    @property
    def d(self) -> int:
        return self.E.shape[0]

    @property
    def BtAinv(self) -> np.ndarray:
        return self.B.T @ self.Ainv

    def diag_residual(self, S: np.ndarray) -> float:
        """``max |E^T S E - blockdiag(A, ztilde)|``."""
        target = np.zeros_like(S)
        target[: self.m, : self.m] = self.A
        for i, z in enumerate(self.ztilde):
            target[self.m + i, self.m + i] = z
        return float(np.abs(self.E.T @ S @ self.E - target).max())


def block_decomposition(sys_or_S, m: int | None = None) -> BlockDecomposition:
    """``A, B, C``, Schur complement ``C~`` and the nested factorization ``E``."""
    if isinstance(sys_or_S, SlowSystem):
        S, m = sys_or_S.S, sys_or_S.m
    else:
        S = np.atleast_2d(np.asarray(sys_or_S, dtype=float))
        if m is None:
            raise ModelError("split index required")
    d = S.shape[0]
    spd_inverse(S, "S")  # conditioning gate
    A, Bm, C = S[:m, :m], S[:m, m:], S[m:, m:]
    Ainv = spd_inverse(A, "A") if m else np.zeros((0, 0))
    Ct = C - Bm.T @ Ainv @ Bm
    E = np.eye(d)
    zt = np.zeros(d - m)
    for i in range(1, d - m + 1):
        size = m + i - 1
        X, y, z = S[:size, :size], S[:size, size], S[size, size]
        sol = spd_solve(X, y, f"X_{i}") if size else np.zeros(0)
        E[:size, size] = -sol
        zt[i - 1] = z - y @ sol
    return BlockDecomposition(A=A, B=Bm, C=C, Ctilde=Ct, Ainv=Ainv, E=E, ztilde=zt, m=m)


def cbar(dec: BlockDecomposition, c) -> np.ndarray:
    """``c_bar = c^st + A^{-1} B c^wk``."""
    c = np.asarray(c, dtype=float)
    return c[: dec.m] + dec.Ainv @ dec.B @ c[dec.m:]


def eta(dec: BlockDecomposition, c) -> np.ndarray:
    """``eta = E^{-1} c``; its strong block equals :func:`cbar`."""
    return np.linalg.solve(dec.E, np.asarray(c, dtype=float))


# ---------------------------------------------------------------------------
# Lagrangians
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MechanicalLagrangian:
    """``L(phi, v) = 1/2 v.Sinv v + U(phi)``."""

    Sinv: np.ndarray
    potential: TrigPolynomial

    @property
    def d(self) -> int:
        return self.Sinv.shape[0]

    @property
    def S(self) -> np.ndarray:
        return np.linalg.inv(self.Sinv)

    def __call__(self, phi, v) -> np.ndarray:
        phi, v = np.atleast_2d(phi), np.atleast_2d(v)
        return 0.5 * np.einsum("ni,ij,nj->n", v, self.Sinv, v) + self.potential.evaluate(phi)

    def momentum(self, v) -> np.ndarray:
        return np.atleast_2d(v) @ self.Sinv.T

    def hamiltonian(self, phi, I) -> np.ndarray:
        """Legendre transform in closed form: ``1/2 I.S I - U``."""
        phi, I = np.atleast_2d(phi), np.atleast_2d(I)
        return 0.5 * np.einsum("ni,ij,nj->n", I, self.S, I) - self.potential.evaluate(phi)

    def legendre_residual(self, phi, v) -> float:
        """``max |H(phi, dL/dv) - (dL/dv . v - L)|`` over the samples."""
        I = self.momentum(v)
        lhs = self.hamiltonian(phi, I)
        rhs = np.einsum("ni,ni->n", I, np.atleast_2d(v)) - self(phi, v)
        return float(np.abs(lhs - rhs).max())


def lagrangian_split_eval(sys: SlowSystem, c, phi, v, dec: BlockDecomposition | None = None):
    """``L^s - c.v`` directly, via the coarse split and via the fine split.

    Returns ``(direct, coarse, fine, residual)`` with arrays over samples and
    ``residual`` the max pairwise difference.
    """
    dec = dec or block_decomposition(sys)
    m, d = sys.m, sys.d
    phi, v = np.atleast_2d(phi).astype(float), np.atleast_2d(v).astype(float)
    c = np.asarray(c, dtype=float)
    Ust = sys.ust.evaluate(phi[:, :m]) if m else np.zeros(len(phi))
    Uwk_parts = [u.evaluate(phi) for u in sys.uwk]
    Uwk = np.sum(Uwk_parts, axis=0) if Uwk_parts else np.zeros(len(phi))
    Sinv = spd_inverse(sys.S, "S")
    direct = 0.5 * np.einsum("ni,ij,nj->n", v, Sinv, v) + Ust + Uwk - v @ c

    vst, vwk = v[:, :m], v[:, m:]
    cb = cbar(dec, c)
    Lst = 0.5 * np.einsum("ni,ij,nj->n", vst, dec.Ainv, vst) + Ust
    strong = Lst - vst @ cb
    cwk = c[m:]
    if d > m:
        w = vwk - vst @ dec.BtAinv.T
        Ctc = dec.Ctilde @ cwk
        dev = w - Ctc
        Ctinv = spd_inverse(dec.Ctilde, "C~")
        coarse = strong + 0.5 * np.einsum("ni,ij,nj->n", dev, Ctinv, dev) - 0.5 * cwk @ Ctc + Uwk
    else:
        coarse = strong.copy()

    wf = v @ dec.E
    et = eta(dec, c)
    fine = strong.copy()
    for i in range(d - m):
        zi, ei = dec.ztilde[i], et[m + i]
        fine = fine + 0.5 / zi * (wf[:, m + i] - zi * ei) ** 2 - 0.5 * zi * ei**2 + Uwk_parts[i]
    residual = float(max(np.abs(direct - coarse).max(), np.abs(direct - fine).max(), np.abs(coarse - fine).max()))
    return direct, coarse, fine, residual


@dataclass(frozen=True)
class ZtildeReport:
    ztilde_inv: tuple[float, ...]
    weak_sizes: tuple[int, ...]
    ratios: tuple[float, ...]
    M_star: float
    holds: bool


def ztilde_bound_check(sys: SlowSystem, M_star: float | None = None,
                       dec: BlockDecomposition | None = None) -> ZtildeReport:
    """``1/z~_i`` against ``M* |k_i^wk|^{2i}``; ``M*`` defaults to the observed max ratio."""
    dec = dec or block_decomposition(sys)
    sizes = sys.weak_sizes
    zinv = [1.0 / z for z in dec.ztilde]
    ratios = [zi / s ** (2 * (i + 1)) for i, (zi, s) in enumerate(zip(zinv, sizes))]
    Ms = max(ratios, default=0.0) if M_star is None else float(M_star)
    return ZtildeReport(tuple(zinv), tuple(sizes), tuple(ratios), Ms, all(r <= Ms * (1 + 1e-12) for r in ratios))

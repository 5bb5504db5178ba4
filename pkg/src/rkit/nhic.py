"""Isolating-block checks for maps near a normally hyperbolic cylinder.

Coordinates are ``Z = (x, y, z)`` with ``x`` in the stable ball ``D^s``, ``y``
in the unstable ball ``D^u`` (both of radius ``r``, Euclidean norms) and ``z`` in
a center box. A map is a batched callable returning values and Jacobians.
All checks are sampled certificates, never proofs.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .dynamics import RescaledField, RescalingSigma, SlowHalfField, VectorField, _rk4_step, time1_map_with_jacobian
from .errors import ModelError
from .slowsys import SlowSystem, block_decomposition

PASS, FAIL, INCONCLUSIVE, NOT_CHECKED = "pass", "fail", "inconclusive", "not_checked"
CERTIFICATE = "sampled certificate"


@dataclass
class SmoothMap:
    """``call(Z) -> (F(Z), DF(Z))`` on batches of shape (N, dim)."""

    call: Callable
    dim: int

    def __call__(self, Z):
        return self.call(np.atleast_2d(np.asarray(Z, dtype=float)))

    def value(self, Z) -> np.ndarray:
        return self(Z)[0]


def linear_map(M) -> tuple[SmoothMap, SmoothMap]:
    """Forward and inverse maps of an invertible matrix."""
    M = np.asarray(M, dtype=float)
    Minv = np.linalg.inv(M)

    def fwd(Z):
        return Z @ M.T, np.broadcast_to(M, (len(Z),) + M.shape).copy()

    def inv(Z):
        return Z @ Minv.T, np.broadcast_to(Minv, (len(Z),) + M.shape).copy()

    return SmoothMap(fwd, len(M)), SmoothMap(inv, len(M))


def involution(s: int, u: int, c: int) -> np.ndarray:
    """Permutation matrix of ``(x, y, z) -> (y, x, z)`` (requires ``s == u``)."""
    if s != u:
        raise ModelError("the involution needs equal stable and unstable dimensions")
    n = s + u + c
    P = np.zeros((n, n))
    P[np.arange(s), s + np.arange(s)] = 1
    P[s + np.arange(s), np.arange(s)] = 1
    P[2 * s:, 2 * s:] = np.eye(c)
    return P


def inverse_side(F_inv: SmoothMap, s: int, u: int, c: int) -> SmoothMap:
    """``I o F^{-1} o I`` (the involution is its own inverse)."""
    P = involution(s, u, c)

    def call(Z):
        W, J = F_inv(Z @ P.T)
        return W @ P.T, P[None] @ J @ P[None]

    return SmoothMap(call, F_inv.dim)


# ---------------------------------------------------------------------------
# Specification and report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IsolatingBlockSpec:
    s: int
    u: int
    center_lo: tuple
    center_hi: tuple
    r: float
    mu: float = 2.0
    nu: float = 1.5
    n_samples: int = 512
    n_boundary: int = 128
    n_pairs: int = 256
    seed: int = 0
    resolution: float = 1e-9
    center_unbounded: bool = True

    def __post_init__(self):
        if self.r <= 0 or self.mu <= 1 or self.nu <= 1:
            raise ModelError("need r > 0, mu > 1 and nu > 1")
        if len(self.center_lo) != len(self.center_hi):
            raise ModelError("center bounds differ in length")
        if any(h < l for l, h in zip(self.center_lo, self.center_hi)):
            raise ModelError("empty center box")

    @property
    def c(self) -> int:
        return len(self.center_lo)

    @property
    def dim(self) -> int:
        return self.s + self.u + self.c

    def split(self, Z):
        s, u = self.s, self.u
        return Z[..., :s], Z[..., s:s + u], Z[..., s + u:]

    def swapped(self) -> "IsolatingBlockSpec":
        return IsolatingBlockSpec(self.u, self.s, self.center_lo, self.center_hi, self.r, self.mu, self.nu,
                                  self.n_samples, self.n_boundary, self.n_pairs, self.seed + 1,
                                  self.resolution, self.center_unbounded)

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass
class ConditionResult:
    name: str
    verdict: str
    margin: float
    witness: list | None = None
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "verdict": self.verdict, "margin": self.margin,
                "witness": self.witness, "details": self.details}


@dataclass
class IsolatingBlockReport:
    forward: dict
    inverse: dict
    label: str = CERTIFICATE

    @property
    def conditions(self) -> list[ConditionResult]:
        return list(self.forward.values()) + list(self.inverse.values())

    @property
    def verdict(self) -> str:
        vs = [c.verdict for c in self.conditions]
        if len(vs) != 8 or FAIL in vs:
            return FAIL if FAIL in vs else INCONCLUSIVE
        if all(v == PASS for v in vs):
            return PASS
        return INCONCLUSIVE

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_json(self) -> dict:
        return {"label": self.label, "verdict": self.verdict,
                "forward": {k: v.to_json() for k, v in self.forward.items()},
                "inverse": {k: v.to_json() for k, v in self.inverse.items()}}


def _verdict(margin: float, resolution: float) -> str:
    if not np.isfinite(margin):
        return FAIL
    if margin > resolution:
        return PASS
    if margin < -resolution:
        return FAIL
    return INCONCLUSIVE


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _cube_to_ball(p: np.ndarray) -> np.ndarray:
    """Radial map from ``[-1, 1]^k`` onto the unit ball."""
    if p.shape[1] == 0:
        return p
    n2 = np.linalg.norm(p, axis=1, keepdims=True)
    ninf = np.abs(p).max(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(n2 > 0, p * ninf / n2, 0.0)
    return out


def _unit_vectors(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros((n, 0))
    v = rng.standard_normal((n, k))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_block(spec: IsolatingBlockSpec) -> np.ndarray:
    """Scrambled Sobol interior points plus boundary-weighted points."""
    s, u, c = spec.s, spec.u, spec.c
    lo, hi = np.asarray(spec.center_lo, float), np.asarray(spec.center_hi, float)
    sob = qmc.Sobol(spec.dim, scramble=True, seed=spec.seed).random(spec.n_samples)
    cube = 2 * sob - 1
    x = spec.r * _cube_to_ball(cube[:, :s])
    y = spec.r * _cube_to_ball(cube[:, s:s + u])
    z = lo + (hi - lo) * sob[:, s + u:]
    interior = np.hstack([x, y, z])
    rng = np.random.default_rng(spec.seed)
    nb = spec.n_boundary
    bx = np.hstack([spec.r * _unit_vectors(rng, nb, s), spec.r * _cube_to_ball(rng.uniform(-1, 1, (nb, u))),
                    lo + (hi - lo) * rng.random((nb, c))])
    return np.vstack([interior, bx, unstable_boundary(spec)])


def unstable_boundary(spec: IsolatingBlockSpec) -> np.ndarray:
    """Points of ``D^sc x dD^u``; for ``u = 1`` they come in (+r, -r) pairs."""
    s, u, c = spec.s, spec.u, spec.c
    lo, hi = np.asarray(spec.center_lo, float), np.asarray(spec.center_hi, float)
    rng = np.random.default_rng(spec.seed + 7)
    nb = spec.n_boundary
    x = spec.r * _cube_to_ball(rng.uniform(-1, 1, (nb, s)))
    z = lo + (hi - lo) * rng.random((nb, c))
    if u == 1:
        return np.vstack([np.hstack([x, np.full((nb, 1), spec.r), z]), np.hstack([x, np.full((nb, 1), -spec.r), z])])
    return np.hstack([x, spec.r * _unit_vectors(rng, nb, u), z])


def _circle_mesh(spec: IsolatingBlockSpec, base: np.ndarray, k: int = 64) -> np.ndarray:
    th = 2 * np.pi * np.arange(k) / k
    pts = np.repeat(base[None], k, axis=0)
    pts[:, spec.s:spec.s + 2] = spec.r * np.stack([np.cos(th), np.sin(th)], axis=1)
    return pts


def _winding(points2: np.ndarray) -> int:
    ang = np.arctan2(points2[:, 1], points2[:, 0])
    d = np.diff(np.r_[ang, ang[0]])
    d = (d + np.pi) % (2 * np.pi) - np.pi
    return int(round(d.sum() / (2 * np.pi)))


def _in_block(spec: IsolatingBlockSpec, Z: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    x, y, z = spec.split(Z)
    ok = (np.linalg.norm(x, axis=1) <= spec.r * (1 + tol)) & (np.linalg.norm(y, axis=1) <= spec.r * (1 + tol))
    if spec.c:
        lo, hi = np.asarray(spec.center_lo), np.asarray(spec.center_hi)
        ok &= np.all((z >= lo - tol) & (z <= hi + tol), axis=1)
    return ok


def cone_pairs(spec: IsolatingBlockSpec, scales: Sequence[float] | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pairs ``Z_2 in K^u_mu(Z_1)`` inside the block at graded separations of ``||dy||``."""
    s, u, c = spec.s, spec.u, spec.c
    scales = scales or (spec.r / 10, spec.r / 3, spec.r)
    rng = np.random.default_rng(spec.seed + 11)
    lo, hi = np.asarray(spec.center_lo, float), np.asarray(spec.center_hi, float)
    Z1s, Z2s, tags = [], [], []
    for si, sc in enumerate(scales):
        n = 8 * spec.n_pairs
        mid = np.hstack([spec.r * _cube_to_ball(rng.uniform(-1, 1, (n, s))),
                         spec.r * _cube_to_ball(rng.uniform(-1, 1, (n, u))),
                         lo + (hi - lo) * rng.random((n, c))])
        vy = _unit_vectors(rng, n, u)
        t = np.where(np.arange(n) % 2 == 0, 1.0, rng.random(n))  # half on the cone boundary
        vxz = _unit_vectors(rng, n, s + c) * (math.sqrt(spec.mu) * t)[:, None]
        dZ = sc * np.hstack([vxz[:, :s], vy, vxz[:, s:]])
        Z1, Z2 = mid - dZ / 2, mid + dZ / 2
        ok = _in_block(spec, Z1) & _in_block(spec, Z2)
        idx = np.flatnonzero(ok)[: spec.n_pairs]
        Z1s.append(Z1[idx])
        Z2s.append(Z2[idx])
        tags.append(np.full(len(idx), si))
    return np.vstack(Z1s), np.vstack(Z2s), np.concatenate(tags)


def _lambda_min_max(A: np.ndarray, J: np.ndarray, tau_hi: np.ndarray, iters: int = 80) -> tuple[np.ndarray, np.ndarray]:
    """``max_{0 <= tau <= tau_hi} lambda_min(A - tau J)`` by golden section (the objective is concave)."""
    g = (math.sqrt(5) - 1) / 2
    a = np.zeros(len(A))
    b = tau_hi.copy()

    def f(t):
        return np.linalg.eigvalsh(A - t[:, None, None] * J[None])[:, 0]

    c1, c2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = f(c1), f(c2)
    for _ in range(iters):
        left = f1 < f2  # the maximum lies right of c1
        a = np.where(left, c1, a)
        b = np.where(left, b, c2)
        c1, c2 = b - g * (b - a), a + g * (b - a)
        f1, f2 = f(c1), f(c2)
    t = 0.5 * (a + b)
    cand = np.stack([f(np.zeros_like(t)), f(t), f(tau_hi)], axis=1)
    best = cand.argmax(axis=1)
    taus = np.stack([np.zeros_like(t), t, tau_hi], axis=1)
    return cand[np.arange(len(t)), best], taus[np.arange(len(t)), best]


def differential_cone_margins(spec: IsolatingBlockSpec, DF: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """S-lemma certificates for ``DF(C^u_mu) in C^u_mu`` and expansion ``>= nu`` on the cone.

    Each margin is ``max_tau lambda_min(Q - tau J)`` normalised by ``1 + ||DF||^2``;
    a positive value certifies the property at that sample.
    """
    s, u = spec.s, spec.u
    n = spec.dim
    Jd = -np.ones(n)
    Jd[s:s + u] = spec.mu
    J = np.diag(Jd)
    Py = np.zeros(n)
    Py[s:s + u] = 1
    A3 = np.einsum("nki,k,nkj->nij", DF, Jd, DF)
    A4 = np.einsum("nki,k,nkj->nij", DF, Py, DF) - spec.nu**2 * np.diag(Py)[None]
    scale = 1 + np.linalg.norm(DF, ord=2, axis=(1, 2)) ** 2
    tau_hi = 4 * scale
    m3, _ = _lambda_min_max(A3, J, tau_hi)
    m4, _ = _lambda_min_max(A4, J, tau_hi)
    return m3 / scale, m4 / scale


# ---------------------------------------------------------------------------
# Conditions
# ---------------------------------------------------------------------------

def _check_side(F: SmoothMap, spec: IsolatingBlockSpec) -> dict:
    res = spec.resolution
    u = spec.u
    lo, hi = np.asarray(spec.center_lo, float), np.asarray(spec.center_hi, float)

    Z = sample_block(spec)
    FZ, DF = F(Z)
    x1, _, z1 = spec.split(FZ)
    nx = np.linalg.norm(x1, axis=1)
    i = int(nx.argmax())
    margin1 = (spec.r - nx[i]) / spec.r
    drift = float(np.abs(z1 - spec.split(Z)[2]).max()) if spec.c else 0.0
    details1 = {"contraction": float(nx[i] / spec.r), "center_drift": drift, "samples": len(Z)}
    if not spec.center_unbounded and spec.c:
        cm = float(np.min(np.minimum(z1 - lo, hi - z1)))
        details1["center_margin"] = cm
        margin1 = min(margin1, cm)
    c1 = ConditionResult("C1", _verdict(margin1, res), float(margin1), Z[i].tolist(), details1)

    Zb = unstable_boundary(spec)
    Fb, _ = F(Zb)
    yb = spec.split(Fb)[1]
    ny = np.linalg.norm(yb, axis=1)
    j = int(ny.argmin())
    margin2 = (ny[j] - spec.r) / spec.r
    details2 = {"expansion": float(ny[j] / spec.r)}
    if u == 1:
        half = len(Zb) // 2
        degree_ok = bool(np.all(np.sign(yb[:half, 0]) != np.sign(yb[half:, 0])))
        details2["degree"] = "odd" if degree_ok else "even"
    elif u == 2:
        wind = [_winding(spec.split(F(_circle_mesh(spec, b))[0])[1]) for b in Zb[:16]]
        degree_ok = all(abs(w) == 1 for w in wind)
        details2["winding_numbers"] = sorted(set(wind))
    else:
        degree_ok = None
        details2["degree"] = NOT_CHECKED
    v2 = _verdict(margin2, res)
    if degree_ok is False:
        v2 = FAIL
    elif degree_ok is None and v2 == PASS:
        v2 = INCONCLUSIVE
    c2 = ConditionResult("C2", v2, float(margin2), Zb[j].tolist(), details2)

    Z1, Z2, tags = cone_pairs(spec)
    F1, _ = F(Z1)
    F2, _ = F(Z2)
    dx, dy, dz = spec.split(F2 - F1)
    dZ = Z2 - Z1
    ny0 = np.linalg.norm(spec.split(dZ)[1], axis=1)
    cone = (spec.mu * (dy**2).sum(1) - (dx**2).sum(1) - (dz**2).sum(1)) / (dZ**2).sum(1)
    ratio = np.linalg.norm(dy, axis=1) / ny0
    d3, d4 = differential_cone_margins(spec, DF)
    k3, k4 = int(cone.argmin()), int(ratio.argmin())
    per_scale3 = [float(cone[tags == t].min()) if np.any(tags == t) else None for t in range(3)]
    per_scale4 = [float(ratio[tags == t].min()) if np.any(tags == t) else None for t in range(3)]
    m3 = float(min(cone[k3], d3.min()))
    m4p = float(ratio[k4] - spec.nu)
    m4 = float(min(m4p / spec.nu, d4.min()))
    c3 = ConditionResult("C3", _verdict(m3, res), m3, Z1[k3].tolist(),
                         {"pairwise_min": float(cone[k3]), "differential_min": float(d3.min()),
                          "per_scale": per_scale3, "pairs": len(Z1)})
    c4 = ConditionResult("C4", _verdict(m4, res), m4, Z1[k4].tolist(),
                         {"min_ratio": float(ratio[k4]), "nu": spec.nu, "differential_min": float(d4.min()),
                          "per_scale": per_scale4})
    return {"C1": c1, "C2": c2, "C3": c3, "C4": c4}


def check_block_conditions(F: SmoothMap, spec: IsolatingBlockSpec, F_inv: SmoothMap | None = None) -> IsolatingBlockReport:
    """Sampled verification of C1-C4 for ``F`` and, when ``F_inv`` is given, for ``I o F^-1 o I``."""
    if F.dim != spec.dim:
        raise ModelError("map and block dimensions differ")
    forward = _check_side(F, spec)
    if F_inv is None:
        inverse = {k: ConditionResult(k, NOT_CHECKED, float("nan")) for k in ("C1", "C2", "C3", "C4")}
    else:
        inverse = _check_side(inverse_side(F_inv, spec.s, spec.u, spec.c), spec.swapped())
    return IsolatingBlockReport(forward, inverse)


# ---------------------------------------------------------------------------
# Mollified map
# ---------------------------------------------------------------------------

def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3 - 2 * t), 6 * t * (1 - t)


@dataclass(frozen=True)
class Mollifier:
    """``rho = smoothstep((|z_k| - inner) / (outer - inner))`` in one strong-center coordinate."""

    index: int
    inner: float
    outer: float

    def __call__(self, Z):
        w = self.outer - self.inner
        a = np.abs(Z[:, self.index])
        val, dval = smoothstep((a - self.inner) / w)
        grad = np.zeros_like(Z)
        grad[:, self.index] = dval * np.sign(Z[:, self.index]) / w
        return val, grad


def linearized_map(F0: SmoothMap, s: int, u: int) -> SmoothMap:
    """``L(x, y, z) = (D_x F0^x(0,0,z) x, D_y F0^y(0,0,z) y, F0^z(0,0,z))``."""

    def call(Z):
        Z0 = Z.copy()
        Z0[:, :s + u] = 0
        V, J = F0(Z0)
        x, y = Z[:, :s], Z[:, s:s + u]
        Ax, Ay = J[:, :s, :s], J[:, s:s + u, s:s + u]
        out = V.copy()
        out[:, :s] = np.einsum("nij,nj->ni", Ax, x)
        out[:, s:s + u] = np.einsum("nij,nj->ni", Ay, y)
        D = np.zeros_like(J)
        D[:, :s, :s] = Ax
        D[:, s:s + u, s:s + u] = Ay
        D[:, s + u:, s + u:] = J[:, s + u:, s + u:]
        # z-derivatives of the x and y rows vanish only when DF0 is z-independent; include them
        h = 1e-6
        for k in range(s + u, Z.shape[1]):
            e = np.zeros(Z.shape[1])
            e[k] = h
            Jp, Jm = F0(Z0 + e)[1], F0(Z0 - e)[1]
            dAx = (Jp[:, :s, :s] - Jm[:, :s, :s]) / (2 * h)
            dAy = (Jp[:, s:s + u, s:s + u] - Jm[:, s:s + u, s:s + u]) / (2 * h)
            D[:, :s, k] = np.einsum("nij,nj->ni", dAx, x)
            D[:, s:s + u, k] = np.einsum("nij,nj->ni", dAy, y)
        return out, D

    return SmoothMap(call, F0.dim)


def mollified_map(F: SmoothMap, L: SmoothMap, rho: Mollifier) -> SmoothMap:
    """``F~ = F (1 - rho) + L rho`` with its Jacobian."""

    def call(Z):
        FV, FJ = F(Z)
        LV, LJ = L(Z)
        r, g = rho(Z)
        V = FV * (1 - r)[:, None] + LV * r[:, None]
        J = FJ * (1 - r)[:, None, None] + LJ * r[:, None, None] + (LV - FV)[:, :, None] * g[:, None, :]
        return V, J

    return SmoothMap(call, F.dim)


# ---------------------------------------------------------------------------
# Slow time-1 maps in block coordinates
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AffineChart:
    """``state = origin + M Z``."""

    M: np.ndarray
    origin: np.ndarray

    def to_state(self, Z):
        return self.origin + np.atleast_2d(Z) @ self.M.T

    def from_state(self, X):
        return np.linalg.solve(self.M, (np.atleast_2d(X) - self.origin).T).T


def flow_maps(field: VectorField, chart: AffineChart, dt: float = 0.01, T: float = 1.0) -> tuple[SmoothMap, SmoothMap]:
    """Time-``T`` map of ``field`` and its inverse (time ``-T``) in chart coordinates."""
    Minv = np.linalg.inv(chart.M)

    def make(t):
        def call(Z):
            X, J = time1_map_with_jacobian(field, chart.to_state(Z), dt, t)
            return chart.from_state(X), Minv[None] @ J @ chart.M[None]

        return call

    return SmoothMap(make(T), len(chart.M)), SmoothMap(make(-T), len(chart.M))


def pendulum_rate(A: float, eps: float) -> float:
    """Lyapunov exponent ``2 pi sqrt(A eps)`` of ``A eps (1 - cos 2 pi phi)`` at its minimum."""
    return 2 * math.pi * math.sqrt(A * eps)


def pendulum_chart(lam: float, d_weak: int) -> AffineChart:
    """Eigen-coordinates ``(phi, v) = x e_s + y e_u`` for the strong pair, identity on the weak block."""
    es = np.array([1.0, -lam]) / math.hypot(1, lam)
    eu = np.array([1.0, lam]) / math.hypot(1, lam)
    n = 2 + 2 * d_weak
    M = np.eye(n)
    M[:2, :2] = np.stack([es, eu], axis=1)
    return AffineChart(M, np.zeros(n))


def slow_block_maps(sys: SlowSystem, q: float, dt: float = 0.01) -> tuple[SmoothMap, SmoothMap, AffineChart, float]:
    """Rescaled slow time-1 map of a pendulum x weak system in eigen-coordinates.

    The strong system must be one-dimensional with minimum at ``phi = 0``.
    """
    if sys.m != 1:
        raise ModelError("the demo expects one strong angle")
    dec = block_decomposition(sys)
    field = SlowHalfField(sys, dec)
    if sys.d > sys.m:
        sigma = RescalingSigma.from_sizes(sys.weak_sizes, q)
        field = RescaledField(field, sys.m, sigma)
    A = float(dec.A[0, 0])
    curv = float(sys.ust.evaluate(np.zeros((1, 1)), order=2)[2][0, 0, 0]) if not sys.ust.is_zero() else 0.0
    if curv <= 0:
        raise ModelError("strong potential needs a nondegenerate minimum at 0")
    lam = math.sqrt(A * curv)
    chart = pendulum_chart(lam, sys.d - sys.m)
    F, Finv = flow_maps(field, chart, dt)
    return F, Finv, chart, lam


# ---------------------------------------------------------------------------
# Cylinder witness
# ---------------------------------------------------------------------------

@dataclass
class CylinderWitness:
    z: np.ndarray  # (K, c) center grid
    xy: np.ndarray  # (K, s+u) graph values w^c(z)
    invariance_defect: float
    integrator_tol: float
    inside: bool

    def strong_distance(self, chart: AffineChart | None = None, s: int = 1, u: int = 1) -> float:
        """Sup distance from the unperturbed cylinder ``x = y = 0`` (in state coordinates if a chart is given)."""
        if chart is None:
            return float(np.linalg.norm(self.xy, axis=1).max())
        Msu = chart.M[: s + u, : s + u]
        return float(np.linalg.norm(self.xy @ Msu.T, axis=1).max())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            c, k = self.z.shape[1], self.xy.shape[1]
            w.writerow([f"z{i}" for i in range(c)] + [f"w{i}" for i in range(k)])
            for z, xy in zip(self.z, self.xy):
                w.writerow([repr(float(a)) for a in z] + [repr(float(a)) for a in xy])


def _iterate(F: SmoothMap, Z: np.ndarray, k: int):
    J = np.broadcast_to(np.eye(Z.shape[1]), (len(Z), Z.shape[1], Z.shape[1])).copy()
    for _ in range(k):
        Z, D = F(Z)
        J = D @ J
    return Z, J


def center_points(F: SmoothMap, F_inv: SmoothMap, s: int, u: int, z: np.ndarray, K: int = 8,
                  guess: np.ndarray | None = None, newton_final: int = 3) -> np.ndarray:
    """Points of ``W^sc cap W^uc`` over the center values ``z``.

    Joint Newton on ``pi_u F^k(Z) = 0`` and ``pi_s F^{-k}(Z) = 0`` in the
    unknowns ``(x, y)``, growing the horizon ``k`` one step at a time so that
    each linearization stays accurate despite the expansion.
    """
    n = len(z)
    Z = np.hstack([np.zeros((n, s + u)) if guess is None else np.asarray(guess, float), z])
    xs, ys, xy = slice(0, s), slice(s, s + u), slice(0, s + u)
    for k in list(range(1, K + 1)) + [K] * newton_final:
        W, J = _iterate(F, Z, k)
        V, Jv = _iterate(F_inv, Z, k)
        g = np.concatenate([W[:, ys], V[:, xs]], axis=1)
        Dg = np.concatenate([J[:, ys, xy], Jv[:, xs, xy]], axis=1)
        Z[:, xy] -= np.linalg.solve(Dg, g[..., None])[..., 0]
    return Z


def integrator_tolerance(field: VectorField, chart: AffineChart, Z: np.ndarray, dt: float) -> float:
    """Step-doubling estimate ``|Phi_dt - Phi_dt/2|`` of the time-1 map at ``Z``."""
    X = chart.to_state(Z)
    n = max(1, int(round(1.0 / dt)))
    a, b = X.copy(), X.copy()
    for _ in range(n):
        a = _rk4_step(field, a, 1.0 / n)
    for _ in range(2 * n):
        b = _rk4_step(field, b, 0.5 / n)
    return float(np.abs(chart.from_state(a) - chart.from_state(b)).max())


def cylinder_witness(F: SmoothMap, F_inv: SmoothMap, spec: IsolatingBlockSpec, z: np.ndarray, K: int = 8,
                     integrator_tol: float = 0.0) -> CylinderWitness:
    """Graph witness ``(x, y) = w^c(z)`` and its invariance defect ``|F(P) - P'|``.

    ``P'`` is the witness recomputed at the image center value, so no interpolation enters.
    """
    s, u = spec.s, spec.u
    P = center_points(F, F_inv, s, u, z, K)
    FP = F.value(P)
    P2 = center_points(F, F_inv, s, u, FP[:, s + u:], K, guess=FP[:, : s + u])
    defect = float(np.abs(FP[:, : s + u] - P2[:, : s + u]).max())
    nrm = np.maximum(np.linalg.norm(P[:, :s], axis=1), np.linalg.norm(P[:, s:s + u], axis=1))
    return CylinderWitness(np.asarray(z, float), P[:, : s + u], defect, integrator_tol, bool(np.all(nrm <= spec.r)))


def center_grid(spec: IsolatingBlockSpec, per_axis: int = 5, shrink: float = 0.5) -> np.ndarray:
    """Grid of the central ``shrink``-portion of the center box."""
    lo, hi = np.asarray(spec.center_lo, float), np.asarray(spec.center_hi, float)
    mid, half = (lo + hi) / 2, shrink * (hi - lo) / 2
    axes = [np.linspace(m - h, m + h, per_axis) for m, h in zip(mid, half)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))


@dataclass
class DemoMember:
    mu: int
    report: IsolatingBlockReport
    witness: CylinderWitness | None
    distance: float | None
    passed: bool
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"mu": self.mu, "report": self.report.to_json(), "distance": self.distance, "passed": self.passed,
                "invariance_defect": None if self.witness is None else self.witness.invariance_defect,
                "integrator_tol": None if self.witness is None else self.witness.integrator_tol,
                "diagnostics": self.diagnostics}


def persistence_demo(family: Sequence[SlowSystem], spec: IsolatingBlockSpec, delta: float, q: float,
                     dt: float = 0.01, grid_per_axis: int = 5) -> list[DemoMember]:
    """Block check plus cylinder witness for each member of a pendulum x weak family."""
    out = []
    for sys in family:
        F, Finv, chart, lam = slow_block_maps(sys, q, dt)
        report = check_block_conditions(F, spec, Finv)
        mu = sys.mu if sys.d > sys.m else 0
        if not report.passed:
            out.append(DemoMember(mu, report, None, None, False,
                                  {"lambda": lam, "reason": f"block check {report.verdict}"}))
            continue
        z = center_grid(spec, grid_per_axis)
        field = slow_field(sys, q)
        tol = integrator_tolerance(field, chart, np.hstack([np.zeros((len(z), spec.s + spec.u)), z]), dt)
        wit = cylinder_witness(F, Finv, spec, z, integrator_tol=tol)
        dist = wit.strong_distance(chart, spec.s, spec.u)
        ok = wit.inside and dist < delta and wit.invariance_defect <= 10 * max(tol, 1e-15)
        sub = float(np.abs(wit.xy).max()) <= spec.r / 2
        out.append(DemoMember(mu, report, wit, dist, bool(ok),
                              {"lambda": lam, "in_half_block": sub, "mollifier": "not needed (no strong center)"}))
    return out


def slow_field(sys: SlowSystem, q: float) -> VectorField:
    field = SlowHalfField(sys, block_decomposition(sys))
    if sys.d > sys.m:
        field = RescaledField(field, sys.m, RescalingSigma.from_sizes(sys.weak_sizes, q))
    return field

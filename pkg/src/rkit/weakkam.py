"""Discrete weak KAM theory on torus grids.

The backward Lax-Oleinik operator for ``L - c.v`` with time step ``h`` on the
grid ``(Z/N)^d`` is a min-plus convolution::

    (T u)(x) = min_o  [u + h U](x - o/N) + h g(o),
    g(o) = 1/2 v.S^{-1} v - c.v,   v = o / (N h),

over integer cell offsets ``o`` with ``|o_i| <= (W+1) N - 1`` (``W`` bounds the
winding). Offsets with the same residue mod ``N`` reach the same source cell,
so only the cheapest lift of each residue is kept. The potential term is ``h U`` at the departure point ("rectangle") or
``h (U(x - o/N) + U(x)) / 2`` ("trapezoid"); both keep the operator monotone.
A weak KAM solution satisfies ``T u = u - alpha h`` up to the anchor.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CalibrationError, ConvergenceError, ModelError, PrerequisiteError
from .slowsys import MechanicalLagrangian, SlowSystem, block_decomposition, cbar

DEFAULT_RESOLUTION = {1: 128, 2: 48, 3: 16}
_TABLE_BUDGET = 60_000_000  # cached gather-table entries


@dataclass(frozen=True)
class DiscreteActionConfig:
    h: float = 0.2
    W: int | None = None
    N: int | None = None
    rule: str = "trapezoid"

    def __post_init__(self):
        if not 0 < self.h <= 1:
            raise ModelError("time step must lie in (0, 1]")
        if self.W is not None and not 1 <= self.W <= 3:
            raise ModelError("winding bound must lie in 1..3")
        if self.rule not in ("rectangle", "trapezoid"):
            raise ModelError(f"unsupported quadrature rule {self.rule!r}")
        if self.N is not None and self.N < 1:
            raise ModelError("resolution must be positive")

    def resolution(self, d: int) -> int:
        if d > 3:
            raise ModelError("weak KAM grids are limited to d <= 3")
        return self.N or DEFAULT_RESOLUTION[d]

    def winding(self, S: np.ndarray, c) -> int:
        if self.W is not None:
            return self.W
        return 2 if np.linalg.norm(S @ np.asarray(c, float)) * self.h > 0.5 else 1


@dataclass
class GridValueFunction:
    d: int
    N: int
    values: np.ndarray
    alpha: float
    c: np.ndarray
    shift: float = 0.0
    residuals: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def grid(self) -> np.ndarray:
        return grid_points(self.d, self.N)

    def oscillation_along(self, axes: Sequence[int]) -> np.ndarray:
        """``max - min`` over the given axes, as a function of the remaining ones."""
        ax = tuple(axes)
        return self.values.max(axis=ax) - self.values.min(axis=ax)

    def to_csv(self, path) -> None:
        pts = self.grid()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"phi{i}" for i in range(self.d)] + ["u"])
            for p, v in zip(pts, self.flat):
                w.writerow([repr(float(x)) for x in p] + [repr(float(v))])


def grid_points(d: int, N: int) -> np.ndarray:
    axes = [np.arange(N) / N] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


class GridProblem:
    """Precomputed offsets, kinetic costs and potential samples for one (L, c, grid)."""

    def __init__(self, L: MechanicalLagrangian, c, cfg: DiscreteActionConfig, N: int | None = None):
        self.L = L
        self.d = L.d
        self.cfg = cfg
        self.N = N or cfg.resolution(self.d)
        self.c = np.asarray(c, dtype=float).reshape(self.d)
        self.h = cfg.h
        self.W = cfg.winding(L.S, self.c)
        N, d, h = self.N, self.d, self.h
        self.shape = (N,) * d
        self.P = N**d
        self.points = grid_points(d, N)
        hU = h * L.potential.evaluate(self.points) if not L.potential.is_zero() else np.zeros(self.P)
        w = 0.5 if cfg.rule == "trapezoid" else 1.0
        self.hU_src, self.hU_dst = w * hU, (1 - w) * hU
        R = (self.W + 1) * N - 1
        rng = np.arange(-R, R + 1)
        offs = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), axis=-1).reshape(-1, d)
        v = offs / (N * h)
        g = 0.5 * np.einsum("ki,ij,kj->k", v, L.Sinv, v) - v @ self.c
        order = np.lexsort(tuple(offs[:, i] for i in reversed(range(d))) + (h * g,))
        offs, hg = offs[order], (h * g)[order]
        # lifts with equal residue mod N act identically; keep the cheapest
        res = np.mod(offs, N) @ np.array([N ** (d - 1 - i) for i in range(d)])
        _, first = np.unique(res, return_index=True)
        keep = np.sort(first)
        self.offsets = offs[keep]
        self.hg = hg[keep]
        self.coords = np.stack(np.unravel_index(np.arange(self.P), self.shape), axis=1)
        self.strides = np.array([N ** (d - 1 - i) for i in range(d)])
        self._table = np.zeros((0, self.P), dtype=np.int32)

    def _sources(self, lo: int, hi: int) -> np.ndarray:
        """Flat indices of ``x - o`` for offsets lo..hi-1 and all grid points x."""
        o = self.offsets[lo:hi]
        src = np.mod(self.coords[None, :, :] - o[:, None, :], self.N)
        return (src @ self.strides).astype(np.int32)

    def _table_for(self, K: int) -> np.ndarray | None:
        if K * self.P > _TABLE_BUDGET:
            return None
        if len(self._table) < K:
            self._table = np.vstack([self._table, self._sources(len(self._table), K)])
        return self._table

    def candidate_count(self, f: np.ndarray) -> int:
        """Offsets that can attain the minimum: ``h g(o) <= min h g + osc(f)`` (exact pruning)."""
        osc = float(f.max() - f.min()) if np.all(np.isfinite(f)) else np.inf
        if not np.isfinite(osc):
            return len(self.hg)
        return int(np.searchsorted(self.hg, self.hg[0] + osc, side="right"))

    def apply(self, u_flat: np.ndarray, return_argmin: bool = False, chunk: int = 512):
        """Raw operator ``T u`` on a flat value array (or a batch of shape (B, P))."""
        f = u_flat + self.hU_src
        batched = f.ndim == 2
        F = f if batched else f[None, :]
        K = self.candidate_count(F)
        table = self._table_for(K)
        best = np.full(F.shape, np.inf)
        arg = np.zeros(F.shape, dtype=np.int64) if return_argmin else None
        for lo in range(0, K, chunk):
            hi = min(K, lo + chunk)
            src = table[lo:hi] if table is not None else self._sources(lo, hi)
            vals = F[:, src] + self.hg[lo:hi, None][None]  # (B, k, P)
            j = np.argmin(vals, axis=1)
            m = np.take_along_axis(vals, j[:, None, :], axis=1)[:, 0, :]
            better = m < best
            best = np.where(better, m, best)
            if return_argmin:
                arg = np.where(better, j + lo, arg)
        best += self.hU_dst
        out = best if batched else best[0]
        if return_argmin:
            return out, (arg if batched else arg[0])
        return out

    def velocity(self, offset_index) -> np.ndarray:
        return self.offsets[offset_index] / (self.N * self.h)


def lax_oleinik_step(u: GridValueFunction, L: MechanicalLagrangian, c, cfg: DiscreteActionConfig,
                     problem: GridProblem | None = None) -> GridValueFunction:
    """One synchronous sweep, anchored at the origin; the subtracted constant is ``shift``."""
    prob = problem or GridProblem(L, c, cfg, u.N)
    Tu = prob.apply(u.flat)
    s = float(Tu[0])
    return GridValueFunction(u.d, u.N, (Tu - s).reshape(u.values.shape), -s / cfg.h, np.asarray(c, float), s)


def solve_weak_kam(L: MechanicalLagrangian, c, cfg: DiscreteActionConfig, tol: float = 1e-8,
                   max_iter: int = 20000, u0: np.ndarray | None = None,
                   problem: GridProblem | None = None) -> GridValueFunction:
    """Fixed point of the anchored operator by averaged iteration ``u <- (u + T^ u) / 2``.

    Stops when ``sup |T u - u - s| < tol`` for the constant ``s`` centring the
    residual; then ``alpha = -s / h``.
    """
    prob = problem or GridProblem(L, c, cfg)
    u = np.zeros(prob.P) if u0 is None else np.asarray(u0, float).reshape(-1) - float(np.asarray(u0).reshape(-1)[0])
    history = []
    for _ in range(max_iter):
        Tu = prob.apply(u)
        diff = Tu - u
        hi, lo = float(diff.max()), float(diff.min())
        res = 0.5 * (hi - lo)
        history.append(res)
        if res < tol:
            s = 0.5 * (hi + lo)
            return GridValueFunction(prob.d, prob.N, u.reshape(prob.shape), -s / prob.h,
                                     prob.c.copy(), s, history)
        u = 0.5 * (u + (Tu - Tu[0]))
    raise ConvergenceError(f"no convergence in {max_iter} iterations (residual {history[-1]:.3g})", history)


def weak_kam_for(sys: SlowSystem, c, cfg: DiscreteActionConfig, **kw) -> GridValueFunction:
    return solve_weak_kam(sys.lagrangian(), c, cfg, **kw)


# ---------------------------------------------------------------------------
# Barrier, Aubry and Mane sets
# ---------------------------------------------------------------------------

@dataclass
class BarrierTable:
    bases: np.ndarray  # flat grid indices of base points
    values: np.ndarray  # (len(bases), P): h(x_b, y)
    iterations: int
    converged: bool
    N: int
    d: int

    def diagonal(self) -> np.ndarray:
        return self.values[np.arange(len(self.bases)), self.bases]

    def to_csv(self, path) -> None:
        pts = grid_points(self.d, self.N)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.d)] + [f"y{i}" for i in range(self.d)] + ["h"])
            for b, row in zip(self.bases, self.values):
                for j, v in enumerate(row):
                    w.writerow([repr(float(x)) for x in pts[b]] + [repr(float(x)) for x in pts[j]] + [repr(float(v))])


def peierls_barrier(L: MechanicalLagrangian, c, cfg: DiscreteActionConfig, alpha: float,
                    bases: Sequence[int] | None = None, iters: int = 1000, window: int = 20,
                    tol: float = 1e-6, problem: GridProblem | None = None) -> BarrierTable:
    """``h(x, y)`` as the minimum of ``(T^n delta_x)(y) + n alpha h`` over a trailing window.

    Iterates in blocks of ``window`` steps and stops once two consecutive block
    minima agree to ``tol`` (or after ``iters`` steps, flagged unconverged).
    """
    prob = problem or GridProblem(L, c, cfg)
    b = np.arange(prob.P) if bases is None else np.asarray(bases, dtype=np.int64)
    rows = np.arange(len(b))
    V = np.full((len(b), prob.P), np.inf)
    V[rows, b] = 0.0
    prev, converged, n = None, False, 0
    while n < iters:
        block = np.full_like(V, np.inf)
        for _ in range(window):
            V = prob.apply(V) + alpha * prob.h
            np.minimum(block, V, out=block)
            n += 1
        if block[rows, b].min() < -1e3 * tol:
            raise CalibrationError(f"barrier diagonal reached {block[rows, b].min():.3g}; alpha is inconsistent")
        if prev is not None and np.max(np.abs(block - prev)) < tol:
            converged = True
            break
        prev = block
    return BarrierTable(b, block, n, converged, prob.N, prob.d)


def aubry_set(L, c, cfg, tol: float, table: BarrierTable | None = None, alpha: float | None = None,
              **kw) -> np.ndarray:
    """Flat grid indices x with ``h(x, x) < tol``."""
    if table is None:
        if alpha is None:
            alpha = solve_weak_kam(L, c, cfg).alpha
        table = peierls_barrier(L, c, cfg, alpha, **kw)
    return table.bases[table.diagonal() < tol]


def mane_set(L, c, cfg, tol: float, table: BarrierTable | None = None, aubry: np.ndarray | None = None,
             alpha: float | None = None, **kw) -> np.ndarray:
    """Flat grid indices y with ``min_{x,z in A} h(x,y) + h(y,z) - h(x,z) < tol``."""
    if table is None:
        if alpha is None:
            alpha = solve_weak_kam(L, c, cfg).alpha
        table = peierls_barrier(L, c, cfg, alpha, **kw)
    if aubry is None:
        aubry = table.bases[table.diagonal() < tol]
    if len(aubry) == 0:
        raise PrerequisiteError("empty Aubry set")
    pos = {int(x): i for i, x in enumerate(table.bases)}
    if any(int(x) not in pos for x in aubry):
        raise PrerequisiteError("barrier table lacks rows for some Aubry points")
    rows = np.array([pos[int(x)] for x in aubry])
    H_xy = table.values[rows]  # (A, P)
    ys = table.bases
    H_yz = table.values[:, aubry]  # (Y, A)
    H_xz = table.values[rows][:, aubry]  # (A, A)
    defect = H_xy[:, ys][:, :, None] + H_yz[None, :, :] - H_xz[:, None, :]
    best = defect.min(axis=(0, 2))
    return ys[best < tol]


def mane_defect(table: BarrierTable, aubry: np.ndarray) -> np.ndarray:
    pos = {int(x): i for i, x in enumerate(table.bases)}
    rows = np.array([pos[int(x)] for x in aubry])
    ys = table.bases
    d = table.values[rows][:, ys][:, :, None] + table.values[:, aubry][None] - table.values[rows][:, aubry][:, None, :]
    return d.min(axis=(0, 2))


def static_classes(table: BarrierTable, aubry: np.ndarray, tol: float) -> list[list[int]]:
    """Groups of Aubry points with ``h(x,y) + h(y,x) < tol`` (reported only)."""
    pos = {int(x): i for i, x in enumerate(table.bases)}
    classes: list[list[int]] = []
    for x in map(int, aubry):
        for cl in classes:
            y = cl[0]
            if table.values[pos[x], y] + table.values[pos[y], x] < tol:
                cl.append(x)
                break
        else:
            classes.append([x])
    return classes


# ---------------------------------------------------------------------------
# Calibrated curves and rotation numbers
# ---------------------------------------------------------------------------

@dataclass
class DiscreteCurve:
    positions: np.ndarray  # lifted positions, backward in time, (steps+1, d)
    velocities: np.ndarray  # forward-time chord velocities, (steps, d)
    h: float


def calibrated_curve(u: GridValueFunction, L: MechanicalLagrangian, c, x0, steps: int,
                     cfg: DiscreteActionConfig, problem: GridProblem | None = None) -> DiscreteCurve:
    """Backward argmin chain ``y_{k+1} = y_k - o_k / N`` of the one-step problem."""
    prob = problem or GridProblem(L, c, cfg, u.N)
    N = prob.N
    cell = np.mod(np.rint(np.asarray(x0, float).reshape(prob.d) * N).astype(np.int64), N)
    _, arg = prob.apply(u.flat, return_argmin=True)
    lifted = cell.astype(float) / N
    pos, vel = [lifted.copy()], []
    for _ in range(steps):
        flat = int(np.ravel_multi_index(tuple(cell), prob.shape))
        o = prob.offsets[arg[flat]]
        vel.append(o / (N * prob.h))
        cell = np.mod(cell - o, N)
        lifted = lifted - o / N
        pos.append(lifted.copy())
    return DiscreteCurve(np.array(pos), np.array(vel), prob.h)


def rotation_number(curve: DiscreteCurve, discard: int = 0) -> np.ndarray:
    """Time average of the discrete velocities (optionally dropping a transient)."""
    if len(curve.velocities) - discard < 1:
        raise ValueError("trajectory too short")
    return curve.velocities[discard:].mean(axis=0)


# ---------------------------------------------------------------------------
# Alpha relation, semi-continuity, Legendre duality
# ---------------------------------------------------------------------------

@dataclass
class AlphaRelationReport:
    alpha_slow: float
    alpha_strong: float
    cbar: list
    quadratic: float
    defect: float
    defect_opposite_sign: float
    uwk_c0: float
    solver_alpha_tol: float
    budget: float
    passed: bool
    convention: str = "alpha_s(c) ~ alpha_st(cbar) + 1/2 c_wk . Ctilde c_wk"

    def to_json(self) -> dict:
        return dict(self.__dict__)


def verify_alpha_relation(sys_slow: SlowSystem, c, cfg: DiscreteActionConfig, tol: float = 1e-8,
                          sys_strong: SlowSystem | None = None, max_iter: int = 20000) -> AlphaRelationReport:
    """Compare ``alpha_s(c)`` against ``alpha_st(c_bar) + 1/2 c^wk.C~ c^wk``."""
    from .averaging import c0_norm

    dec = block_decomposition(sys_slow)
    c = np.asarray(c, float)
    cb = cbar(dec, c)
    strong = sys_strong or sys_slow.strong_system()
    N = cfg.resolution(sys_slow.d)
    cfg_st = DiscreteActionConfig(h=cfg.h, W=cfg.W, N=N)
    a_s = solve_weak_kam(sys_slow.lagrangian(), c, cfg, tol=tol, max_iter=max_iter)
    a_st = solve_weak_kam(strong.lagrangian(), cb, cfg_st, tol=tol, max_iter=max_iter)
    cwk = c[dec.m:]
    quad = 0.5 * float(cwk @ dec.Ctilde @ cwk)
    defect = abs(a_s.alpha - a_st.alpha - quad)
    alt = abs(a_s.alpha - a_st.alpha + quad)
    uwk = c0_norm(sys_slow.weak_potential)
    alpha_tol = (a_s.residuals[-1] + a_st.residuals[-1]) / cfg.h
    budget = uwk + 2 * max(alpha_tol, tol)
    return AlphaRelationReport(a_s.alpha, a_st.alpha, cb.tolist(), quad, defect, alt, uwk,
                               alpha_tol, budget, bool(defect <= budget))


def legendre_dual(c_samples, alpha_samples, rho) -> np.ndarray:
    """Discrete transform ``beta(rho) = max_k c_k . rho - alpha_k``."""
    C = np.asarray(c_samples, float)
    C = C[:, None] if C.ndim == 1 else C
    a = np.asarray(alpha_samples, float)
    R = np.asarray(rho, float)
    scalar = R.ndim == 0
    R = np.atleast_1d(R)
    R = R[:, None] if R.ndim == 1 and C.shape[1] == 1 else np.atleast_2d(R)
    out = (R @ C.T - a[None, :]).max(axis=1)
    return out[0] if scalar else out


def midpoint_convex(x, y, tol: float = 1e-9) -> bool:
    """Midpoint convexity on an equally spaced 1D sample."""
    y = np.asarray(y, float)
    return bool(np.all(y[1:-1] <= 0.5 * (y[:-2] + y[2:]) + tol))


@dataclass
class SemicontinuityReport:
    mus: list
    oscillations: list
    profile_gaps: list
    osc_slope: float | None
    slope_bound: float
    osc_nonincreasing: bool
    gap_nonincreasing: bool
    slope_ok: bool
    passed: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


def nonincreasing(seq: Sequence[float], slack: float = 0.1, floor: float = 0.0) -> bool:
    """Each term is at most (1 + slack) times the previous one (terms below ``floor`` count as 0)."""
    s = [0.0 if x <= floor else x for x in seq]
    return all(b <= a * (1 + slack) + floor for a, b in zip(s, s[1:]))


def semicontinuity_experiment(strong: SlowSystem, family: Sequence[SlowSystem], cs: Sequence,
                              cfg: DiscreteActionConfig, q: float, tol: float = 1e-8,
                              floor: float = 1e-7) -> SemicontinuityReport:
    """Weak-angle oscillation and strong-profile gap of ``u_i`` across a dominant family."""
    m = strong.m
    d = family[0].d
    N = cfg.resolution(d)
    dec0 = block_decomposition(family[0])
    cb = cbar(dec0, np.asarray(cs[0], float))
    ust = solve_weak_kam(strong.lagrangian(), cb, DiscreteActionConfig(h=cfg.h, W=cfg.W, N=N), tol=tol)
    weak_axes = tuple(range(m, d))
    mus, oscs, gaps = [], [], []
    for sys, c in zip(family, cs):
        u = solve_weak_kam(sys.lagrangian(), c, cfg, tol=tol)
        mus.append(sys.mu)
        oscs.append(float(u.oscillation_along(weak_axes).max()))
        prof = u.values[(slice(None),) * m + (0,) * (d - m)]
        gaps.append(float(np.abs(prof - ust.values).max()))
    slope_bound = -(q / 2 - d + m) + 0.5
    pos = [o for o in oscs if o > floor]
    slope = None
    if len(pos) == len(oscs) and len(oscs) >= 2:
        slope = float(np.polyfit(np.log(mus), np.log(oscs), 1)[0])
    slope_ok = slope is None or slope <= slope_bound
    a = nonincreasing(oscs, 0.1, floor)
    b = nonincreasing(gaps, 0.1, floor)
    return SemicontinuityReport(mus, oscs, gaps, slope, slope_bound, a, b, slope_ok, a and b and slope_ok)

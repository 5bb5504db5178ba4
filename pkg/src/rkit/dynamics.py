"""Vector fields of slow systems, batched RK4 flows and rescaling deviations.

States are arrays of shape (N, 2d) laid out as ``(phi^st, v^st, phi^wk, y)``
where ``y`` is ``I^wk`` in the half-Lagrangian chart and ``v^wk`` in the
Lagrangian chart. The chart relation follows from ``v = S I``::

    v^wk = B^T A^{-1} v^st + C~ I^wk
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.stats import qmc

from .errors import BlowUpError, ChartError
from .slowsys import BlockDecomposition, SlowSystem, block_decomposition, spd_inverse

HALF = "half"
LAGRANGIAN = "lagrangian"


@dataclass(frozen=True)
class PhasePoint:
    phi_st: np.ndarray
    v_st: np.ndarray
    phi_wk: np.ndarray
    y_wk: np.ndarray
    chart: str = HALF

    def __post_init__(self):
        if self.chart not in (HALF, LAGRANGIAN):
            raise ChartError(f"unknown chart {self.chart!r}")
        for name in ("phi_st", "v_st", "phi_wk", "y_wk"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.phi_st, self.v_st, self.phi_wk, self.y_wk])

    @classmethod
    def from_array(cls, x, m: int, chart: str = HALF) -> "PhasePoint":
        x = np.asarray(x, dtype=float)
        k = (len(x) - 2 * m) // 2
        return cls(x[:m], x[m:2 * m], x[2 * m:2 * m + k], x[2 * m + k:], chart)


@dataclass(frozen=True)
class RescalingSigma:
    sigma: tuple[float, ...]

    def __post_init__(self):
        s = tuple(float(x) for x in self.sigma)
        if any(not 0 < x <= 1 for x in s):
            raise ValueError("sigma entries must lie in (0, 1]")
        if any(a < b for a, b in zip(s, s[1:])):
            raise ValueError("sigma must be nonincreasing")
        object.__setattr__(self, "sigma", s)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], q: float) -> "RescalingSigma":
        """``sigma_j = |k_j^wk|^{-(q+1)/3}`` in basis order."""
        return cls(tuple(float(s) ** (-(q + 1) / 3) for s in sizes))

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.sigma)


def _split(x: np.ndarray, m: int, d: int):
    k = d - m
    return x[:, :m], x[:, m:2 * m], x[:, 2 * m:2 * m + k], x[:, 2 * m + k:]


def _as_states(x) -> np.ndarray:
    x = np.asarray(x.to_array() if isinstance(x, PhasePoint) else x, dtype=float)
    return np.atleast_2d(x)


def _check_chart(x, chart: str):
    if isinstance(x, PhasePoint) and x.chart != chart:
        raise ChartError(f"expected a point in the {chart} chart, got {x.chart}")


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

class VectorField:
    """Autonomous field on R^D evaluated on batches of shape (N, D)."""

    dim: int

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class LinearField(VectorField):
    def __init__(self, M):
        self.M = np.atleast_2d(np.asarray(M, dtype=float))
        self.dim = self.M.shape[0]

    def __call__(self, x):
        return np.atleast_2d(x) @ self.M.T

    def jacobian(self, x):
        x = np.atleast_2d(x)
        return np.broadcast_to(self.M, (len(x),) + self.M.shape).copy()


class SlowHalfField(VectorField):
    """Half-Lagrangian field ``X^s``."""

    def __init__(self, sys: SlowSystem, dec: BlockDecomposition | None = None):
        self.sys = sys
        self.dec = dec or block_decomposition(sys)
        self.m, self.d = sys.m, sys.d
        self.dim = 2 * self.d
        self.U = sys.potential
        self.BtAinv = self.dec.BtAinv

    def _pieces(self, x, order):
        m, d = self.m, self.d
        ps, vs, pw, Iw = _split(x, m, d)
        phi = np.hstack([ps, pw])
        return ps, vs, pw, Iw, self.U.evaluate(phi, order=order)

    def __call__(self, x):
        x = np.atleast_2d(x)
        m = self.m
        ps, vs, pw, Iw, (_, g) = self._pieces(x, 1)
        gs, gw = g[:, :m], g[:, m:]
        dvs = gs @ self.dec.A.T + gw @ self.dec.B.T
        dpw = vs @ self.BtAinv.T + Iw @ self.dec.Ctilde.T
        return np.hstack([vs, dvs, dpw, gw])

    def jacobian(self, x):
        x = np.atleast_2d(x)
        m, d = self.m, self.d
        k = d - m
        _, _, _, _, (_, _, H) = self._pieces(x, 2)
        A, B = self.dec.A, self.dec.B
        Hss, Hsw, Hws, Hww = H[:, :m, :m], H[:, :m, m:], H[:, m:, :m], H[:, m:, m:]
        J = np.zeros((len(x), 2 * d, 2 * d))
        sl_ps, sl_vs = slice(0, m), slice(m, 2 * m)
        sl_pw, sl_I = slice(2 * m, 2 * m + k), slice(2 * m + k, 2 * d)
        J[:, sl_ps, sl_vs] = np.eye(m)
        J[:, sl_vs, sl_ps] = A @ Hss + B @ Hws
        J[:, sl_vs, sl_pw] = A @ Hsw + B @ Hww
        J[:, sl_pw, sl_vs] = self.BtAinv
        J[:, sl_pw, sl_I] = self.dec.Ctilde
        J[:, sl_I, sl_ps] = Hws
        J[:, sl_I, sl_pw] = Hww
        return J

    def energy(self, x) -> np.ndarray:
        """``H^s`` written in half-Lagrangian coordinates."""
        x = np.atleast_2d(x)
        m, d = self.m, self.d
        ps, vs, pw, Iw = _split(x, m, d)
        Ist = (vs - Iw @ self.dec.B.T) @ self.dec.Ainv.T
        I = np.hstack([Ist, Iw])
        return self.sys.hamiltonian(np.hstack([ps, pw]), I)


class StrongLiftField(VectorField):
    """Trivial lift ``X^st_L`` of the strong Lagrangian field; weak blocks vanish."""

    def __init__(self, sys: SlowSystem):
        self.m, self.d = sys.m, sys.d
        self.dim = 2 * self.d
        self.A = sys.S[: self.m, : self.m]
        self.Ust = sys.ust

    def __call__(self, x):
        x = np.atleast_2d(x)
        m = self.m
        ps, vs, _, _ = _split(x, m, self.d)
        _, g = self.Ust.evaluate(ps, order=1)
        out = np.zeros_like(x)
        out[:, :m] = vs
        out[:, m:2 * m] = g @ self.A.T
        return out

    def jacobian(self, x):
        x = np.atleast_2d(x)
        m = self.m
        ps = x[:, :m]
        _, _, H = self.Ust.evaluate(ps, order=2)
        J = np.zeros((len(x), self.dim, self.dim))
        J[:, :m, m:2 * m] = np.eye(m)
        J[:, m:2 * m, :m] = self.A @ H
        return J


class RescaledField(VectorField):
    """``X~ = Phi o X o Phi^{-1}`` with ``Phi: (phi^wk, I^wk) -> (Sigma phi^wk, Sigma^{-1} I^wk)``."""

    def __init__(self, base: VectorField, m: int, sigma: RescalingSigma):
        self.base = base
        self.m = m
        self.dim = base.dim
        d = self.dim // 2
        s = np.asarray(sigma.sigma)
        if len(s) != d - m:
            raise ValueError("one sigma per weak direction")
        self.fwd = np.concatenate([np.ones(2 * m), s, 1.0 / s])
        self.inv = 1.0 / self.fwd

    def to_rescaled(self, x):
        return np.atleast_2d(x) * self.fwd

    def from_rescaled(self, x):
        return np.atleast_2d(x) * self.inv

    def __call__(self, x):
        return self.base(self.from_rescaled(x)) * self.fwd

    def jacobian(self, x):
        J = self.base.jacobian(self.from_rescaled(x))
        return self.fwd[None, :, None] * J * self.inv[None, None, :]


class LagrangianField(VectorField):
    """Euler-Lagrange field of ``L^s`` in the chart ``(phi^st, v^st, phi^wk, v^wk)``: ``v' = S grad U``."""

    def __init__(self, sys: SlowSystem):
        self.sys = sys
        self.m, self.d = sys.m, sys.d
        self.dim = 2 * self.d
        self.U = sys.potential
        k = self.d - self.m
        m = self.m
        self.pos = np.r_[0:m, 2 * m:2 * m + k]
        self.vel = np.r_[m:2 * m, 2 * m + k:2 * self.d]

    def __call__(self, x):
        x = np.atleast_2d(x)
        _, g = self.U.evaluate(x[:, self.pos], order=1)
        out = np.zeros_like(x)
        out[:, self.pos] = x[:, self.vel]
        out[:, self.vel] = g @ self.sys.S.T
        return out

    def jacobian(self, x):
        x = np.atleast_2d(x)
        _, _, H = self.U.evaluate(x[:, self.pos], order=2)
        J = np.zeros((len(x), self.dim, self.dim))
        J[:, self.pos[:, None], self.vel[None, :]] = np.eye(self.d)
        J[:, self.vel[:, None], self.pos[None, :]] = self.sys.S @ H
        return J


def eval_Xs(sys: SlowSystem, dec: BlockDecomposition, pt) -> np.ndarray:
    _check_chart(pt, HALF)
    return SlowHalfField(sys, dec)(_as_states(pt))


def eval_XstL(sys: SlowSystem, pt) -> np.ndarray:
    return StrongLiftField(sys)(_as_states(pt))


def half_to_lagrangian(dec: BlockDecomposition, x) -> np.ndarray:
    _check_chart(x, HALF)
    x = _as_states(x).copy()
    m, d = dec.m, dec.d
    ps, vs, pw, Iw = _split(x, m, d)
    x[:, 2 * m + (d - m):] = vs @ dec.BtAinv.T + Iw @ dec.Ctilde.T
    return x


def lagrangian_to_half(dec: BlockDecomposition, x) -> np.ndarray:
    _check_chart(x, LAGRANGIAN)
    x = _as_states(x).copy()
    m, d = dec.m, dec.d
    ps, vs, pw, vw = _split(x, m, d)
    Ctinv = spd_inverse(dec.Ctilde, "C~")
    x[:, 2 * m + (d - m):] = (vw - vs @ dec.BtAinv.T) @ Ctinv.T
    return x


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (T, N, D)

    def to_csv(self, path, which: int = 0) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            D = self.states.shape[-1]
            w.writerow(["t"] + [f"x{i}" for i in range(D)])
            for t, row in zip(self.times, self.states[:, which]):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def _rk4_step(f: Callable, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _nsteps(T: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = int(round(abs(T) / dt))
    return max(n, 1)


def integrate_flow(field: VectorField | Callable, x0, T: float, dt: float, record_every: int = 1) -> Trajectory:
    """Classical RK4 on a batch of initial states; negative ``T`` integrates backward."""
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    n = _nsteps(T, dt)
    h = np.sign(T) * abs(T) / n if T else 0.0
    times, states = [0.0], [x.copy()]
    for i in range(1, n + 1):
        x = _rk4_step(field, x, h)
        if not np.all(np.isfinite(x)):
            raise BlowUpError("non-finite state during integration", last_time=(i - 1) * h)
        if i % record_every == 0 or i == n:
            times.append(i * h)
            states.append(x.copy())
    return Trajectory(np.array(times), np.array(states))


def flow_map(field: VectorField | Callable, x0, T: float, dt: float) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    n = _nsteps(T, dt)
    h = np.sign(T) * abs(T) / n if T else 0.0
    for i in range(n):
        x = _rk4_step(field, x, h)
        if not np.all(np.isfinite(x)):
            raise BlowUpError("non-finite state during integration", last_time=i * h)
    return x


def time1_map_with_jacobian(field: VectorField, x0, dt: float, T: float = 1.0):
    """Time-``T`` map and its Jacobian from the variational equation ``J' = DF(x) J``."""
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    N, D = x.shape
    J = np.broadcast_to(np.eye(D), (N, D, D)).copy()

    def aug(state):
        xs, Js = state
        return field(xs), field.jacobian(xs) @ Js

    n = _nsteps(T, dt)
    h = np.sign(T) * abs(T) / n if T else 0.0
    for i in range(n):
        k1 = aug((x, J))
        k2 = aug((x + 0.5 * h * k1[0], J + 0.5 * h * k1[1]))
        k3 = aug((x + 0.5 * h * k2[0], J + 0.5 * h * k2[1]))
        k4 = aug((x + h * k3[0], J + h * k3[1]))
        x = x + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        J = J + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(J))):
            raise BlowUpError("non-finite state during integration", last_time=i * h)
    return x, J


def fd_jacobian(fmap: Callable, x0, eps: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of a batched map."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    N, D = x0.shape
    J = np.zeros((N, D, D))
    for j in range(D):
        e = np.zeros(D)
        e[j] = eps
        J[:, :, j] = (fmap(x0 + e) - fmap(x0 - e)) / (2 * eps)
    return J


def linear_time1(M) -> np.ndarray:
    return expm(np.asarray(M, dtype=float))


# ---------------------------------------------------------------------------
# Rescaling deviations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeviationReport:
    mu: int
    sigma: tuple[float, ...]
    c0_projected: float
    c1: float
    box: dict
    samples: int

    def to_json(self) -> dict:
        return {
            "mu": self.mu,
            "sigma": list(self.sigma),
            "c0_projected": self.c0_projected,
            "c1": self.c1,
            "box": self.box,
            "samples": self.samples,
        }


DEFAULT_BOX = {"angle": [0.0, 1.0], "v_st": 2.0, "I_wk": 2.0}


def sample_box(m: int, d: int, samples: int, box: dict | None = None, seed: int = 0) -> np.ndarray:
    """Low-discrepancy (Sobol) samples of ``(phi^st, v^st, phi~^wk, I~^wk)``."""
    box = {**DEFAULT_BOX, **(box or {})}
    k = d - m
    sob = qmc.Sobol(2 * d, scramble=True, seed=seed)
    u = sob.random(samples)
    lo, hi = box["angle"]
    x = np.empty_like(u)
    x[:, :m] = lo + (hi - lo) * u[:, :m]
    x[:, m:2 * m] = box["v_st"] * (2 * u[:, m:2 * m] - 1)
    x[:, 2 * m:2 * m + k] = lo + (hi - lo) * u[:, 2 * m:2 * m + k]
    x[:, 2 * m + k:] = box["I_wk"] * (2 * u[:, 2 * m + k:] - 1)
    return x


def rescaled_deviation(sys: SlowSystem, dec: BlockDecomposition | None, q: float, box: dict | None = None,
                       samples: int = 4096, seed: int = 0) -> DeviationReport:
    """Sup over a sample box of the projected C^0 and the C^1 deviation of ``X~^s`` from ``X^st_L``."""
    if q <= 2:
        raise ValueError("the rescaling rates need q > 2")
    dec = dec or block_decomposition(sys)
    sizes = sys.weak_sizes
    sig = RescalingSigma.from_sizes(sizes, q)
    m, d = sys.m, sys.d
    Xt = RescaledField(SlowHalfField(sys, dec), m, sig)
    XL = StrongLiftField(sys)
    x = sample_box(m, d, samples, box, seed)
    diff = Xt(x) - XL(x)
    c0 = float(np.linalg.norm(diff[:, :2 * m], axis=1).max())
    dJ = Xt.jacobian(x) - XL.jacobian(x)
    c1 = float(np.linalg.norm(dJ, ord=2, axis=(1, 2)).max())
    return DeviationReport(sys.mu, sig.sigma, c0, c1, {**DEFAULT_BOX, **(box or {})}, samples)


def el_acceleration_residual(sys: SlowSystem, traj: Trajectory, chart: str = HALF) -> float:
    """``sup ||gamma''^st - A d_st U^st(gamma^st)||`` from fourth-order central differences of ``v^st``."""
    m = sys.m
    t = traj.times
    vs = traj.states[:, :, m:2 * m]
    ps = traj.states[:, :, :m]
    dt = np.diff(t)
    if len(t) < 5 or np.ptp(dt) > 1e-9 * abs(dt[0]):
        raise ValueError("need at least 5 uniformly recorded samples")
    acc = (vs[:-4] - 8 * vs[1:-3] + 8 * vs[3:-1] - vs[4:]) / (12 * dt[0])
    A = sys.S[:m, :m]
    inner = ps[2:-2].reshape(-1, m)
    _, g = sys.ust.evaluate(inner, order=1)
    target = (g @ A.T).reshape(acc.shape)
    return float(np.linalg.norm(acc - target, axis=-1).max())

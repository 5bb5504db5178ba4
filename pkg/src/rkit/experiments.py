"""Experiment configurations, dominant families and task runners."""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .averaging import (
    FourierHamiltonian,
    TrigPolynomial,
    c0_norm,
    calibrate_kappa,
    decaying_hamiltonian,
    dominance_check,
    fit_loglog_slope,
)
from .dynamics import rescaled_deviation
from .errors import ConfigError, FamilyError
from .lattice import OrderedBasis, ResonanceLattice, adapted_basis_report, is_irreducible, saturate, supnorm
from .nhic import IsolatingBlockSpec, check_block_conditions, linear_map, persistence_demo
from .slowsys import (
    ConvexModel,
    SlowSystem,
    block_decomposition,
    build_slow_system,
    cbar,
    lagrangian_split_eval,
    slow_system_from_potentials,
)
from .weakkam import DiscreteActionConfig, semicontinuity_experiment, solve_weak_kam, verify_alpha_relation

SCHEMA = "rkit.experiment/1"
TASKS = ("basis", "slow", "rescale-scan", "weakkam", "semicont", "nhic", "report")


# ---------------------------------------------------------------------------
# Strict config parsing
# ---------------------------------------------------------------------------

def _strict(obj: Any, allowed: set, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    return obj


def _num(obj: dict, key: str, default, lo=None, hi=None, where: str = "", integer: bool = False,
         lo_open: bool = False):
    v = obj.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number")
    if integer and int(v) != v:
        raise ConfigError(f"{where}.{key}: expected an integer")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(f"{where}.{key}={v} below {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"{where}.{key}={v} above {hi}")
    return int(v) if integer else float(v)


def _int_rows(v, where: str) -> list[list[int]]:
    if not isinstance(v, list) or not all(isinstance(r, list) and all(isinstance(x, int) and not isinstance(x, bool)
                                                                        for x in r) for r in v):
        raise ConfigError(f"{where}: expected a list of integer vectors")
    return v


@dataclass(frozen=True)
class NumericParams:
    h: float = 0.2
    N: int | None = None
    W: int | None = None
    rule: str = "trapezoid"
    tol: float = 1e-8
    max_iter: int = 20000
    dt: float = 0.01
    q: float = 5.0
    kappa: float | None = None
    samples: int = 4096
    block_r: float = 1e-3
    cone_mu: float = 2.0
    nu_slack: float = 1.0
    delta: float = 1e-3
    c: tuple = ()

    @classmethod
    def parse(cls, obj: dict | None) -> "NumericParams":
        obj = _strict(obj or {}, set(cls.__dataclass_fields__), "numeric")
        w = "numeric"
        rule = obj.get("rule", "trapezoid")
        if rule not in ("rectangle", "trapezoid"):
            raise ConfigError("numeric.rule must be 'rectangle' or 'trapezoid'")
        c = obj.get("c", [])
        if not isinstance(c, list) or not all(isinstance(x, (list, int, float)) for x in c):
            raise ConfigError("numeric.c: expected a list of cohomology vectors")
        return cls(
            h=_num(obj, "h", 0.2, 0, 1, w, lo_open=True),
            N=_num(obj, "N", None, 1, 256, w, integer=True),
            W=_num(obj, "W", None, 1, 3, w, integer=True),
            rule=rule,
            tol=_num(obj, "tol", 1e-8, 0, 1e-2, w, lo_open=True),
            max_iter=_num(obj, "max_iter", 20000, 1, 10**6, w, integer=True),
            dt=_num(obj, "dt", 0.01, 0, 0.1, w, lo_open=True),
            q=_num(obj, "q", 5.0, 0, 50, w, lo_open=True),
            kappa=_num(obj, "kappa", None, 1, None, w, lo_open=True),
            samples=_num(obj, "samples", 4096, 16, 10**6, w, integer=True),
            block_r=_num(obj, "block_r", 1e-3, 0, 1, w, lo_open=True),
            cone_mu=_num(obj, "cone_mu", 2.0, 1, 100, w, lo_open=True),
            nu_slack=_num(obj, "nu_slack", 1.0, 0, None, w),
            delta=_num(obj, "delta", 1e-3, 0, None, w, lo_open=True),
            c=tuple(tuple(np.atleast_1d(np.asarray(x, float)).tolist()) for x in c),
        )

    def action_config(self) -> DiscreteActionConfig:
        return DiscreteActionConfig(h=self.h, W=self.W, N=self.N, rule=self.rule)


def _potential(obj: dict | None, dim: int, where: str) -> dict:
    """Validated potential rule (resolved later, once the basis is known)."""
    if obj is None:
        return {"type": "zero"}
    _strict(obj, {"type", "eps", "l", "amplitude", "decay", "terms"}, where)
    kind = obj.get("type")
    if kind == "zero":
        return {"type": "zero"}
    if kind == "pendulum":
        return {"type": "pendulum", "eps": _num(obj, "eps", 0.25, 0, None, where, lo_open=True)}
    if kind == "cosine":
        l = obj.get("l")
        if not isinstance(l, list) or len(l) != dim or not all(isinstance(x, int) for x in l):
            raise ConfigError(f"{where}.l: expected {dim} integers")
        return {"type": "cosine", "l": l, "amplitude": _num(obj, "amplitude", 1.0, None, None, where),
                "decay": _num(obj, "decay", 0.0, 0, None, where)}
    if kind == "terms":
        try:
            TrigPolynomial.from_json({"torus_dim": dim, "terms": obj.get("terms", [])})
        except Exception as exc:  # noqa: BLE001
            raise ConfigError(f"{where}.terms: {exc}") from exc
        return {"type": "terms", "terms": obj.get("terms", [])}
    raise ConfigError(f"{where}.type must be zero, pendulum, cosine or terms")


def build_potential(rule: dict, dim: int, mu: float = 1.0) -> TrigPolynomial:
    kind = rule["type"]
    if kind == "zero":
        return TrigPolynomial.zero(dim)
    if kind == "pendulum":
        if dim != 1:
            raise ConfigError("a pendulum potential needs one strong angle")
        return pendulum_potential(rule["eps"])
    if kind == "cosine":
        return TrigPolynomial.cosine(rule["l"], rule["amplitude"] * float(mu) ** (-rule["decay"]))
    return TrigPolynomial.from_json({"torus_dim": dim, "terms": rule["terms"]})


def pendulum_potential(eps: float) -> TrigPolynomial:
    """``eps (1 - cos 2 pi phi)`` on the circle."""
    return TrigPolynomial.cosine([1], -eps) + TrigPolynomial.cosine([0], eps)


@dataclass(frozen=True)
class FamilyRule:
    """Weak vectors ``base_j + mu * step_j`` over a schedule of ``mu``."""

    strong: tuple
    weak_base: tuple
    weak_step: tuple
    schedule: tuple

    @classmethod
    def parse(cls, obj: dict) -> "FamilyRule":
        _strict(obj, {"strong", "weak_base", "weak_step", "schedule"}, "lattices.family")
        strong = _int_rows(obj.get("strong"), "lattices.family.strong")
        base = _int_rows(obj.get("weak_base"), "lattices.family.weak_base")
        step = _int_rows(obj.get("weak_step"), "lattices.family.weak_step")
        sched = obj.get("schedule", [])
        if not isinstance(sched, list) or not all(isinstance(x, int) and x > 0 for x in sched):
            raise ConfigError("lattices.family.schedule: expected positive integers")
        if len(base) != len(step) or any(len(v) != len(strong[0]) for v in strong + base + step):
            raise ConfigError("lattices.family: inconsistent vector lengths")
        return cls(tuple(map(tuple, strong)), tuple(map(tuple, base)), tuple(map(tuple, step)), tuple(sched))

    def basis(self, mu: int) -> OrderedBasis:
        weak = tuple(tuple(b + mu * s for b, s in zip(bv, sv)) for bv, sv in zip(self.weak_base, self.weak_step))
        return OrderedBasis(self.strong + weak, len(self.strong))


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    seed: int
    Q0: tuple
    D: float
    p0: tuple
    strong_potential: dict
    weak_potential: dict
    generator: dict | None
    h1_file: str | None
    strong: tuple | None
    full: tuple | None
    family: FamilyRule | None
    numeric: NumericParams
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.Q0)

    def model(self) -> ConvexModel:
        return ConvexModel(np.array(self.Q0, float), self.D)

    def canonical(self) -> str:
        return json.dumps({**self.raw, "seed": self.seed, "task": self.task}, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def parse_config(obj: Any, task: str | None = None, seed: int | None = None, base_dir: Path | None = None) -> ExperimentConfig:
    top = _strict(obj, {"schema", "task", "seed", "model", "perturbation", "potentials", "lattices", "numeric"}, "config")
    if top.get("schema") != SCHEMA:
        raise ConfigError(f"config.schema must be {SCHEMA!r}")
    cfg_task = top.get("task")
    if task is not None and cfg_task is not None and task != cfg_task:
        raise ConfigError(f"task {task!r} differs from config task {cfg_task!r}")
    task = task or cfg_task
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}")
    s = seed if seed is not None else top.get("seed", 0)
    if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")

    model = _strict(top.get("model", {}), {"Q0", "D", "p0"}, "model")
    Q0 = model.get("Q0", [[1.0, 0.0], [0.0, 1.0]])
    if not isinstance(Q0, list) or not all(isinstance(r, list) and len(r) == len(Q0) for r in Q0):
        raise ConfigError("model.Q0: expected a square matrix")
    n = len(Q0)
    D = _num(model, "D", 10.0, 1, None, "model", lo_open=True)
    p0 = model.get("p0", [0.0] * n)
    if not isinstance(p0, list) or len(p0) != n:
        raise ConfigError("model.p0: wrong length")
    try:
        ConvexModel(np.array(Q0, float), D).hessian(np.array(p0, float))
    except Exception as exc:  # noqa: BLE001
        raise ConfigError(f"model: {exc}") from exc

    pert = _strict(top.get("perturbation", {}), {"file", "generator"}, "perturbation")
    generator, h1_file = None, None
    if "generator" in pert:
        g = _strict(pert["generator"], {"r", "radius"}, "perturbation.generator")
        generator = {"r": _num(g, "r", None, 0, 40, "perturbation.generator", lo_open=True),
                     "radius": _num(g, "radius", 12, 1, 80, "perturbation.generator", integer=True)}
        if generator["r"] is None:
            raise ConfigError("perturbation.generator.r is required")
    if "file" in pert:
        path = Path(pert["file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.is_file():
            raise ConfigError(f"perturbation.file {str(path)!r} does not exist")
        h1_file = str(path)

    lat = _strict(top.get("lattices", {}), {"strong", "full", "family"}, "lattices")
    strong = tuple(map(tuple, _int_rows(lat["strong"], "lattices.strong"))) if "strong" in lat else None
    full = tuple(map(tuple, _int_rows(lat["full"], "lattices.full"))) if "full" in lat else None
    family = FamilyRule.parse(lat["family"]) if "family" in lat else None
    for rows in filter(None, (strong, full) + ((family.strong,) if family else ())):
        if any(len(r) != n + 1 for r in rows):
            raise ConfigError(f"lattice vectors must have length n + 1 = {n + 1}")

    pots = _strict(top.get("potentials", {}), {"strong", "weak"}, "potentials")
    m = len(strong) if strong else (len(family.strong) if family else 1)
    d = m + (len(family.weak_base) if family else (len(full) - m if full else 0))
    sp = _potential(pots.get("strong"), m, "potentials.strong")
    wp = _potential(pots.get("weak"), d, "potentials.weak")
    numeric = NumericParams.parse(top.get("numeric"))

    needs = {"basis": ("strong", "full"), "slow": ("full",), "rescale-scan": ("family",), "semicont": ("family",),
             "nhic": ("family",), "weakkam": ()}
    local = {"strong": strong, "full": full, "family": family}
    for key in needs.get(task, ()):
        if local[key] is None:
            raise ConfigError(f"task {task!r} needs lattices.{key}")
    return ExperimentConfig(task, s, tuple(map(tuple, Q0)), D, tuple(p0), sp, wp, generator, h1_file, strong, full,
                            family, numeric, raw=top)


def load_config(path, task: str | None = None, seed: int | None = None) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {str(p)!r} does not exist")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    return parse_config(obj, task, seed, p.parent)


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

@dataclass
class FamilyMember:
    mu: int
    basis: OrderedBasis
    system: SlowSystem


def generate_family(rule: FamilyRule, model: ConvexModel, p0, strong_potential: dict, weak_potential: dict,
                    q: float, kappa: float | None = None) -> tuple[list[FamilyMember], float]:
    """Deterministic dominant family; every member must pass the dominance check.

    Returns the members and the constant ``kappa`` used (calibrated over the family when not given).
    """
    Mbar = max(supnorm(k) for k in rule.strong)
    members = []
    for mu in rule.schedule:
        if mu <= Mbar:
            raise FamilyError(f"member mu={mu} does not exceed the strong basis norm {Mbar}")
        B = rule.basis(mu)
        if not is_irreducible(B.vectors):
            raise FamilyError(f"member mu={mu}: basis does not span an irreducible lattice")
        if ResonanceLattice(B.vectors).has_time_only_vector():
            raise FamilyError(f"member mu={mu}: lattice contains a time-only vector")
        m, d = B.split_index, len(B.vectors)
        ust = build_potential(strong_potential, m)
        uwk = [build_potential(weak_potential, d, mu)] + [TrigPolynomial.zero(d)] * (d - m - 1)
        members.append(FamilyMember(mu, B, slow_system_from_potentials(model, p0, B, ust, uwk)))
    if not members:
        return [], float(kappa or 0.0)
    if kappa is None:
        kappa = calibrate_kappa([(mb.basis, mb.system.uwk) for mb in members], q)
    bad = [mb.mu for mb in members if not dominance_check(mb.basis, mb.system.uwk, kappa, q).verdict]
    if bad:
        raise FamilyError(f"members failing dominance: {bad}")
    return members, float(kappa)


def family_from_config(cfg: ExperimentConfig) -> tuple[list[FamilyMember], float]:
    return generate_family(cfg.family, cfg.model(), np.array(cfg.p0, float), cfg.strong_potential,
                           cfg.weak_potential, cfg.numeric.q, cfg.numeric.kappa)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


@dataclass
class Check:
    name: str
    passed: bool
    value: Any = None
    threshold: Any = None
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return _clean({"name": self.name, "passed": bool(self.passed), "value": self.value,
                       "threshold": self.threshold, "detail": self.detail})


@dataclass
class RunReport:
    task: str
    config_hash: str
    seed: int
    checks: list
    results: dict
    wall_clock: float = 0.0
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        """Deterministic content; the wall-clock time is kept out of it."""
        return _clean({"task": self.task, "config_hash": self.config_hash, "version": self.version, "seed": self.seed,
                       "passed": self.passed, "checks": [c.to_json() for c in self.checks], "results": self.results})

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Tasks
# ---------------------------------------------------------------------------

def _h1(cfg: ExperimentConfig) -> FourierHamiltonian | None:
    if cfg.h1_file:
        return FourierHamiltonian.from_json(json.loads(Path(cfg.h1_file).read_text()))
    if cfg.generator:
        return decaying_hamiltonian(cfg.n, cfg.generator["r"], cfg.generator["radius"], seed=cfg.seed)
    return None


def task_basis(cfg: ExperimentConfig, out: Path) -> tuple[list, dict]:
    Bst = OrderedBasis(saturate(cfg.strong).generators, len(cfg.strong))
    rep = adapted_basis_report(Bst, saturate(cfg.full))
    checks = [Check("z_basis", rep["prefix_z_basis"]), Check("strong_unchanged", rep["strong_unchanged"]),
              Check("norm_bound_item1", rep["norm_bound_item1"]), Check("norm_bound_item2", rep["norm_bound_item2"])]
    B = rep["basis"]
    results = {"basis": [list(k) for k in B.vectors], "split_index": B.split_index,
               "norms": [supnorm(k) for k in B.vectors], "minima": rep["minima"], "Mbar": rep["Mbar"]}
    return checks, results


def task_slow(cfg: ExperimentConfig, out: Path) -> tuple[list, dict]:
    strong = cfg.strong or cfg.full[:1]
    Bst = OrderedBasis(saturate(strong).generators, len(strong))
    B = adapted_basis_report(Bst, saturate(cfg.full))["basis"]
    H1 = _h1(cfg)
    p0 = np.array(cfg.p0, float)
    if H1 is not None:
        sys = build_slow_system(cfg.model(), p0, B, H1)
    else:
        m, d = B.split_index, len(B.vectors)
        uwk = [build_potential(cfg.weak_potential, d, min(supnorm(k) for k in B.weak))] + \
              [TrigPolynomial.zero(d)] * (d - m - 1)
        sys = slow_system_from_potentials(cfg.model(), p0, B, build_potential(cfg.strong_potential, m), uwk)
    dec = block_decomposition(sys)
    rng = np.random.default_rng(cfg.seed)
    phi = rng.random((100, sys.d))
    v = rng.standard_normal((100, sys.d))
    c = rng.standard_normal(sys.d)
    *_, split_res = lagrangian_split_eval(sys, c, phi, v, dec)
    diag_res = dec.diag_residual(sys.S)
    checks = [Check("diag_residual", diag_res <= 1e-10, diag_res, 1e-10),
              Check("split_residual", split_res <= 1e-10, split_res, 1e-10)]
    if sys.d > sys.m:
        q = cfg.numeric.q
        kappa = cfg.numeric.kappa or calibrate_kappa([(B, sys.uwk)], q)
        cert = dominance_check(B, sys.uwk, kappa, q)
        checks.append(Check("dominance", cert.verdict, min(cert.size_margins + cert.order_margins, default=0.0), 0.0,
                            cert.to_json()))
    results = {"basis": [list(k) for k in B.vectors], "S": sys.S, "Ctilde": dec.Ctilde, "A": dec.A,
               "cbar_of_c": cbar(dec, c), "weak_c0": [c0_norm(u) for u in sys.uwk]}
    (out / "slow_system.json").write_text(json.dumps(_clean(sys.to_json()), indent=2, sort_keys=True) + "\n")
    return checks, results


def task_rescale(cfg: ExperimentConfig, out: Path) -> tuple[list, dict]:
    fam, kappa = family_from_config(cfg)
    q = cfg.numeric.q
    rows, c0s, c1s, mus = [], [], [], []
    for mb in fam:
        r = rescaled_deviation(mb.system, None, q, samples=cfg.numeric.samples, seed=cfg.seed)
        rows.append([mb.mu, r.c0_projected, r.c1])
        mus.append(mb.mu)
        c0s.append(r.c0_projected)
        c1s.append(r.c1)
    control = rescaled_deviation(fam[0].system.with_weak([TrigPolynomial.zero(fam[0].system.d)] * len(fam[0].system.uwk)),
                                 None, q, samples=cfg.numeric.samples, seed=cfg.seed)
    s0, s1 = fit_loglog_slope(mus, c0s), fit_loglog_slope(mus, c1s)
    t0, t1 = -(q - 1) + 0.3, -(q - 2) / 3 + 0.3
    _write_csv(out / "rescale_scan.csv", ["mu", "c0_projected", "c1"], rows)
    checks = [Check("c0_slope", s0 <= t0, s0, t0), Check("c1_slope", s1 <= t1, s1, t1),
              Check("control_c0_zero", control.c0_projected == 0.0, control.c0_projected, 0.0)]
    return checks, {"kappa": kappa, "mu": mus, "c0": c0s, "c1": c1s}


def _weakkam_system(cfg: ExperimentConfig) -> SlowSystem:
    if cfg.family is not None and cfg.family.schedule:
        return family_from_config(cfg)[0][0].system
    if cfg.full is not None:
        strong = cfg.strong or cfg.full[:1]
        Bst = OrderedBasis(saturate(strong).generators, len(strong))
        B = adapted_basis_report(Bst, saturate(cfg.full))["basis"]
        m, d = B.split_index, len(B.vectors)
        uwk = [build_potential(cfg.weak_potential, d, min(supnorm(k) for k in B.weak))] + \
              [TrigPolynomial.zero(d)] * (d - m - 1) if d > m else []
        return slow_system_from_potentials(cfg.model(), np.array(cfg.p0, float), B,
                                           build_potential(cfg.strong_potential, m), uwk)
    # plain mechanical system with kinetic matrix Q0
    n = cfg.n
    U = build_potential(cfg.strong_potential, n) if cfg.strong_potential["type"] != "pendulum" else \
        pendulum_potential(cfg.strong_potential["eps"]).embed(n)
    return SlowSystem(np.array(cfg.Q0, float), n, U)


def task_weakkam(cfg: ExperimentConfig, out: Path) -> tuple[list, dict]:
    sys = _weakkam_system(cfg)
    acfg = cfg.numeric.action_config()
    L = sys.lagrangian()
    cs = cfg.numeric.c or (tuple([0.0] * sys.d),)
    checks, alphas = [], []
    free = sys.potential.is_zero()
    normS = float(np.linalg.norm(sys.S, 2))
    N = acfg.resolution(sys.d)
    for i, c in enumerate(cs):
        c = np.asarray(c, float)
        if len(c) != sys.d:
            raise ConfigError(f"numeric.c[{i}] has length {len(c)}, expected {sys.d}")
        u = solve_weak_kam(L, c, acfg, tol=cfg.numeric.tol, max_iter=cfg.numeric.max_iter)
        alphas.append(u.alpha)
        u.to_csv(out / f"weakkam_u_{i}.csv")
        if free:
            exact = 0.5 * float(c @ sys.S @ c)
            bound = 2 * normS * (1.0 / N + acfg.h)
            checks.append(Check(f"free_alpha_{i}", abs(u.alpha - exact) <= bound, abs(u.alpha - exact), bound,
                                {"alpha": u.alpha, "exact": exact}))
        else:
            checks.append(Check(f"converged_{i}", u.residuals[-1] < cfg.numeric.tol, u.residuals[-1], cfg.numeric.tol,
                                {"alpha": u.alpha, "iterations": u.iterations}))
        if sys.d == 1 and cfg.strong_potential["type"] == "pendulum" and c[0] == 0.0 and sys.S[0, 0] == 1.0:
            # closed-form separatrix profile, anchored at the hyperbolic point
            eps = cfg.strong_potential["eps"]
            phi = u.grid()[:, 0]
            exact = 2 * math.sqrt(eps) / math.pi * (1 - np.abs(np.cos(math.pi * phi)))
            err = float(np.abs(u.flat - u.flat[0] - exact).max())
            bound = 5.0 / N * 2 * math.sqrt(eps)
            checks.append(Check(f"pendulum_alpha_{i}", abs(u.alpha) <= 1e-3, abs(u.alpha), 1e-3))
            checks.append(Check(f"pendulum_profile_{i}", err <= bound, err, bound))
    _write_csv(out / "weakkam_alpha.csv", [f"c{j}" for j in range(sys.d)] + ["alpha"],
               [list(c) + [a] for c, a in zip(cs, alphas)])
    results = {"c": [list(c) for c in cs], "alpha": alphas, "N": N, "h": acfg.h, "rule": acfg.rule}
    if sys.d > sys.m and cfg.family is not None:
        rel = [verify_alpha_relation(sys, np.asarray(c, float), acfg, cfg.numeric.tol) for c in cs]
        for i, r in enumerate(rel):
            checks.append(Check(f"alpha_relation_{i}", r.passed, r.defect, r.budget, r.to_json()))
    return checks, results


def task_semicont(cfg: ExperimentConfig, out: Path) -> tuple[list, dict]:
    fam, kappa = family_from_config(cfg)
    systems = [mb.system for mb in fam]
    dec = block_decomposition(systems[0])
    c = np.asarray(cfg.numeric.c[0], float) if cfg.numeric.c else np.zeros(systems[0].d)
    rep = semicontinuity_experiment(systems[0].strong_system(), systems, [c] * len(systems),
                                    cfg.numeric.action_config(), cfg.numeric.q, cfg.numeric.tol)
    _write_csv(out / "semicont.csv", ["mu", "oscillation", "profile_gap"],
               list(zip(rep.mus, rep.oscillations, rep.profile_gaps)))
    checks = [Check("oscillation_nonincreasing", rep.osc_nonincreasing, rep.oscillations),
              Check("profile_gap_nonincreasing", rep.gap_nonincreasing, rep.profile_gaps),
              Check("oscillation_slope", rep.slope_ok, rep.osc_slope, rep.slope_bound)]
    return checks, {"kappa": kappa, "cbar": cbar(dec, c), **rep.to_json()}


def block_spec_for(sys: SlowSystem, num: NumericParams, seed: int) -> IsolatingBlockSpec:
    """Block around the hyperbolic point with ``nu = e^lambda - nu_slack``."""
    A = float(block_decomposition(sys).A[0, 0])
    curv = float(sys.ust.evaluate(np.zeros((1, 1)), order=2)[2][0, 0, 0])
    lam = math.sqrt(A * curv)
    k = sys.d - sys.m
    return IsolatingBlockSpec(1, 1, (-2.0,) * (2 * k), (2.0,) * (2 * k), num.block_r, num.cone_mu,
                              math.exp(lam) - num.nu_slack, seed=seed)


def task_nhic(cfg: ExperimentConfig, out: Path) -> tuple[list, dict]:
    fam, kappa = family_from_config(cfg)
    num = cfg.numeric
    spec = block_spec_for(fam[0].system, num, cfg.seed)
    demo = persistence_demo([mb.system for mb in fam], spec, num.delta, num.q, num.dt)
    checks = []
    for mb, res in zip(fam, demo):
        checks.append(Check(f"member_{mb.mu}", res.passed, res.distance, num.delta, res.to_json()))
        if res.witness is not None:
            res.witness.to_csv(out / f"nhic_witness_{mb.mu}.csv")
    dists = [r.distance for r in demo if r.distance is not None]
    dec_ok = len(dists) == len(demo) and all(b < a for a, b in zip(dists, dists[1:]))
    checks.append(Check("distance_decreasing", dec_ok, dists))
    F, Fi = linear_map(np.diag([0.5, 2.0] + [1.0] * (spec.c)))
    lin = check_block_conditions(F, IsolatingBlockSpec(1, 1, spec.center_lo, spec.center_hi, 0.1, 2.0, 1.5), Fi)
    checks.append(Check("linear_sanity", lin.passed, lin.verdict))
    return checks, {"kappa": kappa, "spec": spec.to_json(), "lambda": demo[0].diagnostics.get("lambda") if demo else None}


def task_report(cfg: ExperimentConfig, out: Path) -> tuple[list, dict]:
    """Summarise sibling run directories that contain a report."""
    root = out.parent
    rows = []
    for p in sorted(root.glob("*/report.json")):
        if p.parent == out:
            continue
        rep = json.loads(p.read_text())
        rows.append({"dir": p.parent.name, "task": rep.get("task"), "passed": rep.get("passed")})
    _write_csv(out / "summary.csv", ["dir", "task", "passed"], [[r["dir"], r["task"], r["passed"]] for r in rows])
    return [Check("all_runs_pass", all(r["passed"] for r in rows), len(rows))], {"runs": rows}


TASK_RUNNERS: dict[str, Callable] = {
    "basis": task_basis,
    "slow": task_slow,
    "rescale-scan": task_rescale,
    "weakkam": task_weakkam,
    "semicont": task_semicont,
    "nhic": task_nhic,
    "report": task_report,
}


def _write_csv(path: Path, header: list, rows) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def run(cfg: ExperimentConfig, out_root: Path) -> tuple[RunReport, Path]:
    """Execute the task; artifacts go to ``out_root/<config hash>/``."""
    out = Path(out_root) / cfg.hash
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    threads = os.environ.get("RK_THREADS")
    if threads:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=int(threads)):
            checks, results = TASK_RUNNERS[cfg.task](cfg, out)
    else:
        checks, results = TASK_RUNNERS[cfg.task](cfg, out)
    report = RunReport(cfg.task, cfg.hash, cfg.seed, checks, results, time.perf_counter() - t0)
    (out / "report.json").write_text(report.dumps())
    (out / "timing.json").write_text(json.dumps({"wall_clock_seconds": report.wall_clock}) + "\n")
    return report, out

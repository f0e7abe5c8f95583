"""Compliance minimization under volume and stability constraints.

Each outer iteration filters the design, solves equilibrium at the target
load, computes the lowest ``m`` eigenvalue clusters of the tangent and their
sensitivities.  With only simple eigenvalues an MMA step is taken on

    min f0 = F_ext' u   s.t.  V/V_f - 1 <= 0,  1 - lam_q / lam_hat <= 0.

If any cluster is repeated, a linearized sub-problem in the design increment
is solved instead, with the off-diagonal terms of each cluster's
directional-derivative matrix forced to zero so that its eigenvalue changes
are the diagonal entries.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .fem import SolverOptions, solve_equilibrium
from .mma import MMA, MMAError, MMASettings
from .model import (Model, Symmetry, apply_filter, build_filter, make_symmetry,
                    volume_constraint)
from .sensitivity import (SensitivityContext, compliance_and_gradient,
                          cluster_direction_vectors, design_gradient)
from .stability import EigenSolution, PseudoMassParams, eigen_lowest, pseudo_mass_diagonal

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# configuration and design

@dataclass
class OptimizationConfig:
    """Settings of the optimization driver.

    ``lam_hat = None`` disables the stability constraints.
    """

    V_f: float = 0.3
    lam_hat: float | None = None
    m: int = 6
    gamma: float = 1.0
    r_min: float = 1.5
    symmetry: str = "none"
    theta: float = 0.04
    move: float = 0.3
    max_iter: int = 800
    inner_max_iter: int = 100
    inner_obj_tol: float = 1e-8
    inner_dx_tol: float = 1e-4
    tol_mult: float = 1e-8
    eq_slack: float = 1e-3
    continuation: bool = True
    cont_period: int = 5
    cont_step: float = 0.1
    p_range: tuple = (1.0, 3.0)
    pL_range: tuple = (4.0, 6.0)
    pm_range: tuple = (1.0, 6.0)
    pseudo_mass: PseudoMassParams = field(default_factory=PseudoMassParams)
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not 0 < self.V_f < 1:
            raise ValueError("V_f must lie in (0, 1)")
        if self.lam_hat is not None and self.lam_hat <= 0:
            raise ValueError("lam_hat must be positive")
        if not 0 < self.theta <= 0.1:
            raise ValueError("theta must lie in (0, 0.1]")
        if self.m < 1:
            raise ValueError("m must be >= 1")

    @property
    def stability(self) -> bool:
        return self.lam_hat is not None


@dataclass
class DesignField:
    """Reduced design variables with their filter and symmetry maps."""

    x: np.ndarray
    symmetry: Symmetry
    W: object

    @classmethod
    def uniform(cls, model: Model, value: float, r_min: float,
                symmetry: str = "none") -> "DesignField":
        sym = make_symmetry(model, symmetry)
        return cls(np.full(sym.n_reduced, float(value)), sym,
                   build_filter(model, r_min))

    @property
    def x_full(self) -> np.ndarray:
        return self.symmetry.expand(self.x)

    @property
    def rho(self) -> np.ndarray:
        return apply_filter(self.W, self.x_full)

    def drho(self, dx: np.ndarray) -> np.ndarray:
        return apply_filter(self.W, self.symmetry.expand(dx))

    def chain(self, g_rho: np.ndarray) -> np.ndarray:
        return design_gradient(g_rho, self.W, self.symmetry)

    def with_x(self, x: np.ndarray) -> "DesignField":
        return replace(self, x=np.asarray(x, dtype=float).copy())


def continuation_schedule(iteration: int, period: int = 5, step: float = 0.1,
                          p_range=(1.0, 3.0), pL_range=(4.0, 6.0),
                          pm_range=(1.0, 6.0)) -> tuple[float, float, float]:
    """Penalization powers (p, p_L, p_m) at 1-based ``iteration``."""
    if iteration < 1:
        raise ValueError("iteration is 1-based")
    k = (iteration - 1) // period
    inc = step * k
    return (min(p_range[1], p_range[0] + inc),
            min(pL_range[1], pL_range[0] + inc),
            min(pm_range[1], pm_range[0] + inc))


# --------------------------------------------------------------------------
# trace

@dataclass
class IterationRecord:
    iteration: int
    f0: float
    f1: float
    eigenvalues: list
    multiplicities: list
    n_c_updates: int
    inner: bool
    p: float
    p_L: float
    p_m: float
    n_stability_rows: int = 0
    c: float = 0.0


@dataclass
class OptimizationTrace:
    records: list = field(default_factory=list)
    final: IterationRecord | None = None
    message: str = ""

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def header(self, m: int) -> str:
        cols = ["iteration", "f0", "f1", "p", "p_L", "p_m", "c", "c_updates",
                "inner", "multiplicities"] + [f"lambda_{i + 1}" for i in range(m)]
        return ",".join(cols)

    @staticmethod
    def row(r: IterationRecord, m: int) -> str:
        lam = list(r.eigenvalues) + [""] * max(0, m - len(r.eigenvalues))
        vals = [r.iteration, repr(r.f0), repr(r.f1), r.p, r.p_L, r.p_m, r.c,
                r.n_c_updates, int(r.inner),
                "-".join(str(k) for k in r.multiplicities)]
        return ",".join(str(v) for v in vals + [repr(x) if x != "" else ""
                                                for x in lam[:m]])


# --------------------------------------------------------------------------
# analysis of one design

@dataclass
class Analysis:
    state: object
    f0: float
    df0: np.ndarray
    f1: float
    dv: np.ndarray
    eig: EigenSolution | None = None
    z: list = field(default_factory=list)     # per cluster dict (s,k)->z (element space)

    @property
    def eig_grads(self) -> list:
        out = []
        for zc, cl in zip(self.z, self.eig.clusters):
            out.extend(zc[i, i] for i in range(len(cl)))
        return out


def analyse_design(model: Model, rho: np.ndarray, cfg: OptimizationConfig,
                   pm: PseudoMassParams | None = None) -> Analysis:
    state = solve_equilibrium(model, rho, cfg.gamma, cfg.solver)
    pm = cfg.pseudo_mass if pm is None else pm
    ctx = SensitivityContext(model, state, pm)
    f0, df0 = compliance_and_gradient(state, model, ctx=ctx)
    f1, dv = volume_constraint(rho, model, cfg.V_f)
    an = Analysis(state, f0, df0, f1, dv)
    if cfg.stability:
        s = pseudo_mass_diagonal(model, rho, pm)
        eig = eigen_lowest(state.K, s, cfg.m, cfg.tol_mult)
        an.eig = eig
        for cl in eig.clusters:
            lam = float(np.mean(eig.values[cl]))
            z, _ = cluster_direction_vectors(state, (lam, eig.vectors[:, cl]),
                                             model, ctx=ctx)
            an.z.append(z)
    return an


# --------------------------------------------------------------------------
# steps

def outer_step(design: DesignField, an: Analysis, cfg: OptimizationConfig,
               mma: MMA, f0_scale: float = 1.0) -> np.ndarray:
    """One MMA step of the full problem (all clusters simple)."""
    g0 = design.chain(an.df0) / f0_scale
    rows = [design.chain(an.dv)]
    vals = [an.f1]
    if cfg.stability:
        for lam, g in zip(an.eig.values, an.eig_grads):
            vals.append(1.0 - lam / cfg.lam_hat)
            rows.append(-design.chain(g) / cfg.lam_hat)
    return mma.step(design.x, g0, np.array(vals), np.vstack(rows))


@dataclass
class InnerResult:
    dx: np.ndarray
    iterations: int
    n_equalities: int
    n_stability_rows: int
    theta: float
    feasible: bool


def _project_equalities(dx, G, lo, hi, iters: int = 200):
    """Alternating projections onto {G dx = 0} and the box, ending in the box."""
    if G.shape[0] == 0:
        return np.clip(dx, lo, hi)
    GGt = G @ G.T
    pinv = np.linalg.pinv(GGt)
    for _ in range(iters):
        dx = dx - G.T @ (pinv @ (G @ dx))
        dx = np.clip(dx, lo, hi)
        if np.all(np.abs(G @ dx) <= 1e-9 * np.linalg.norm(G, axis=1)
                  * max(np.linalg.norm(dx), 1e-300)):
            break
    return dx


def _inner_solve(design, an, cfg, theta, f0_scale):
    x = design.x
    lo = np.maximum(-x, -theta)
    hi = np.minimum(1.0 - x, theta)
    g0 = design.chain(an.df0) / f0_scale
    dv = design.chain(an.dv)
    lam_rows, lam_vals, eq_rows, eq_el = [], [], [], []
    for zc, cl in zip(an.z, an.eig.clusters):
        N = len(cl)
        for i in range(N):
            lam_vals.append(an.eig.values[cl[i]])
            lam_rows.append(design.chain(zc[i, i]))
        for s in range(N):
            for k in range(s + 1, N):
                eq_rows.append(design.chain(zc[s, k]) / cfg.lam_hat)
                eq_el.append(zc[s, k])
    lam_vals = np.array(lam_vals)
    L = np.array(lam_rows)
    E = np.array(eq_rows).reshape(-1, x.size)
    # paired inequalities get a small slack so the subproblem keeps an
    # interior; exact equality is restored by projection afterwards
    slack = cfg.eq_slack * theta * np.abs(E).sum(axis=1)

    def constraints(dx):
        vals = [an.f1 + dv @ dx]
        vals += list(1.0 - (lam_vals + L @ dx) / cfg.lam_hat)
        e = E @ dx
        vals += list(e - slack) + list(-e - slack)
        rows = [dv] + list(-L / cfg.lam_hat) + list(E) + list(-E)
        return np.array(vals), np.vstack(rows)

    mma = MMA(x.size, lo, hi, MMASettings(move=1.0))
    dx = np.zeros_like(x)
    obj = 0.0
    it = 0
    for it in range(1, cfg.inner_max_iter + 1):
        vals, rows = constraints(dx)
        dx_new = mma.step(dx, g0, vals, rows)
        obj_new = float(g0 @ dx_new)
        change = np.linalg.norm(dx_new - dx)
        rel = abs(obj_new - obj) / max(abs(obj_new), 1e-300)
        dx, obj = dx_new, obj_new
        if rel <= cfg.inner_obj_tol or change <= cfg.inner_dx_tol:
            break
    dx = _project_equalities(dx, E, lo, hi)
    ok = np.all(np.isfinite(dx))
    if ok and eq_el:
        d_rho = design.drho(dx)
        for z in eq_el:
            if abs(z @ d_rho) > 1e-6 * np.linalg.norm(z) * np.linalg.norm(d_rho) + 1e-300:
                ok = False
    return dx, it, len(eq_el), len(lam_vals), bool(ok)


def inner_subproblem(design: DesignField, an: Analysis, cfg: OptimizationConfig,
                     f0_scale: float = 1.0) -> InnerResult:
    """Linearized increment problem for designs with repeated eigenvalues."""
    theta = cfg.theta
    for attempt in range(2):
        try:
            dx, its, neq, nlam, ok = _inner_solve(design, an, cfg, theta, f0_scale)
        except (MMAError, np.linalg.LinAlgError) as exc:
            log.warning("inner sub-problem failed: %s", exc)
            dx, its, neq, nlam, ok = None, 0, 0, 0, False
        if ok:
            return InnerResult(dx, its, neq, nlam, theta, True)
        theta *= 0.5
    log.warning("inner sub-problem infeasible after shrinking theta; no step taken")
    return InnerResult(np.zeros_like(design.x), its, neq, nlam, theta, False)


# --------------------------------------------------------------------------
# driver

class _ModelCache:
    def __init__(self, model: Model):
        self.base = model
        self.cache: dict = {}

    def get(self, p: float, p_L: float) -> Model:
        key = (round(p, 12), round(p_L, 12))
        if key not in self.cache:
            self.cache[key] = self.base.with_params(p=p, p_L=p_L)
        return self.cache[key]


def run_optimization(model: Model, design: DesignField, cfg: OptimizationConfig,
                     callback=None) -> tuple[DesignField, OptimizationTrace]:
    """Run the outer loop for ``cfg.max_iter`` iterations.

    ``callback(record, design)`` is invoked after each analysed iteration.
    Analysis failures propagate (with the trace attached as ``exc.trace``).
    """
    trace = OptimizationTrace()
    models = _ModelCache(model)
    mma = MMA(design.x.size, 0.0, 1.0, MMASettings(move=cfg.move))
    f0_scale = None
    for it in range(1, cfg.max_iter + 1):
        if cfg.continuation:
            p, pL, pm_ = continuation_schedule(it, cfg.cont_period, cfg.cont_step,
                                               cfg.p_range, cfg.pL_range,
                                               cfg.pm_range)
        else:
            p, pL, pm_ = model.p, model.p_L, cfg.pseudo_mass.p_m
        mk = models.get(p, pL)
        pm = replace(cfg.pseudo_mass, p_m=pm_)
        rho = design.rho
        try:
            an = analyse_design(mk, rho, cfg, pm)
        except Exception as exc:
            exc.trace = trace
            exc.design = design
            raise
        if f0_scale is None:
            f0_scale = max(abs(an.f0), 1e-300)
        inner = bool(cfg.stability and an.eig.has_repeated)
        rec = IterationRecord(
            iteration=it, f0=an.f0, f1=an.f1,
            eigenvalues=[] if an.eig is None else an.eig.values.tolist(),
            multiplicities=[] if an.eig is None else an.eig.multiplicities,
            n_c_updates=an.state.n_c_updates, inner=inner, p=p, p_L=pL, p_m=pm_,
            c=an.state.c)
        if inner:
            res = inner_subproblem(design, an, cfg, f0_scale)
            rec.n_stability_rows = res.n_stability_rows + res.n_equalities
            design = design.with_x(np.clip(design.x + res.dx, 0.0, 1.0))
            mma.reset()
        else:
            rec.n_stability_rows = len(an.eig.values) if cfg.stability else 0
            design = design.with_x(outer_step(design, an, cfg, mma, f0_scale))
        trace.records.append(rec)
        if callback is not None:
            callback(rec, design)
    return design, trace


def final_analysis(model: Model, design: DesignField, cfg: OptimizationConfig,
                   iteration: int | None = None) -> IterationRecord:
    """Analyse a design with the end-of-schedule penalization."""
    if cfg.continuation:
        it = cfg.max_iter if iteration is None else iteration
        p, pL, pm_ = continuation_schedule(max(it, 1), cfg.cont_period,
                                           cfg.cont_step, cfg.p_range,
                                           cfg.pL_range, cfg.pm_range)
    else:
        p, pL, pm_ = model.p, model.p_L, cfg.pseudo_mass.p_m
    mk = model.with_params(p=p, p_L=pL)
    pm = replace(cfg.pseudo_mass, p_m=pm_)
    state = solve_equilibrium(mk, design.rho, cfg.gamma, cfg.solver)
    f0 = float(cfg.gamma * mk.load @ state.u)
    f1, _ = volume_constraint(design.rho, mk, cfg.V_f)
    s = pseudo_mass_diagonal(mk, design.rho, pm)
    eig = eigen_lowest(state.K, s, cfg.m, cfg.tol_mult)
    return IterationRecord(iteration=-1, f0=f0, f1=f1,
                           eigenvalues=eig.values.tolist(),
                           multiplicities=eig.multiplicities,
                           n_c_updates=state.n_c_updates, inner=False,
                           p=p, p_L=pL, p_m=pm_, c=state.c)

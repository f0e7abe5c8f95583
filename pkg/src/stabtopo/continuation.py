"""Path following and branch discovery on converged designs.

All solves use Newton's method on an augmented sparse system built from the
free-DOF tangent plus a few scalar constraint rows (arc length, cylinder
around a critical point, switching hyperplane).  Constraints involve the
displacements only (cylindrical form).
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .fem import EquilibriumState, free_tangent, internal_forces
from .kernels import ElementInversionError
from .model import MeshError, Model, make_model
from .stability import (PseudoMassParams, classify_critical_point, eigen_lowest,
                        pseudo_mass_diagonal)

log = logging.getLogger(__name__)


class PathError(RuntimeError):
    """Corrector failure, missing sign change or other path-following error."""


class _NoConvergence(Exception):
    pass


# --------------------------------------------------------------------------
# data types

@dataclass
class PathPoint:
    u: np.ndarray
    gamma: float
    lam: np.ndarray          # lowest eigenvalues of the tangent
    ell: float = 0.0         # arc length from the previous point (0 for the first)

    @property
    def stable(self) -> bool:
        return bool(self.lam[0] > 0)


@dataclass
class CriticalPoint:
    gamma: float
    u: np.ndarray
    phi: np.ndarray          # free-DOF critical mode, unit norm
    kind: str
    lam: float
    segment: int             # index of the path point preceding it
    tangent: np.ndarray | None = None   # primary path direction (free DOFs)


@dataclass
class EquilibriumPath:
    points: list = field(default_factory=list)
    criticals: list = field(default_factory=list)
    branch_id: int = 0
    parent: int | None = None
    status: str = ""
    reached_target: bool = False

    def __len__(self):
        return len(self.points)

    @property
    def gammas(self) -> np.ndarray:
        return np.array([p.gamma for p in self.points])

    @property
    def lam1(self) -> np.ndarray:
        return np.array([p.lam[0] for p in self.points])

    def constraint_residuals(self, free: np.ndarray) -> np.ndarray:
        """Relative arc-length residuals of consecutive points."""
        out = []
        for a, b in zip(self.points[:-1], self.points[1:]):
            d = b.u[free] - a.u[free]
            out.append(abs(d @ d - b.ell ** 2) / b.ell ** 2)
        return np.array(out)


@dataclass
class BranchPoint:
    """Equilibrium on a branch through a critical point."""

    u: np.ndarray
    gamma: float
    origin_u: np.ndarray
    origin_gamma: float
    residual: float = 0.0


@dataclass
class BccState:
    r: float
    P_s: np.ndarray
    u: np.ndarray
    gamma: float
    gamma_s: float
    crossings: list = field(default_factory=list)
    curve: list = field(default_factory=list)   # (gamma, gamma_s, |u - u_cr|^2 / r^2)
    closed: bool = False


# --------------------------------------------------------------------------
# nonlinear system

class EquilibriumSystem:
    """Residual, tangent and eigenvalues of one design at fixed cutoff."""

    def __init__(self, model: Model, rho, c: float | None = None,
                 params: PseudoMassParams | None = None, tol: float = 1e-11,
                 max_iter: int = 25):
        self.model = model
        self.rho = np.asarray(rho, dtype=float)
        self.c = model.c0 if c is None else c
        self.free = model.free_dofs
        self.P = model.load[self.free]
        self.Pnorm = max(np.linalg.norm(self.P), 1e-300)
        self.s = (None if params is None
                  else pseudo_mass_diagonal(model, self.rho, params))
        self.tol = tol
        self.max_iter = max_iter
        self._props = None

    @property
    def props(self):
        if self._props is None:
            from .fem import element_properties
            self._props = element_properties(self.model, self.rho, self.c)
        return self._props

    def full(self, u_free: np.ndarray) -> np.ndarray:
        u = np.zeros(self.model.n_dofs)
        u[self.model.fixed_dofs] = self.model.fixed_values
        u[self.free] = u_free
        return u

    def evaluate(self, u_free: np.ndarray):
        fint, ke = internal_forces(self.model, self.full(u_free), self.rho,
                                   props=self.props)
        return fint[self.free], sp.csc_matrix(free_tangent(self.model, ke))

    def tangent(self, u_free: np.ndarray) -> sp.csc_matrix:
        return self.evaluate(u_free)[1]

    def eigs(self, u_free: np.ndarray, k: int = 3):
        sol = eigen_lowest(self.tangent(u_free), self.s, m=k, tol_mult=0.0)
        return sol.values, sol.vectors

    def residual_norm(self, u_free, gamma, gamma_s=0.0, P_s=None) -> float:
        f, _ = self.evaluate(u_free)
        r = f - gamma * self.P
        if P_s is not None:
            r = r - gamma_s * P_s
        return float(np.linalg.norm(r) / self.Pnorm)

    def solve(self, u, gamma, gamma_s=0.0, P_s=None, constraints=(),
              free_gamma=True, free_gamma_s=False):
        """Newton on ``f(u) - gamma P - gamma_s P_s = 0`` plus constraints.

        Each constraint is ``(kind, a, b)``: ``"sphere"`` means
        ``|u - a|^2 = b^2``, ``"plane"`` means ``a' u = b``.  The number of
        constraints must equal the number of free load parameters.
        """
        u = np.array(u, dtype=float)
        extras = int(free_gamma) + int(free_gamma_s)
        if extras != len(constraints):
            raise ValueError("constraint count must match free load parameters")
        n = u.size
        for it in range(self.max_iter + 1):
            try:
                f, K = self.evaluate(u)
            except (ElementInversionError, FloatingPointError) as exc:
                raise _NoConvergence(str(exc)) from exc
            r = f - gamma * self.P
            if P_s is not None:
                r = r - gamma_s * P_s
            g, G, gscale = [], [], []
            for kind, a, b in constraints:
                if kind == "sphere":
                    d = u - a
                    g.append(d @ d - b * b)
                    G.append(2 * d)
                    gscale.append(b * b)
                else:
                    g.append(a @ u - b)
                    G.append(a)
                    gscale.append(max(abs(b), np.linalg.norm(a) * np.linalg.norm(u), 1e-300))
            res = np.linalg.norm(r) / self.Pnorm
            cres = max([abs(x) / s for x, s in zip(g, gscale)], default=0.0)
            if not np.isfinite(res):
                raise _NoConvergence("non-finite residual")
            if res <= self.tol and cres <= 1e-13:
                return u, gamma, gamma_s, it
            if it == self.max_iter:
                break
            cols = []
            if free_gamma:
                cols.append(-self.P)
            if free_gamma_s:
                cols.append(-P_s)
            if extras:
                Cm = sp.csc_matrix(np.column_stack(cols))
                Rm = sp.csr_matrix(np.vstack(G))
                A = sp.bmat([[K, Cm], [Rm, None]], format="csc")
                rhs = -np.concatenate([r, g])
            else:
                A, rhs = K, -r
            try:
                dz = spla.splu(A, permc_spec="COLAMD").solve(rhs)
            except RuntimeError as exc:
                raise _NoConvergence(f"singular augmented matrix: {exc}") from exc
            if not np.all(np.isfinite(dz)):
                raise _NoConvergence("non-finite update")
            u = u + dz[:n]
            k = n
            if free_gamma:
                gamma += dz[k]
                k += 1
            if free_gamma_s:
                gamma_s += dz[k]
        raise _NoConvergence(f"no convergence in {self.max_iter} iterations "
                             f"(residual {res:.3g})")


def _system(model, rho, c=None, params=None) -> EquilibriumSystem:
    return model if isinstance(model, EquilibriumSystem) else \
        EquilibriumSystem(model, rho, c, params)


# --------------------------------------------------------------------------
# arc-length tracing

def suggest_arc_length(model: Model, rho, gamma: float, n_steps: int = 20,
                       c: float | None = None) -> float:
    """Arc length giving about ``n_steps`` linear steps up to ``gamma``."""
    sysm = _system(model, rho, c)
    K = sysm.tangent(np.zeros(sysm.free.size))
    a = spla.splu(K).solve(sysm.P)
    return float(abs(gamma) * np.linalg.norm(a) / n_steps)


def arc_length_trace(model, rho, ell: float, start: EquilibriumState | None = None,
                     max_points: int = 200, gamma_max: float | None = None,
                     gamma_min: float | None = None, direction=None,
                     n_eig: int = 3, c: float | None = None,
                     params: PseudoMassParams | None = None,
                     min_ell_factor: float = 1.0 / 64.0,
                     detect: bool = True, branch_id: int = 0,
                     parent: int | None = None) -> EquilibriumPath:
    """Trace an equilibrium path with the cylindrical arc-length method.

    ``start`` may be an :class:`EquilibriumState`, a ``(u_full, gamma)``
    tuple or ``None`` (unloaded state).  ``direction`` is an optional
    ``(du_free, dgamma)`` first-step direction; by default the load-direction
    tangent is used.  Tracing stops once ``gamma >= gamma_max`` (target
    reached), ``gamma < gamma_min``, after ``max_points`` points, or when the
    step length falls below ``min_ell_factor * ell``.  Sign changes of the
    lowest eigenvalue are refined into critical points when ``detect``.
    """
    sysm = _system(model, rho, c, params)
    free = sysm.free
    if start is None:
        u0, g0 = np.zeros(free.size), 0.0
    elif isinstance(start, EquilibriumState):
        u0, g0 = start.u[free].copy(), float(start.gamma)
    else:
        u0, g0 = np.asarray(start[0], dtype=float)[free].copy(), float(start[1])
    lam0, _ = sysm.eigs(u0, n_eig)
    path = EquilibriumPath([PathPoint(sysm.full(u0), g0, lam0)],
                           branch_id=branch_id, parent=parent)
    if gamma_min is None:
        gamma_min = -np.inf
    if direction is None:
        a = spla.splu(sysm.tangent(u0)).solve(sysm.P)
        t_u, t_g = a, 1.0
    else:
        t_u, t_g = np.asarray(direction[0], dtype=float), float(direction[1])
    nrm = np.linalg.norm(t_u)
    if nrm == 0:
        raise PathError("initial direction has no displacement component")
    t_u, t_g = t_u / nrm, t_g / nrm
    h = ell
    u_prev, g_prev = u0, g0
    while len(path.points) < max_points:
        up, gp = u_prev + h * t_u, g_prev + h * t_g
        try:
            u_new, g_new, _, _ = sysm.solve(up, gp, constraints=[("sphere", u_prev, h)])
        except _NoConvergence as exc:
            h *= 0.5
            if h < min_ell_factor * ell:
                path.status = f"corrector failed at minimum step: {exc}"
                log.warning("arc-length trace stopped: %s", path.status)
                break
            continue
        lam, _ = sysm.eigs(u_new, n_eig)
        path.points.append(PathPoint(sysm.full(u_new), g_new, lam, h))
        # secant direction for the next predictor
        du, dg = u_new - u_prev, g_new - g_prev
        nrm = np.linalg.norm(du)
        t_u, t_g = du / nrm, dg / nrm
        u_prev, g_prev = u_new, g_new
        if detect and path.points[-2].lam[0] > 0 >= lam[0]:
            try:
                path.criticals.append(detect_critical(path, len(path.points) - 2,
                                                      sysm))
            except PathError as exc:
                log.warning("critical point refinement failed: %s", exc)
        h = min(ell, 2 * h)
        if gamma_max is not None and g_new >= gamma_max:
            path.reached_target = True
            path.status = "target reached"
            break
        if g_new < gamma_min:
            path.status = "minimum load factor passed"
            break
    else:
        path.status = "point budget exhausted"
    return path


# --------------------------------------------------------------------------
# critical points

def detect_critical(path: EquilibriumPath, index: int, model, rho=None,
                    tol: float = 1e-8, max_evals: int = 80) -> CriticalPoint:
    """Locate the zero of the lowest eigenvalue between points ``index`` and
    ``index + 1`` of ``path`` by bracketing on the arc-length parameter.

    Converges when ``|lambda_1| <= tol * max|diag K_T|``.
    """
    sysm = _system(model, rho)
    free = sysm.free
    a, b = path.points[index], path.points[index + 1]
    la, lb = a.lam[0], b.lam[0]
    if not (la > 0 >= lb or la < 0 <= lb):
        raise PathError("lowest eigenvalue does not change sign on the segment")
    ua, ub = a.u[free], b.u[free]
    ell = np.linalg.norm(ub - ua)
    scale = np.max(np.abs(sysm.tangent(ua).diagonal()))
    lo, hi, flo, fhi = 0.0, 1.0, la, lb
    side = 0
    u_s, g_s, lam_s, V = ub, b.gamma, lb, None
    for _ in range(max_evals):
        s = (lo * fhi - hi * flo) / (fhi - flo)
        if not (lo < s < hi):
            s = 0.5 * (lo + hi)
        up = ua + s * (ub - ua)
        gp = a.gamma + s * (b.gamma - a.gamma)
        try:
            u_s, g_s, _, _ = sysm.solve(up, gp, constraints=[("sphere", ua, s * ell)])
        except _NoConvergence as exc:
            raise PathError(f"corrector failed during bisection: {exc}") from exc
        vals, V = sysm.eigs(u_s, 1)
        lam_s = vals[0]
        if abs(lam_s) <= tol * scale:
            break
        if np.sign(lam_s) == np.sign(flo):
            lo, flo = s, lam_s
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = s, lam_s
            if side == 1:
                flo *= 0.5
            side = 1
        if hi - lo < 1e-15:
            break
    else:
        raise PathError("bisection did not reach the eigenvalue tolerance")
    if abs(lam_s) > tol * scale:
        raise PathError(f"bisection stalled at |lambda| = {abs(lam_s):.3g}")
    phi = V[:, 0] / np.linalg.norm(V[:, 0])
    kind = classify_critical_point(phi, sysm.P)
    t = ub - ua
    return CriticalPoint(float(g_s), sysm.full(u_s), phi, kind, float(lam_s),
                         index, t / np.linalg.norm(t))


# --------------------------------------------------------------------------
# simple branch switching

def branch_switch_predictor(u_cr, phi, tau: float = 100.0, sign: int = 1) -> np.ndarray:
    """``u_cr + zeta phi / |phi|`` with ``zeta = sign |u_cr| / tau``."""
    u_cr = np.asarray(u_cr, dtype=float)
    phi = np.asarray(phi, dtype=float)
    zeta = np.sign(sign) * np.linalg.norm(u_cr) / tau
    return u_cr + zeta * phi / np.linalg.norm(phi)


def branch_switch_simple(model, rho, critical: CriticalPoint, tau: float = 100.0,
                         sign: int = 1, max_retries: int = 4) -> BranchPoint:
    """First point of the secondary branch at a simple bifurcation.

    The corrector keeps the mode amplitude ``phi' (u - u_cr) = zeta`` fixed
    and solves for (u, gamma).  If the result lies on the primary path
    (offset from the primary tangent below ``0.1 |zeta|``) ``zeta`` is
    doubled and the switch retried.
    """
    sysm = _system(model, rho)
    free = sysm.free
    u_cr = critical.u[free]
    phi = critical.phi / np.linalg.norm(critical.phi)
    t = critical.tangent
    ucr_norm = np.linalg.norm(critical.u)
    for attempt in range(max_retries + 1):
        zeta = np.sign(sign) * ucr_norm / tau * 2 ** attempt
        up = u_cr + zeta * phi
        try:
            u, g, _, _ = sysm.solve(up, critical.gamma,
                                    constraints=[("plane", phi, phi @ u_cr + zeta)])
        except _NoConvergence as exc:
            log.warning("branch switch attempt %d failed: %s", attempt, exc)
            continue
        d = u - u_cr
        off = d - (t @ d) * t if t is not None else d
        if np.linalg.norm(off) >= 0.1 * abs(zeta):
            return BranchPoint(sysm.full(u), float(g), critical.u.copy(),
                               critical.gamma, sysm.residual_norm(u, g))
        log.info("branch switch returned to the primary path; doubling zeta")
    raise PathError("branch switching did not leave the primary path")


# --------------------------------------------------------------------------
# branch connecting curve

def disturbance_load(P: np.ndarray, seed: int | None = 0) -> np.ndarray:
    """Random uniform(-1, 1) load orthogonal to ``P``, unit norm."""
    rng = np.random.default_rng(seed)
    v = rng.uniform(-1.0, 1.0, P.size)
    v -= (v @ P) / (P @ P) * P
    v -= (v @ P) / (P @ P) * P
    return v / np.linalg.norm(v)


def bcc_traverse(model, rho, critical: CriticalPoint, r: float | None = None,
                 ell: float | None = None, seed: int | None = 0,
                 max_points: int = 4000, return_state: bool = False):
    """Branch points on the cylinder ``|u - u_cr| = r`` around a critical point.

    The curve of disturbed equilibria ``f(u) = gamma P + gamma_s P_s`` on the
    cylinder is followed by arc length; each sign change of ``gamma_s`` is
    refined to an undisturbed equilibrium (``gamma_s = 0``).  Traversal ends
    when a crossing repeats the first one.  Returns a list of
    :class:`BranchPoint` (and the :class:`BccState` if ``return_state``).
    """
    sysm = _system(model, rho)
    free = sysm.free
    u_cr, g_cr = critical.u[free], critical.gamma
    r = 0.1 * np.linalg.norm(critical.u) if r is None else r
    ell = 2 * np.pi * r / 60 if ell is None else ell
    P_s = disturbance_load(sysm.P, seed)
    sphere = ("sphere", u_cr, r)

    # first crossing: the primary path ahead of the critical point
    t = critical.tangent if critical.tangent is not None else \
        spla.splu(sysm.tangent(u_cr)).solve(sysm.P)
    t = t / np.linalg.norm(t)
    dg_dt = 0.0
    try:
        u0, g0, _, _ = sysm.solve(u_cr + r * t, g_cr, constraints=[sphere])
    except _NoConvergence as exc:
        raise PathError(f"could not place the first point on the cylinder: {exc}")
    state = BccState(r, P_s, sysm.full(u0), g0, 0.0)
    first = BranchPoint(sysm.full(u0), g0, critical.u.copy(), g_cr,
                        sysm.residual_norm(u0, g0))
    state.crossings.append(first)

    # initial tangent of the curve: null vector of the bordered Jacobian
    _, K = sysm.evaluate(u0)
    n = u0.size
    Cm = sp.csc_matrix(np.column_stack([-sysm.P, -P_s]))
    Rm = sp.csr_matrix(np.vstack([2 * (u0 - u_cr), np.zeros(n)]))
    A = sp.bmat([[K, Cm], [Rm, None]], format="lil")
    A[n + 1, n + 1] = 1.0
    tz = spla.splu(sp.csc_matrix(A)).solve(np.r_[np.zeros(n + 1), 1.0])
    tz /= np.linalg.norm(tz[:n])
    x_prev = np.r_[u0, g0, 0.0]
    h = ell
    points = 0
    while points < max_points:
        xp = x_prev + h * tz
        try:
            u, g, gs, _ = sysm.solve(xp[:n], xp[n], xp[n + 1], P_s,
                                     constraints=[sphere, ("sphere", x_prev[:n], h)],
                                     free_gamma=True, free_gamma_s=True)
        except _NoConvergence:
            h *= 0.5
            if h < ell / 64:
                log.warning("BCC corrector failed; returning partial crossing list")
                break
            continue
        points += 1
        x_new = np.r_[u, g, gs]
        state.curve.append((g, gs, float((u - u_cr) @ (u - u_cr) / r ** 2)))
        gs_prev = x_prev[n + 1]
        if gs_prev != 0.0 and np.sign(gs) != np.sign(gs_prev) or gs == 0.0:
            w = gs_prev / (gs_prev - gs) if gs != gs_prev else 0.0
            xi = x_prev + w * (x_new - x_prev)
            try:
                uc, gc, _, _ = sysm.solve(xi[:n], xi[n], constraints=[sphere])
            except _NoConvergence as exc:
                log.warning("crossing refinement failed: %s", exc)
            else:
                bp = BranchPoint(sysm.full(uc), gc, critical.u.copy(), g_cr,
                                 sysm.residual_norm(uc, gc))
                if np.linalg.norm(uc - u0) <= 1e-6 * r:
                    state.closed = True
                    break
                if not any(np.linalg.norm(uc - c.u[free]) <= 1e-6 * r
                           for c in state.crossings):
                    state.crossings.append(bp)
        dx = x_new - x_prev
        tz = dx / np.linalg.norm(dx[:n])
        x_prev = x_new
        h = min(ell, 2 * h)
    if not state.closed:
        log.warning("BCC did not close within the point budget; partial result")
    state.u, state.gamma, state.gamma_s = sysm.full(x_prev[:n]), x_prev[n], x_prev[n + 1]
    return (state.crossings, state) if return_state else state.crossings


def same_crossings(a: list, b: list, tol: float = 1e-6) -> bool:
    """True when two crossing lists match point-for-point up to ``tol``."""
    if len(a) != len(b):
        return False
    used = set()
    for p in a:
        scale = max(np.linalg.norm(p.u - p.origin_u), 1e-300)
        for j, q in enumerate(b):
            if j in used:
                continue
            if (np.linalg.norm(p.u - q.u) <= tol * scale
                    and abs(p.gamma - q.gamma) <= tol * max(abs(p.gamma), 1e-300)):
                used.add(j)
                break
        else:
            return False
    return True


# --------------------------------------------------------------------------
# post-buckling driver

def trace_post_buckling(model, rho, branch_points: list, ell: float,
                        max_points: int = 100, gamma_max: float | None = None,
                        gamma_min: float | None = 0.0, n_eig: int = 3,
                        first_id: int = 1, parent: int = 0) -> list:
    """Trace each branch starting at its branch point, away from its origin."""
    sysm = _system(model, rho)
    free = sysm.free
    paths = []
    for k, bp in enumerate(branch_points):
        d_u = bp.u[free] - bp.origin_u[free]
        d_g = bp.gamma - bp.origin_gamma
        try:
            path = arc_length_trace(sysm, None, ell, (bp.u, bp.gamma),
                                    max_points=max_points, gamma_max=gamma_max,
                                    gamma_min=gamma_min, direction=(d_u, d_g),
                                    n_eig=n_eig, branch_id=first_id + k,
                                    parent=parent)
        except Exception as exc:      # isolate per-branch failures
            log.warning("branch %d failed: %s", first_id + k, exc)
            path = EquilibriumPath(branch_id=first_id + k, parent=parent,
                                   status=f"failed: {exc}")
        paths.append(path)
    return paths


# --------------------------------------------------------------------------
# thresholded solid designs

def threshold_design(model: Model, rho, level: float = 0.5) -> tuple[Model, np.ndarray]:
    """Solid sub-model of elements with ``rho >= level``.

    Returns the sub-model and the retained element ids.  Raises
    :class:`MeshError` if the solid region is edge-disconnected or misses a
    loaded node or all supports.
    """
    rho = np.asarray(rho, dtype=float)
    keep = np.flatnonzero(rho >= level)
    if keep.size == 0:
        raise MeshError("no element above the threshold")
    elems = model.elements[keep]
    nodes_used = np.unique(elems)
    # edge connectivity: elements sharing at least two nodes
    inc = sp.csr_matrix((np.ones(elems.size), (np.repeat(np.arange(keep.size), 4),
                                               elems.ravel())),
                        shape=(keep.size, model.n_nodes))
    adj = inc @ inc.T
    adj.data = (adj.data >= 2).astype(float)
    adj.eliminate_zeros()
    ncomp, _ = csgraph.connected_components(adj, directed=False)
    if ncomp != 1:
        raise MeshError(f"thresholded solid region has {ncomp} disconnected parts")
    new_id = -np.ones(model.n_nodes, dtype=np.int64)
    new_id[nodes_used] = np.arange(nodes_used.size)
    loaded = np.unique(np.flatnonzero(model.load) // 2)
    if np.any(new_id[loaded] < 0):
        raise MeshError("a loaded node lies outside the solid region")
    supports, loads = [], []
    fixed_vals = dict(zip(model.fixed_dofs.tolist(), model.fixed_values.tolist()))
    for dof in model.fixed_dofs:
        nd = dof // 2
        if new_id[nd] >= 0:
            supports.append((int(new_id[nd]), int(dof % 2), fixed_vals[int(dof)]))
    if not supports:
        raise MeshError("no support lies in the solid region")
    for dof in np.flatnonzero(model.load):
        loads.append((int(new_id[dof // 2]), int(dof % 2), float(model.load[dof])))
    sub = make_model(model.nodes[nodes_used], new_id[elems], model.elem_size,
                     supports, loads, E=model.E, nu=model.nu, p=model.p,
                     p_L=model.p_L, eps=model.eps, beta=model.beta, c0=model.c0,
                     dc=model.dc, thickness=model.thickness)
    return sub, keep


# --------------------------------------------------------------------------
# export

PATH_COLUMNS = ("branch", "step", "gamma", "displacement", "lambda_1",
                "stable", "critical")


def export_paths_csv(path_file, paths: list, monitored_dof: int):
    """Write paths as CSV; floats use ``repr`` so reading back is exact."""
    with open(path_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PATH_COLUMNS)
        for p in paths:
            crit_after = {c.segment for c in p.criticals}
            for k, pt in enumerate(p.points):
                w.writerow([p.branch_id, k, repr(float(pt.gamma)),
                            repr(float(pt.u[monitored_dof])),
                            repr(float(pt.lam[0])), int(pt.stable),
                            int(k in crit_after)])
            for c in p.criticals:
                w.writerow([p.branch_id, f"c{c.segment}", repr(float(c.gamma)),
                            repr(float(c.u[monitored_dof])), repr(float(c.lam)),
                            0, c.kind])


def read_paths_csv(path_file) -> list[dict]:
    rows = []
    with open(path_file, newline="") as fh:
        for row in csv.DictReader(fh):
            out = dict(row)
            for k in ("gamma", "displacement", "lambda_1"):
                out[k] = float(row[k])
            out["branch"] = int(row["branch"])
            out["stable"] = int(row["stable"])
            rows.append(out)
    return rows

"""Q4 plane-strain finite-strain analysis with linear energy interpolation.

Element internal force and tangent blend a total-Lagrangian neo-Hookean
element (deformation gradient ``I + eta * grad u``) with a small-strain
element weighted by ``1 - eta**2``.  Equilibrium is found by load-controlled
Newton-Raphson with adaptive increments and, when increments cannot be
reduced any further, by raising the energy-interpolation cutoff ``c``.
"""
from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .kernels import ElementInversionError, gauss_point_state
from .material import (InterpolatedProperties, flatten4,
                       interpolate, linear_moduli)
from .model import Model, q4_geometry

log = logging.getLogger(__name__)


class AnalysisFailure(RuntimeError):
    """Equilibrium could not be reached even after exhausting cutoff updates."""

    def __init__(self, message: str, gamma_reached: float = 0.0,
                 residual: float = float("nan"), c: float = float("nan")):
        super().__init__(f"{message} (gamma reached {gamma_reached:.6g}, "
                         f"last residual {residual:.3g}, c = {c:.3g})")
        self.gamma_reached = gamma_reached
        self.residual = residual
        self.c = c


@dataclass
class SolverOptions:
    tol: float = 1e-12            # relative energy residual
    max_iter: int = 30
    min_increment: float = 1.0 / 64.0
    max_c: float = 1.0
    initial_increment: float = 1.0
    update_cutoff: bool = True


@dataclass
class EquilibriumState:
    """Converged equilibrium at load factor ``gamma``.

    ``K`` is the free-DOF block of the tangent at ``u`` and ``lu`` its
    factorization; both are reused by adjoint solves.
    """

    u: np.ndarray
    gamma: float
    c: float
    rho: np.ndarray
    steps: int = 0
    iterations: int = 0
    energy_residual: float = 0.0
    n_c_updates: int = 0
    history: list = field(default_factory=list)
    K: sp.csc_matrix | None = None
    lu: object = None

    def solve(self, rhs_free: np.ndarray) -> np.ndarray:
        return self.lu.solve(rhs_free)


@dataclass
class ElementKernelOutput:
    force: np.ndarray
    tangent: np.ndarray
    F: np.ndarray
    P: np.ndarray
    A: np.ndarray


# --------------------------------------------------------------------------
# element level

def element_force_and_tangent(coords, u_e, rho_e: float,
                              props: InterpolatedProperties) -> ElementKernelOutput:
    """Single-element force and tangent with Gauss-point state.

    ``props`` holds scalar properties for this element (see
    :func:`stabtopo.material.interpolate`).
    """
    dNdX, wdet = q4_geometry(np.asarray(coords, dtype=float)[None])
    ue = np.asarray(u_e, dtype=float)[None]
    eta = np.atleast_1d(props.eta).astype(float)
    E_nl = np.atleast_1d(props.E_nl).astype(float)
    E_lin = np.atleast_1d(props.E_lin).astype(float)
    fe, ke = kernels.element_force_tangent(dNdX, wdet, ue, eta, E_nl, E_lin,
                                           props.nu)
    _, _, F, P, A = gauss_point_state(dNdX, ue, eta, E_nl, props.nu)
    return ElementKernelOutput(fe[0], ke[0], F[0], P[0], A[0])


# --------------------------------------------------------------------------
# assembly

class _Pattern:
    """Sparse pattern of the free-DOF stiffness block for one model."""

    def __init__(self, model: Model):
        n = model.n_dofs
        fmap = -np.ones(n, dtype=np.int64)
        fmap[model.free_dofs] = np.arange(model.free_dofs.size)
        ed = fmap[model.element_dofs]                       # (ne, 8)
        rows = np.broadcast_to(ed[:, :, None], ed.shape + (8,))
        cols = np.broadcast_to(ed[:, None, :], ed.shape + (8,))
        keep = (rows >= 0) & (cols >= 0)
        self.keep = keep.ravel()
        r, c = rows.ravel()[self.keep], cols.ravel()[self.keep]
        nf = model.free_dofs.size
        # position of every kept entry in the csr data array
        key = r * nf + c
        uniq, inv = np.unique(key, return_inverse=True)
        self.inv = inv
        self.indices = (uniq % nf).astype(np.int32)
        self.indptr = np.searchsorted(uniq // nf, np.arange(nf + 1)).astype(np.int32)
        self.nnz = uniq.size
        self.nf = nf

    def matrix(self, ke: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.inv, weights=ke.ravel()[self.keep],
                           minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr),
                             shape=(self.nf, self.nf))


_patterns: "weakref.WeakKeyDictionary[Model, _Pattern]" = weakref.WeakKeyDictionary()


def _pattern(model: Model) -> _Pattern:
    pat = _patterns.get(model)
    if pat is None:
        pat = _patterns[model] = _Pattern(model)
    return pat


def element_properties(model: Model, rho, c: float | None = None):
    return interpolate(np.asarray(rho, dtype=float), model,
                       model.c0 if c is None else c)


def internal_forces(model: Model, u, rho, c: float | None = None,
                    props: InterpolatedProperties | None = None):
    """Global internal force and element tangents."""
    props = element_properties(model, rho, c) if props is None else props
    dNdX, wdet = model.geometry
    ue = np.asarray(u)[model.element_dofs]
    fe, ke = kernels.element_force_tangent(dNdX, wdet, ue, props.eta,
                                           props.E_nl, props.E_lin, model.nu)
    fint = np.bincount(model.element_dofs.ravel(), weights=fe.ravel(),
                       minlength=model.n_dofs)
    return fint, ke


def free_tangent(model: Model, ke: np.ndarray) -> sp.csr_matrix:
    return _pattern(model).matrix(ke)


def embed_free_matrix(model: Model, Kff) -> sp.csr_matrix:
    """Full-size matrix with unit diagonal on fixed DOFs."""
    n = model.n_dofs
    free, fixed = model.free_dofs, model.fixed_dofs
    Kc = sp.coo_matrix(Kff)
    rows = np.concatenate([free[Kc.row], fixed])
    cols = np.concatenate([free[Kc.col], fixed])
    data = np.concatenate([Kc.data, np.ones(fixed.size)])
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def assemble(model: Model, u, rho, c: float | None = None, gamma: float = 1.0):
    """Residual ``F_int - gamma * P`` and tangent with eliminated BCs.

    Both are full size; fixed DOFs carry zero residual and a unit diagonal.
    """
    fint, ke = internal_forces(model, u, rho, c)
    R = fint - gamma * model.load
    R[model.fixed_dofs] = 0.0
    return R, embed_free_matrix(model, free_tangent(model, ke))


# --------------------------------------------------------------------------
# density derivative of the residual

def element_residual_density_derivative(model: Model, u, rho,
                                        c: float | None = None) -> np.ndarray:
    """(ne, 8) array: derivative of each element force w.r.t. its density."""
    props = element_properties(model, rho, c)
    dNdX, wdet = model.geometry
    ue = np.asarray(u)[model.element_dofs]
    B, H, F, P, A = gauss_point_state(dNdX, ue, props.eta, props.E_nl, model.nu)
    ne = ue.shape[0]
    vH = H.reshape(ne, -1, 4)
    vP = P.reshape(ne, -1, 4)
    eta, deta = props.eta[:, None, None], props.deta[:, None, None]
    rE = (props.dE_nl / props.E_nl)[:, None, None]
    C = flatten4(linear_moduli(props.E_lin, model.nu))
    dC = flatten4(linear_moduli(props.dE_lin, model.nu))
    CH = np.einsum("emk,egk->egm", C, vH)
    dCH = np.einsum("emk,egk->egm", dC, vH)
    AH = np.einsum("egmk,egk->egm", A, vH)
    s = (deta * vP + eta * (rE * vP + deta * AH)
         - 2 * eta * deta * CH + (1 - eta ** 2) * dCH)
    return np.einsum("egmn,egm,eg->en", B, s, wdet)


def residual_density_derivative(model: Model, u, rho, c: float | None = None):
    """Sparse (n_dofs x n_el) matrix dR/drho; column e lives on element e."""
    dRe = element_residual_density_derivative(model, u, rho, c)
    dRe[np.isin(model.element_dofs, model.fixed_dofs)] = 0.0
    ne = model.n_elements
    cols = np.repeat(np.arange(ne), 8)
    return sp.csc_matrix((dRe.ravel(), (model.element_dofs.ravel(), cols)),
                         shape=(model.n_dofs, ne))


# --------------------------------------------------------------------------
# equilibrium

def _factor(K: sp.spmatrix):
    return spla.splu(sp.csc_matrix(K), permc_spec="COLAMD")


def _newton(model, u, rho, gamma, props, opts, history):
    """Newton iterations at fixed load; returns (u, iterations, ratio)."""
    free = model.free_dofs
    p_free = model.load[free]
    e0 = None
    for it in range(1, opts.max_iter + 1):
        fint, ke = internal_forces(model, u, rho, props=props)
        r = fint[free] - gamma * p_free
        scale = max(np.linalg.norm(gamma * p_free), np.linalg.norm(fint[free]),
                    1e-300)
        if np.linalg.norm(r) <= 1e-14 * scale:
            return u, it - 1, 0.0
        du = -_factor(free_tangent(model, ke)).solve(r)
        if not np.all(np.isfinite(du)):
            raise FloatingPointError("non-finite Newton update")
        e = abs(du @ r)
        if e0 is None:
            e0 = max(e, 1e-300)
        ratio = e / e0
        history.append(ratio)
        u = u.copy()
        u[free] += du
        if ratio <= opts.tol:
            return u, it, ratio
        if ratio > 1e8:
            raise FloatingPointError("Newton iteration diverging")
    raise FloatingPointError("Newton iteration limit reached")


def solve_equilibrium(model: Model, rho, gamma_target: float,
                      opts: SolverOptions | None = None,
                      start: EquilibriumState | None = None,
                      c: float | None = None) -> EquilibriumState:
    """Load-controlled equilibrium at ``gamma_target``.

    Prescribed displacements are imposed at the start.  Increments begin as a
    single step, are halved on failure and doubled after success; below
    ``min_increment * gamma_target`` the cutoff ``c`` is raised by
    ``model.dc`` and the current increment restarted.  ``start`` continues
    from an existing equilibrium instead of the unloaded state.
    """
    opts = SolverOptions() if opts is None else opts
    rho = np.asarray(rho, dtype=float)
    c = model.c0 if c is None else c
    if start is None:
        u, gamma0 = np.zeros(model.n_dofs), 0.0
    else:
        u, gamma0 = start.u.copy(), start.gamma
    u[model.fixed_dofs] = model.fixed_values
    props = element_properties(model, rho, c)
    steps = iterations = n_c = 0
    history: list = []
    ratio = 0.0
    span = gamma_target - gamma0
    if span != 0.0:
        dg_min = abs(span) * opts.min_increment
        dg = span * opts.initial_increment
        g = gamma0
        restart_dg = dg
        while abs(gamma_target - g) > 1e-14 * abs(span):
            dg = np.sign(span) * min(abs(dg), abs(gamma_target - g))
            hist: list = []
            try:
                u_new, its, ratio = _newton(model, u, rho, g + dg, props, opts, hist)
            except (FloatingPointError, ElementInversionError,
                    RuntimeError) as exc:
                iterations += len(hist)
                log.debug("increment %.4g -> %.4g failed: %s", g, g + dg, exc)
                if abs(dg) / 2 >= dg_min * (1 - 1e-12):
                    dg = dg / 2
                    continue
                if not opts.update_cutoff or c + model.dc > opts.max_c + 1e-12:
                    raise AnalysisFailure("equilibrium not reached", g,
                                          hist[-1] if hist else float("nan"),
                                          c) from exc
                c += model.dc
                n_c += 1
                props = element_properties(model, rho, c)
                dg = restart_dg
                log.info("raising energy-interpolation cutoff to %.3f", c)
                continue
            u, g = u_new, g + dg
            steps += 1
            iterations += its
            history = hist
            dg = 2 * dg
            restart_dg = dg
    fint, ke = internal_forces(model, u, rho, props=props)
    K = sp.csc_matrix(free_tangent(model, ke))
    return EquilibriumState(u=u, gamma=float(gamma_target), c=float(c),
                            rho=rho.copy(), steps=steps, iterations=iterations,
                            energy_residual=float(ratio), n_c_updates=n_c,
                            history=history, K=K, lu=_factor(K))


def equilibrium_residual(model: Model, state: EquilibriumState) -> np.ndarray:
    fint, _ = internal_forces(model, state.u, state.rho, state.c)
    r = fint - state.gamma * model.load
    r[model.fixed_dofs] = 0.0
    return r


def linear_stiffness(model: Model, rho, c: float | None = None) -> sp.csc_matrix:
    """Free-DOF tangent at u = 0."""
    _, ke = internal_forces(model, np.zeros(model.n_dofs), rho, c)
    return sp.csc_matrix(free_tangent(model, ke))


__all__ = ["AnalysisFailure", "ElementInversionError", "ElementKernelOutput",
           "EquilibriumState", "SolverOptions", "assemble",
           "element_force_and_tangent", "element_properties",
           "element_residual_density_derivative", "embed_free_matrix",
           "equilibrium_residual", "free_tangent", "internal_forces",
           "linear_stiffness", "residual_density_derivative",
           "solve_equilibrium"]

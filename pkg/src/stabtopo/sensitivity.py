"""Adjoint sensitivities of compliance and eigenvalues of the tangent.

For an S_M-orthonormal eigen-basis ``phi`` of a cluster with value ``lam``,
the derivative vectors

    z_sk = d(phi_s' K phi_k)/drho|_u - lam d(phi_s' S_M phi_k)/drho
           + eta_sk' dR/drho,        K eta_sk = -d(phi_s' K phi_k)/du

give the first-order change of the cluster along ``drho`` as the eigenvalues
of ``T_sk = z_sk' drho``; for a simple eigenvalue ``z_qq`` is its gradient.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fem import (AnalysisFailure, EquilibriumState, SolverOptions,
                  element_residual_density_derivative, solve_equilibrium)
from .kernels import gauss_point_state
from .material import (bulk_shear, flatten4, interpolate, linear_moduli,
                       tangent_moduli_derivative)
from .model import Model
from .stability import (EigenSolution, PseudoMassParams, eigen_lowest,
                        nodal_pseudo_density, nodal_pseudo_density_derivative,
                        pseudo_mass_derivative, pseudo_mass_diagonal)

log = logging.getLogger(__name__)


class SensitivityContext:
    """Gauss-point data of one converged state, shared by all sensitivities."""

    def __init__(self, model: Model, state: EquilibriumState,
                 params: PseudoMassParams | None = PseudoMassParams()):
        self.model, self.state, self.params = model, state, params
        rho = state.rho
        self.props = pr = interpolate(rho, model, state.c)
        dNdX, self.wdet = model.geometry
        self.ue = state.u[model.element_dofs]
        self.B, H, F, P, A = gauss_point_state(dNdX, self.ue, pr.eta, pr.E_nl,
                                               model.nu)
        ne = model.n_elements
        self.F = F
        self.vH = H.reshape(ne, -1, 4)
        self.A = A
        self.C = flatten4(linear_moduli(pr.E_lin, model.nu))
        self.rE = pr.dE_nl / pr.E_nl
        self.rEL = pr.dE_lin / pr.E_lin
        self.dRe = element_residual_density_derivative(model, state.u, rho,
                                                       state.c)
        fixed = np.isin(model.element_dofs, model.fixed_dofs)
        self.dRe[fixed] = 0.0
        self._dA = None

    @property
    def dA(self) -> np.ndarray:
        """(ne, ngp, 4, 4, 4) derivative of A w.r.t. F, lazily computed."""
        if self._dA is None:
            ne = self.model.n_elements
            kappa, mu = bulk_shear(self.props.E_nl, self.model.nu)
            dA = tangent_moduli_derivative(self.F, kappa[:, None], mu[:, None])
            self._dA = dA.reshape(ne, -1, 4, 4, 4)
        return self._dA

    # -- helpers ---------------------------------------------------------
    def full(self, v_free: np.ndarray) -> np.ndarray:
        v = np.zeros(self.model.n_dofs)
        v[self.model.free_dofs] = v_free
        return v

    def adjoint_term(self, g_free: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve ``K eta = -g`` and return (eta_full, eta' dR/drho)."""
        eta = self.full(-self.state.solve(g_free))
        return eta, np.einsum("en,en->e", eta[self.model.element_dofs], self.dRe)

    def _grads(self, phi_free):
        phi = self.full(phi_free)
        return phi, np.einsum("egmn,en->egm", self.B, phi[self.model.element_dofs])

    # -- kernels ---------------------------------------------------------
    def explicit_pair(self, phi_s, phi_k) -> np.ndarray:
        """d(phi_s' K phi_k)/drho_e at fixed u."""
        _, Gs = self._grads(phi_s)
        _, Gk = self._grads(phi_k)
        pr = self.props
        eta, deta = pr.eta[:, None], pr.deta[:, None]
        GAG = np.einsum("egm,egmn,egn->eg", Gs, self.A, Gk)
        GCG = np.einsum("egm,emn,egn->eg", Gs, self.C, Gk)
        GdAH = np.einsum("egm,egn,egmnp,egp->eg", Gs, Gk, self.dA, self.vH)
        val = (2 * eta * deta * GAG
               + eta ** 2 * (self.rE[:, None] * GAG + deta * GdAH)
               - 2 * eta * deta * GCG
               + (1 - eta ** 2) * self.rEL[:, None] * GCG)
        return np.sum(self.wdet * val, axis=1)

    def displacement_pair(self, phi_s, phi_k) -> np.ndarray:
        """d(phi_s' K phi_k)/du on the free DOFs."""
        _, Gs = self._grads(phi_s)
        _, Gk = self._grads(phi_k)
        M = np.einsum("egm,egn,egmnp->egp", Gs, Gk, self.dA)
        w = self.wdet * self.props.eta[:, None] ** 3
        ge = np.einsum("eg,egpn,egp->en", w, self.B, M)
        g = np.bincount(self.model.element_dofs.ravel(), weights=ge.ravel(),
                        minlength=self.model.n_dofs)
        return g[self.model.free_dofs]

    def mass_pair(self, phi_s, phi_k) -> np.ndarray:
        """d(phi_s' S_M phi_k)/drho through the nodal pseudo-density chain."""
        if self.params is None:
            return np.zeros(self.model.n_elements)
        model, q = self.model, self.params.q
        ps, pk = self.full(phi_s), self.full(phi_k)
        prod = (ps * pk).reshape(-1, 2).sum(axis=1)
        w = nodal_pseudo_density(self.state.rho, model.node_elements, q)
        dm = pseudo_mass_derivative(w, self.params)
        D = nodal_pseudo_density_derivative(self.state.rho, model.node_elements, q)
        return D.T @ (prod * dm)

    def z_vector(self, phi_s, phi_k, lam: float):
        """Returns ``(z_sk, eta_sk)``."""
        g = self.displacement_pair(phi_s, phi_k)
        eta, adj = self.adjoint_term(g)
        z = self.explicit_pair(phi_s, phi_k) - lam * self.mass_pair(phi_s, phi_k) + adj
        return z, eta


# --------------------------------------------------------------------------
# public operations

def compliance_and_gradient(state: EquilibriumState, model: Model,
                            rho=None, ctx: SensitivityContext | None = None):
    """End compliance ``F_ext' u`` and its density gradient."""
    ctx = SensitivityContext(model, state, None) if ctx is None else ctx
    fext = state.gamma * model.load
    f0 = float(fext @ state.u)
    if not np.any(fext):
        return f0, np.zeros(model.n_elements)
    _, grad = ctx.adjoint_term(fext[model.free_dofs])
    return f0, grad


def simple_eigenvalue_gradient(state: EquilibriumState, eig: tuple, model: Model,
                               rho=None, params: PseudoMassParams | None = PseudoMassParams(),
                               ctx: SensitivityContext | None = None) -> np.ndarray:
    """Gradient of a simple eigenvalue ``eig = (lam, phi_free)``."""
    ctx = SensitivityContext(model, state, params) if ctx is None else ctx
    lam, phi = eig
    return ctx.z_vector(phi, phi, lam)[0]


def cluster_direction_vectors(state: EquilibriumState, cluster: tuple, model: Model,
                              rho=None, params: PseudoMassParams | None = PseudoMassParams(),
                              ctx: SensitivityContext | None = None):
    """``z_sk`` and adjoint vectors for every pair ``s <= k`` of a cluster.

    ``cluster`` is ``(lam, Phi)`` with the S_M-orthonormal basis as columns.
    Returns two dicts keyed by ``(s, k)``.
    """
    ctx = SensitivityContext(model, state, params) if ctx is None else ctx
    lam, Phi = cluster
    Phi = np.atleast_2d(np.asarray(Phi).T).T
    N = Phi.shape[1]
    z, eta = {}, {}
    for s in range(N):
        for k in range(s, N):
            z[s, k], eta[s, k] = ctx.z_vector(Phi[:, s], Phi[:, k], lam)
    return z, eta


def z_matrix(z: dict, N: int) -> np.ndarray:
    """Stack ``z_sk`` into an (N, N, n) array, symmetric in (s, k)."""
    n = next(iter(z.values())).size
    Z = np.empty((N, N, n))
    for (s, k), v in z.items():
        Z[s, k] = Z[k, s] = v
    return Z


def directional_increments(z: dict, drho: np.ndarray, N: int | None = None):
    """``T_sk = z_sk' drho`` and its sorted eigenvalues."""
    N = max(max(k) for k in z) + 1 if N is None else N
    T = np.einsum("skn,n->sk", z_matrix(z, N), np.asarray(drho, dtype=float))
    T = 0.5 * (T + T.T)
    return T, np.linalg.eigvalsh(T)


def design_gradient(grad_rho: np.ndarray, W, symmetry=None) -> np.ndarray:
    """Chain an element-density gradient through filter and symmetry."""
    g = W.T @ np.asarray(grad_rho)
    return g if symmetry is None else symmetry.reduce_gradient(g)


@dataclass
class EigenSensitivities:
    """Compliance and eigenvalue sensitivities of one analysed design."""

    f0: float
    df0: np.ndarray
    eig: EigenSolution
    s_diag: np.ndarray
    z: list = field(default_factory=list)      # per cluster: dict (s,k)->z
    lam_grad: list = field(default_factory=list)  # per eigenvalue: z_qq

    def cluster_slices(self):
        return self.eig.clusters


def analyse_sensitivities(model: Model, state: EquilibriumState, m: int,
                          params: PseudoMassParams | None = PseudoMassParams(),
                          tol_mult: float = 1e-8) -> EigenSensitivities:
    """Eigenanalysis plus all first-order information used by the optimizer."""
    ctx = SensitivityContext(model, state, params)
    f0, df0 = compliance_and_gradient(state, model, ctx=ctx)
    if params is None:
        s = np.ones(model.free_dofs.size)
    else:
        s = pseudo_mass_diagonal(model, state.rho, params)
    eig = eigen_lowest(state.K, s, m, tol_mult)
    zs, grads = [], []
    for cl in eig.clusters:
        lam = float(np.mean(eig.values[cl]))
        z, _ = cluster_direction_vectors(state, (lam, eig.vectors[:, cl]), model,
                                         ctx=ctx)
        zs.append(z)
        grads.extend(z[i, i] for i in range(len(cl)))
    return EigenSensitivities(f0, df0, eig, s, zs, grads)


# --------------------------------------------------------------------------
# verification

@dataclass
class CdmReport:
    elements: np.ndarray
    analytic: np.ndarray          # (n_el_checked, 1 + n_eig): f0, lam_1..
    fd: np.ndarray
    excluded: list = field(default_factory=list)
    labels: tuple = ()

    @property
    def rel_err(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.abs(self.analytic - self.fd) / np.abs(self.fd)

    def max_rel_err(self, column: int | None = None) -> float:
        r = self.rel_err if column is None else self.rel_err[:, column]
        r = r[np.isfinite(r)]
        return float(r.max()) if r.size else float("nan")

    def table(self, delimiter: str = ",") -> str:
        head = ["element", "kernel", "analytic", "fd", "rel_err"]
        lines = [delimiter.join(head)]
        rel = self.rel_err
        for i, e in enumerate(self.elements):
            for j, lab in enumerate(self.labels):
                lines.append(delimiter.join([
                    str(int(e)), lab, repr(float(self.analytic[i, j])),
                    repr(float(self.fd[i, j])), repr(float(rel[i, j]))]))
        return "\n".join(lines) + "\n"


def _analyse_values(model, rho, gamma, m, params, c, opts):
    st = solve_equilibrium(model, rho, gamma, opts, c=c)
    s = (np.ones(model.free_dofs.size) if params is None
         else pseudo_mass_diagonal(model, rho, params))
    eig = eigen_lowest(st.K, s, m, tol_mult=0.0)
    f0 = float(gamma * model.load @ st.u)
    return np.concatenate([[f0], eig.values[:m]])


def _fd_column(job):
    model, rho, e, h, gamma, m, params, c, opts = job
    rp, rm = rho.copy(), rho.copy()
    rp[e] += h
    rm[e] -= h
    try:
        vp = _analyse_values(model, rp, gamma, m, params, c, opts)
        vm = _analyse_values(model, rm, gamma, m, params, c, opts)
    except AnalysisFailure as exc:
        return e, None, str(exc)
    return e, (vp - vm) / (2 * h), None


def verify_sensitivities_cdm(model: Model, rho, gamma: float, h: float = 1e-5,
                             m: int = 6, params: PseudoMassParams | None = PseudoMassParams(),
                             elements=None, opts: SolverOptions | None = None,
                             gradient_hook=None, workers: int = 1) -> CdmReport:
    """Central-difference check of compliance and eigenvalue gradients.

    Each checked element costs two equilibrium solves and eigenanalyses;
    ``workers > 1`` spreads them over processes.  ``gradient_hook(array) ->
    array`` lets tests corrupt the analytic values.
    """
    rho = np.asarray(rho, dtype=float)
    opts = SolverOptions() if opts is None else opts
    state = solve_equilibrium(model, rho, gamma, opts)
    ctx = SensitivityContext(model, state, params)
    f0, df0 = compliance_and_gradient(state, model, ctx=ctx)
    s = (np.ones(model.free_dofs.size) if params is None
         else pseudo_mass_diagonal(model, rho, params))
    eig = eigen_lowest(state.K, s, m, tol_mult=0.0)
    cols = [df0]
    for q in range(m):
        cols.append(ctx.z_vector(eig.vectors[:, q], eig.vectors[:, q],
                                 eig.values[q])[0])
    analytic = np.column_stack(cols)
    if gradient_hook is not None:
        analytic = gradient_hook(analytic)
    elements = np.arange(model.n_elements) if elements is None else np.asarray(elements)
    fd = np.full((elements.size, m + 1), np.nan)
    excluded = []
    jobs = [(model, rho, int(e), h, gamma, m, params, state.c, opts)
            for e in elements]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fd_column, jobs, chunksize=4))
    else:
        results = [_fd_column(j) for j in jobs]
    for i, (e, val, err) in enumerate(results):
        if err is None:
            fd[i] = val
        else:
            log.warning("element %d excluded from CDM check: %s", e, err)
            excluded.append(e)
    labels = ("f0",) + tuple(f"lambda_{q + 1}" for q in range(m))
    keep = ~np.isin(elements, excluded)
    return CdmReport(elements[keep], analytic[elements[keep]], fd[keep],
                     excluded, labels)


@dataclass
class MultiEigReport:
    eps: np.ndarray
    residuals: np.ndarray
    predicted: np.ndarray      # (n_eps, N)
    actual: np.ndarray
    slope: float


def first_order_multi_eig_check(model: Model, state: EquilibriumState,
                                cluster_index: int, drho: np.ndarray,
                                eps_list=(1e-2, 1e-3, 1e-4), m: int = 2,
                                params: PseudoMassParams | None = PseudoMassParams(),
                                tol_mult: float = 1e-8,
                                opts: SolverOptions | None = None) -> MultiEigReport:
    """Compare ``lam + eps * eig(T)`` with re-solved cluster eigenvalues."""
    ctx = SensitivityContext(model, state, params)
    s = (np.ones(model.free_dofs.size) if params is None
         else pseudo_mass_diagonal(model, state.rho, params))
    eig = eigen_lowest(state.K, s, m, tol_mult)
    idx = eig.clusters[cluster_index]
    N = len(idx)
    if N < 2:
        raise ValueError("cluster is simple; use the simple-eigenvalue path")
    lam = float(np.mean(eig.values[idx]))
    z, _ = cluster_direction_vectors(state, (lam, eig.vectors[:, idx]), model,
                                     ctx=ctx)
    _, dlam = directional_increments(z, drho, N)
    eps_arr = np.asarray(eps_list, dtype=float)
    res, pred, act = [], [], []
    for eps in eps_arr:
        rho = state.rho + eps * drho
        st = solve_equilibrium(model, rho, state.gamma, opts, c=state.c)
        sp_ = (np.ones(model.free_dofs.size) if params is None
               else pseudo_mass_diagonal(model, rho, params))
        e2 = eigen_lowest(st.K, sp_, idx[-1] + 1, tol_mult=0.0)
        a = np.sort(e2.values[idx[0]:idx[-1] + 1])
        p = lam + eps * dlam
        res.append(np.max(np.abs(a - p)))
        pred.append(p)
        act.append(a)
    res = np.array(res)
    ok = res > 0
    slope = (float(np.polyfit(np.log(eps_arr[ok]), np.log(res[ok]), 1)[0])
             if ok.sum() >= 2 else float("nan"))
    return MultiEigReport(eps_arr, res, np.array(pred), np.array(act), slope)

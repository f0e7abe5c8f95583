"""Pseudo-mass matrix, lowest eigenpairs of the tangent and critical points.

The stability eigenproblem ``K_T phi = lambda S_M phi`` is posed on the free
DOFs only.  ``S_M`` is diagonal with a nodal pseudo-mass that is ~1 next to
solid material and tiny inside voids, which pushes spurious void modes to
very large eigenvalues.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import Model

DENSE_LIMIT = 2000


class EigenSolverError(RuntimeError):
    """Eigen-solver did not converge or returned an inconsistent result."""


# --------------------------------------------------------------------------
# pseudo-mass

@dataclass(frozen=True)
class PseudoMassParams:
    q: float = 15.0
    eps_hat: float = 1e-9
    p_m: float = 6.0
    w_L: float = 0.1
    w_H: float = 0.2

    def __post_init__(self):
        if not (0 < self.w_L < self.w_H <= 1):
            raise ValueError("need 0 < w_L < w_H <= 1")
        if self.eps_hat <= 0 or self.q < 1:
            raise ValueError("need eps_hat > 0 and q >= 1")

    @cached_property
    def coefficients(self) -> np.ndarray:
        """Cubic a0..a3 matching value and slope at both cutoffs."""
        wL, wH, e, pm = self.w_L, self.w_H, self.eps_hat, self.p_m
        M = np.array([[1, wL, wL ** 2, wL ** 3],
                      [0, 1, 2 * wL, 3 * wL ** 2],
                      [1, wH, wH ** 2, wH ** 3],
                      [0, 1, 2 * wH, 3 * wH ** 2]], dtype=float)
        rhs = np.array([e + (1 - e) * wL ** pm, pm * (1 - e) * wL ** (pm - 1),
                        1.0, 0.0])
        return np.linalg.solve(M, rhs)


def nodal_pseudo_density(rho, node_elements: sp.spmatrix, q: float = 15.0):
    """p-norm approximation of the largest adjacent element density."""
    rho = np.asarray(rho, dtype=float)
    s = node_elements @ rho ** q
    return s ** (1.0 / q)


def nodal_pseudo_density_derivative(rho, node_elements: sp.spmatrix,
                                    q: float = 15.0) -> sp.csr_matrix:
    """Sparse d(varpi_i)/d(rho_e); zero for nodes whose neighbors are all void."""
    rho = np.asarray(rho, dtype=float)
    A = sp.csr_matrix(node_elements)
    s = A @ rho ** q
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(s > 0, s ** (1.0 / q - 1.0), 0.0)
    return sp.csr_matrix(sp.diags(f) @ A @ sp.diags(rho ** (q - 1)))


def pseudo_mass_value(varpi, params: PseudoMassParams = PseudoMassParams()):
    w = np.asarray(varpi, dtype=float)
    a = params.coefficients
    e, pm = params.eps_hat, params.p_m
    low = e + (1 - e) * w ** pm
    mid = a[0] + w * (a[1] + w * (a[2] + w * a[3]))
    out = np.where(w <= params.w_L, low, np.where(w < params.w_H, mid, 1.0))
    return out if out.ndim else float(out)


def pseudo_mass_derivative(varpi, params: PseudoMassParams = PseudoMassParams()):
    w = np.asarray(varpi, dtype=float)
    a = params.coefficients
    e, pm = params.eps_hat, params.p_m
    low = pm * (1 - e) * w ** (pm - 1) if pm != 1 else np.full_like(w, 1 - e)
    mid = a[1] + w * (2 * a[2] + 3 * a[3] * w)
    out = np.where(w <= params.w_L, low, np.where(w < params.w_H, mid, 0.0))
    return out if out.ndim else float(out)


def nodal_pseudo_mass(model: Model, rho, params: PseudoMassParams = PseudoMassParams()):
    return pseudo_mass_value(
        nodal_pseudo_density(rho, model.node_elements, params.q), params)


def pseudo_mass_diagonal(model: Model, rho,
                         params: PseudoMassParams = PseudoMassParams()) -> np.ndarray:
    """Diagonal of S_M restricted to the free DOFs."""
    m = np.repeat(nodal_pseudo_mass(model, rho, params), 2)
    return m[model.free_dofs]


def assemble_pseudo_mass(model: Model, rho,
                         params: PseudoMassParams = PseudoMassParams()) -> sp.dia_matrix:
    """Full-size diagonal S_M with unit entries on fixed DOFs."""
    m = np.repeat(nodal_pseudo_mass(model, rho, params), 2)
    m[model.fixed_dofs] = 1.0
    return sp.diags(m)


# --------------------------------------------------------------------------
# eigenanalysis

@dataclass
class EigenSolution:
    """Lowest eigenpairs grouped into clusters of (numerically) equal values.

    ``vectors`` has one column per eigenvalue and is S_M-orthonormal.
    """

    values: np.ndarray
    vectors: np.ndarray
    clusters: list = field(default_factory=list)   # lists of indices
    tol: float = 1e-8

    @property
    def multiplicities(self) -> list[int]:
        return [len(c) for c in self.clusters]

    @property
    def has_repeated(self) -> bool:
        return any(len(c) > 1 for c in self.clusters)

    def truncate(self, m: int) -> "EigenSolution":
        """Keep only the first ``m`` clusters."""
        cl = self.clusters[:m]
        n = sum(len(c) for c in cl)
        return EigenSolution(self.values[:n], self.vectors[:, :n], cl, self.tol)


def cluster_eigenvalues(values, tol: float = 1e-8) -> list[list[int]]:
    """Group consecutive sorted eigenvalues closer than ``tol`` (absolute)."""
    values = np.asarray(values)
    clusters: list[list[int]] = []
    for i, lam in enumerate(values):
        if clusters and abs(lam - values[clusters[-1][-1]]) < tol:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    return clusters


def _fix_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def _lowest(A, k: int):
    n = A.shape[0]
    k = min(k, n)
    if n <= DENSE_LIMIT or k >= n - 1:
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        w, V = sla.eigh(Ad, subset_by_index=[0, k - 1])
        return w, V
    diag = np.abs(A.diagonal())
    sigma = -1e-8 * (np.median(diag) if diag.size else 1.0)
    try:
        w, V = spla.eigsh(sp.csc_matrix(A), k=k, sigma=sigma, which="LM",
                          tol=1e-14, maxiter=10000)
    except (spla.ArpackNoConvergence, spla.ArpackError) as exc:
        raise EigenSolverError(f"eigsh failed: {exc}") from exc
    order = np.argsort(w)
    return w[order], V[:, order]


def eigen_lowest(K_T, S_M=None, m: int = 1, tol_mult: float = 1e-8,
                 extra: int = 2, max_window: int | None = None) -> EigenSolution:
    """Smallest eigenpairs covering the first ``m`` clusters.

    ``S_M`` may be a diagonal vector, a diagonal sparse matrix, or ``None``
    (identity).  The window grows until the (m+1)-th cluster has started, so
    that multiplicities of the m-th cluster are complete.  The growth stops at
    ``max_window`` eigenpairs (default ``max(60, 8 m)``); the last cluster may
    then be incomplete, which happens for degenerate spectra such as
    unweighted void regions.
    """
    max_window = max(60, 8 * m) if max_window is None else max_window
    n = K_T.shape[0]
    if S_M is None:
        s = np.ones(n)
    elif sp.issparse(S_M):
        s = np.asarray(S_M.diagonal(), dtype=float)
    else:
        s = np.asarray(S_M, dtype=float)
        if s.ndim == 2:
            s = np.diag(s).copy()
    if np.any(s <= 0):
        raise ValueError("S_M must be positive")
    d = 1.0 / np.sqrt(s)
    if sp.issparse(K_T):
        A = sp.csc_matrix(sp.diags(d) @ K_T @ sp.diags(d))
        A = 0.5 * (A + A.T)
    else:
        K_T = np.asarray(K_T, dtype=float)
        A = d[:, None] * K_T * d[None, :]
        A = 0.5 * (A + A.T)
    k = min(n, m + extra)
    while True:
        w, Y = _lowest(A, k)
        clusters = cluster_eigenvalues(w, tol_mult)
        if len(clusters) > m or k >= min(n, max_window):
            break
        k = min(n, max_window, 2 * k)
    if not np.all(np.isfinite(w)):
        raise EigenSolverError("non-finite eigenvalues")
    clusters = clusters[:m]
    nk = sum(len(c) for c in clusters)
    V = _fix_signs(d[:, None] * Y[:, :nk])
    return EigenSolution(w[:nk].copy(), V, clusters, tol_mult)


def eigen_residuals(K_T, s: np.ndarray, sol: EigenSolution) -> np.ndarray:
    KV = K_T @ sol.vectors
    R = KV - s[:, None] * sol.vectors * sol.values[None, :]
    return np.linalg.norm(R, axis=0) / np.maximum(np.linalg.norm(KV, axis=0), 1e-300)


def classify_critical_point(phi, load, tol_cls: float = 1e-6) -> str:
    """'bifurcation' when the mode does no work on the load, else 'limit'."""
    phi = np.asarray(phi, dtype=float)
    load = np.asarray(load, dtype=float)
    r = abs(phi @ load) / (np.linalg.norm(phi) * np.linalg.norm(load))
    return "bifurcation" if r < tol_cls else "limit"


def free_to_full(model: Model, v_free: np.ndarray) -> np.ndarray:
    v = np.zeros((model.n_dofs,) + np.shape(v_free)[1:])
    v[model.free_dofs] = v_free
    return v


def stability_analysis(model: Model, state, m: int = 6,
                       params: PseudoMassParams | None = PseudoMassParams(),
                       tol_mult: float = 1e-8) -> tuple[EigenSolution, np.ndarray]:
    """Eigenanalysis of the converged tangent; returns (solution, S_M diag).

    ``params=None`` uses ``S_M = I``.
    """
    if params is None:
        s = np.ones(model.free_dofs.size)
    else:
        s = pseudo_mass_diagonal(model, state.rho, params)
    return eigen_lowest(state.K, s, m, tol_mult), s

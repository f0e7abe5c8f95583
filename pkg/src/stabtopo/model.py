"""Problem definition and design parameterization on structured Q4 grids.

A :class:`Model` bundles mesh, supports, reference load and material/
interpolation constants.  Design-side helpers (density filter, symmetry
orbits, volume constraint) operate on element-wise vectors ordered like
``Model.elements``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

GAUSS_2x2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)

SYMMETRIES = ("none", "half-x", "quarter", "eighth")


class MeshError(ValueError):
    """Raised for invalid mesh, support or load specifications."""


@dataclass(frozen=True, eq=False)
class Model:
    """Structured plane-strain model.

    Node and element arrays are never mutated after construction; use
    :func:`dataclasses.replace` to derive variants (e.g. continuation of the
    penalization powers).
    """

    nodes: np.ndarray
    elements: np.ndarray
    elem_size: float
    fixed_dofs: np.ndarray
    fixed_values: np.ndarray
    load: np.ndarray
    E: float = 1.0
    nu: float = 0.3
    p: float = 3.0
    p_L: float = 6.0
    eps: float = 1e-8
    beta: float = 120.0
    c0: float = 0.08
    dc: float = 0.05
    thickness: float = 1.0
    nx: int = 0
    ny: int = 0

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_dofs(self) -> int:
        return 2 * self.nodes.shape[0]

    @cached_property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.fixed_dofs] = False
        return np.flatnonzero(mask)

    @cached_property
    def element_dofs(self) -> np.ndarray:
        """(n_el, 8) global DOF ids ordered [u1x, u1y, u2x, ...]."""
        e = self.elements
        return np.stack([2 * e, 2 * e + 1], axis=2).reshape(len(e), 8)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    @cached_property
    def geometry(self) -> tuple[np.ndarray, np.ndarray]:
        """Shape-function gradients and quadrature weights.

        Returns ``dNdX`` with shape (n_el, 4 gp, 4 nodes, 2) and ``wdet``
        with shape (n_el, 4) holding weight * detJ * thickness.
        """
        return q4_geometry(self.nodes[self.elements], self.thickness)

    @cached_property
    def element_volumes(self) -> np.ndarray:
        return self.geometry[1].sum(axis=1)

    @cached_property
    def node_elements(self) -> sp.csr_matrix:
        """Boolean node-to-element incidence (n_nodes x n_el)."""
        ne = self.n_elements
        rows = self.elements.ravel()
        cols = np.repeat(np.arange(ne), 4)
        data = np.ones(rows.size)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_nodes, ne))

    def nodes_at(self, x: float | None = None, y: float | None = None,
                 tol: float | None = None) -> np.ndarray:
        """Node ids lying on the line x=const and/or y=const."""
        tol = 1e-9 * max(self.elem_size, 1.0) if tol is None else tol
        mask = np.ones(self.n_nodes, dtype=bool)
        if x is not None:
            mask &= np.abs(self.nodes[:, 0] - x) <= tol
        if y is not None:
            mask &= np.abs(self.nodes[:, 1] - y) <= tol
        return np.flatnonzero(mask)

    def with_params(self, **kwargs) -> "Model":
        return dataclasses.replace(self, **kwargs)


def q4_geometry(xe: np.ndarray, thickness: float = 1.0):
    """Shape-function gradients and weights for (n_el, 4, 2) node coordinates."""
    xe = np.asarray(xe, dtype=float)
    n_el = xe.shape[0]
    dNdX = np.empty((n_el, 4, 4, 2))
    wdet = np.empty((n_el, 4))
    for g, (xi, eta) in enumerate(_gauss_points()):
        dN = 0.25 * np.array([
            [-(1 - eta), -(1 - xi)],
            [(1 - eta), -(1 + xi)],
            [(1 + eta), (1 + xi)],
            [-(1 + eta), (1 - xi)],
        ])
        jac = np.einsum("eak,al->ekl", xe, dN)  # dX_k/dxi_l
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if np.any(det <= 0):
            bad = int(np.flatnonzero(det <= 0)[0])
            raise MeshError(f"non-positive Jacobian in element {bad}")
        inv = np.linalg.inv(jac)
        dNdX[:, g] = np.einsum("al,elk->eak", dN, inv)
        wdet[:, g] = det * thickness
    return dNdX, wdet


def _gauss_points():
    # counterclockwise order matching the node numbering
    g = GAUSS_2x2
    return [(g[0], g[0]), (g[1], g[0]), (g[1], g[1]), (g[0], g[1])]


def _component(c) -> int:
    if c in (0, "x", "X"):
        return 0
    if c in (1, "y", "Y"):
        return 1
    raise MeshError(f"unknown DOF component {c!r}")


def build_grid_mesh(nx: int, ny: int, elem_size: float,
                    supports: Iterable[Sequence] = (),
                    loads: Iterable[Sequence] = (),
                    **params) -> Model:
    """Build a structured grid of square Q4 elements.

    ``supports`` is a sequence of ``(node, component)`` or
    ``(node, component, value)``; ``loads`` a sequence of
    ``(node, component, magnitude)``.  Components are 0/'x' or 1/'y'.
    Nodes are numbered row by row from the lower-left corner.
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be >= 1")
    if elem_size <= 0:
        raise MeshError("elem_size must be positive")
    xs = np.arange(nx + 1) * float(elem_size)
    ys = np.arange(ny + 1) * float(elem_size)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = (j * (nx + 1) + i).ravel()
    elements = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    return make_model(nodes, elements, elem_size, supports, loads,
                      nx=nx, ny=ny, **params)


def make_model(nodes, elements, elem_size, supports=(), loads=(),
               **params) -> Model:
    nodes = np.asarray(nodes, dtype=float)
    elements = np.asarray(elements, dtype=np.int64)
    n_nodes = nodes.shape[0]
    if elements.ndim != 2 or elements.shape[1] != 4:
        raise MeshError("elements must have 4 node ids each")
    if elements.min(initial=0) < 0 or elements.max(initial=0) >= n_nodes:
        raise MeshError("element references a missing node")
    if any(len(set(e)) != 4 for e in elements.tolist()):
        raise MeshError("element with repeated node ids")

    fixed = {}
    for s in supports:
        node, comp = int(s[0]), _component(s[1])
        value = float(s[2]) if len(s) > 2 else 0.0
        if not 0 <= node < n_nodes:
            raise MeshError(f"support node {node} out of range")
        fixed[2 * node + comp] = value
    load = np.zeros(2 * n_nodes)
    for node, comp, mag in loads:
        node = int(node)
        if not 0 <= node < n_nodes:
            raise MeshError(f"load node {node} out of range")
        load[2 * node + _component(comp)] += float(mag)

    dofs = np.array(sorted(fixed), dtype=np.int64)
    values = np.array([fixed[d] for d in dofs], dtype=float)
    model = Model(nodes=nodes, elements=elements, elem_size=float(elem_size),
                  fixed_dofs=dofs, fixed_values=values, load=load, **params)
    model.geometry  # validates Jacobians
    return model


# --------------------------------------------------------------------------
# density filter

def build_filter(model: Model, r_min: float) -> sp.csr_matrix:
    """Linear density filter with cone weights on element centroids."""
    if r_min <= 0:
        raise ValueError("r_min must be positive")
    X = model.centroids
    tree = cKDTree(X)
    dist = tree.sparse_distance_matrix(tree, r_min, output_type="coo_matrix")
    w = r_min - dist.data
    keep = (w > 0) & (dist.row != dist.col)
    rows, cols, w = dist.row[keep], dist.col[keep], w[keep]
    # self-distance is 0 and dropped by sparse_distance_matrix; add it back
    ne = model.n_elements
    rows = np.concatenate([rows, np.arange(ne)])
    cols = np.concatenate([cols, np.arange(ne)])
    w = np.concatenate([w, np.full(ne, r_min)])
    wv = w * model.element_volumes[cols]
    H = sp.csr_matrix((wv, (rows, cols)), shape=(ne, ne))
    H.sum_duplicates()
    rowsum = np.asarray(H.sum(axis=1)).ravel()
    return sp.csr_matrix(sp.diags(1.0 / rowsum) @ H)


def apply_filter(W, x_full: np.ndarray) -> np.ndarray:
    x_full = np.asarray(x_full, dtype=float)
    if W.shape[1] != x_full.shape[0]:
        raise ValueError("filter and design dimensions differ")
    return W @ x_full


# --------------------------------------------------------------------------
# symmetry

@dataclass(frozen=True, eq=False)
class Symmetry:
    """Element orbits under a reflection group of the grid.

    ``orbit`` maps every element to its reduced design index;
    ``representatives`` holds one element per orbit.
    """

    spec: str
    orbit: np.ndarray
    representatives: np.ndarray

    @property
    def n_reduced(self) -> int:
        return self.representatives.size

    def expand(self, x_reduced: np.ndarray) -> np.ndarray:
        return np.asarray(x_reduced, dtype=float)[self.orbit]

    def restrict(self, x_full: np.ndarray) -> np.ndarray:
        return np.asarray(x_full)[self.representatives]

    def reduce_gradient(self, g_full: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`expand`: sum over each orbit."""
        g_full = np.asarray(g_full, dtype=float)
        if g_full.ndim == 1:
            return np.bincount(self.orbit, weights=g_full,
                               minlength=self.n_reduced)
        out = np.zeros((self.n_reduced,) + g_full.shape[1:])
        np.add.at(out, self.orbit, g_full)
        return out

    @cached_property
    def orbit_sizes(self) -> np.ndarray:
        return np.bincount(self.orbit, minlength=self.n_reduced)


def make_symmetry(model: Model, spec: str = "none") -> Symmetry:
    if spec not in SYMMETRIES:
        raise ValueError(f"unknown symmetry {spec!r}")
    nx, ny = model.nx, model.ny
    ne = model.n_elements
    if spec != "none" and nx * ny != ne:
        raise MeshError("symmetry requires a structured grid model")
    if spec == "eighth" and nx != ny:
        raise MeshError("eighth symmetry requires a square grid (nx == ny)")
    idx = np.arange(ne)
    if spec == "none":
        return Symmetry(spec, idx.copy(), idx.copy())
    i, j = idx % nx, idx // nx
    images = [(i, j), (nx - 1 - i, j)]
    if spec in ("quarter", "eighth"):
        images += [(ii, ny - 1 - jj) for ii, jj in images]
    if spec == "eighth":
        images += [(jj, ii) for ii, jj in images]
    # orbit label = smallest element id among the images
    label = np.min([jj * nx + ii for ii, jj in images], axis=0)
    reps, orbit = np.unique(label, return_inverse=True)
    return Symmetry(spec, orbit.astype(np.int64), reps.astype(np.int64))


def expand_symmetry(x_reduced: np.ndarray, spec: str, model: Model) -> np.ndarray:
    return make_symmetry(model, spec).expand(x_reduced)


# --------------------------------------------------------------------------
# volume

def volume_constraint(rho: np.ndarray, model: Model, V_f: float):
    """Return ``(f1, df1/drho)`` for the material-volume constraint."""
    if not 0 < V_f <= 1:
        raise ValueError("V_f must lie in (0, 1]")
    v = model.element_volumes
    Vs = v.sum()
    f1 = float(np.dot(rho, v) / (Vs * V_f) - 1.0)
    return f1, v / (Vs * V_f)


def volume_fraction(rho: np.ndarray, model: Model) -> float:
    v = model.element_volumes
    return float(np.dot(rho, v) / v.sum())

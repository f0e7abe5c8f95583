"""Preset structured-grid problems used by the examples and tests.

All presets use unit thickness and leave units to the caller; the defaults
are dimensionless (E = 1, element size 1).
"""
from __future__ import annotations

import numpy as np

from .model import Model, build_grid_mesh


def _node(nx: int, i: int, j: int) -> int:
    return j * (nx + 1) + i


def _middle_nodes(nx: int, j: int, count: int = 3) -> list[int]:
    mid = nx // 2
    half = count // 2
    return [_node(nx, i, j) for i in range(mid - half, mid + half + 1)]


def double_clamped_beam(nx: int = 60, ny: int = 20, elem_size: float = 1.0,
                        load: float = 1.0, **params) -> Model:
    """Beam clamped on both vertical edges, point load down at top middle."""
    if nx % 2:
        raise ValueError("nx must be even so that a middle node exists")
    supports = []
    for j in range(ny + 1):
        for i in (0, nx):
            supports += [(_node(nx, i, j), "x"), (_node(nx, i, j), "y")]
    loads = [(_node(nx, nx // 2, ny), "y", -load)]
    return build_grid_mesh(nx, ny, elem_size, supports, loads, **params)


def pinned_column(width: int = 4, height: int = 80, margin: int = 0,
                  elem_size: float = 1.0, load: float = 1.0,
                  support_nodes: int = 1, load_nodes: int = 3,
                  **params) -> tuple[Model, np.ndarray]:
    """Column pinned at the bottom and on a roller at the top.

    The column (``width`` elements wide) sits in the middle of a grid with
    ``margin`` extra element columns on each side.  ``support_nodes`` middle
    nodes are pinned at the bottom and held laterally at the top; the total
    ``load`` is split equally over ``load_nodes`` top-middle nodes.  Returns
    the model and the solid/void density field.
    """
    if width % 2 or support_nodes % 2 == 0 or load_nodes % 2 == 0:
        raise ValueError("width must be even, node counts odd")
    nx, ny = width + 2 * margin, height
    supports = []
    for n in _middle_nodes(nx, 0, support_nodes):
        supports += [(n, "x"), (n, "y")]
    for n in _middle_nodes(nx, ny, support_nodes):
        supports += [(n, "x")]
    loads = [(n, "y", -load / load_nodes) for n in _middle_nodes(nx, ny, load_nodes)]
    model = build_grid_mesh(nx, ny, elem_size, supports, loads, **params)
    i = np.arange(model.n_elements) % nx
    rho = ((i >= margin) & (i < margin + width)).astype(float)
    return model, rho


def compressive_block(n: int = 20, elem_size: float = 1.0, load: float = 1.0,
                      **params) -> Model:
    """Square block loaded inward at the middle three nodes of every side.

    Rigid-body motion is removed by fixing the tangential DOF of each side's
    middle node, which keeps the full dihedral symmetry of the square.
    """
    if n % 2:
        raise ValueError("n must be even")
    h = n // 2
    supports = [(_node(n, h, 0), "x"), (_node(n, h, n), "x"),
                (_node(n, 0, h), "y"), (_node(n, n, h), "y")]
    f = load / 3.0
    loads = []
    for k in (-1, 0, 1):
        loads += [(_node(n, h + k, 0), "y", f), (_node(n, h + k, n), "y", -f),
                  (_node(n, 0, h + k), "x", f), (_node(n, n, h + k), "x", -f)]
    return build_grid_mesh(n, n, elem_size, supports, loads, **params)


def shallow_arch(n_span: int = 40, thickness: int = 2, rise: float = 4.0,
                 elem_size: float = 1.0, load: float = 1.0, **params) -> Model:
    """Pinned shallow circular arch (mapped grid) with a central point load.

    Not a plain grid model: nodes are lifted along a parabola, so design
    symmetry helpers are unavailable (``nx = ny = 0``).
    """
    from .model import make_model

    nx, ny = n_span, thickness
    L = nx * elem_size
    xs = np.arange(nx + 1) * elem_size
    lift = 4 * rise * xs * (L - xs) / L ** 2
    nodes = np.array([[x, dy + j * elem_size] for j in range(ny + 1)
                      for x, dy in zip(xs, lift)])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = (j * (nx + 1) + i).ravel()
    elements = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    supports = []
    for side in (0, nx):
        n = _node(nx, side, 0)
        supports += [(n, "x"), (n, "y")]
    loads = [(_node(nx, nx // 2, ny), "y", -load)]
    return make_model(nodes, elements, elem_size, supports, loads, **params)


def monitored_dof(model: Model) -> int:
    """DOF with the largest reference-load component (plotting convenience)."""
    return int(np.argmax(np.abs(model.load)))

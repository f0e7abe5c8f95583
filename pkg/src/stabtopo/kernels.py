"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
implementation is used.  Setting ``STABTOPO_PURE_PYTHON=1`` forces the
fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py
from ._kernels_py import (ElementInversionError, displacement_gradient,
                          gauss_point_state, strain_displacement)

element_force_tangent_py = _kernels_py.element_force_tangent

try:
    if os.environ.get("STABTOPO_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from ._kernels import element_force_tangent as element_force_tangent_c
    BACKEND = "compiled"
    element_force_tangent = element_force_tangent_c
except ImportError:
    element_force_tangent_c = None
    BACKEND = "python"
    element_force_tangent = element_force_tangent_py

__all__ = ["BACKEND", "ElementInversionError", "element_force_tangent",
           "element_force_tangent_c", "element_force_tangent_py",
           "displacement_gradient", "gauss_point_state", "strain_displacement"]

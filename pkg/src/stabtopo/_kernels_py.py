"""Pure-numpy element kernels (fallback for the compiled extension)."""
from __future__ import annotations

import numpy as np

from .material import (SingularConfigurationError, bulk_shear, flatten4,
                       linear_moduli, pk1_stress, tangent_moduli)


class ElementInversionError(SingularConfigurationError):
    """Interpolated deformation gradient inverted inside an element."""

    def __init__(self, element: int):
        super().__init__(f"element {element} inverted (det F <= 0)")
        self.element = int(element)


def strain_displacement(dNdX: np.ndarray) -> np.ndarray:
    """Matrix mapping element DOFs to vec(grad u), flat index 2*i + j.

    ``dNdX`` has shape (..., 4, 2); the result has shape (..., 4, 8).
    """
    B = np.zeros(dNdX.shape[:-2] + (4, 8))
    for a in range(4):
        for i in range(2):
            for j in range(2):
                B[..., 2 * i + j, 2 * a + i] = dNdX[..., a, j]
    return B


def displacement_gradient(B: np.ndarray, ue: np.ndarray) -> np.ndarray:
    """(ne, ngp, 2, 2) displacement gradients."""
    H = np.einsum("egmn,en->egm", B, ue)
    return H.reshape(H.shape[:-1] + (2, 2))


def gauss_point_state(dNdX, ue, eta, E_nl, nu):
    """F, P and flattened A at every Gauss point; raises on inversion."""
    B = strain_displacement(dNdX)
    H = displacement_gradient(B, ue)
    F = np.eye(2) + eta[:, None, None, None] * H
    J = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    if np.any(J <= 0):
        raise ElementInversionError(int(np.argwhere(J <= 0)[0, 0]))
    kappa, mu = bulk_shear(E_nl, nu)
    P = pk1_stress(F, kappa[:, None], mu[:, None])
    A = flatten4(tangent_moduli(F, kappa[:, None], mu[:, None]))
    return B, H, F, P, A


def element_force_tangent(dNdX, wdet, ue, eta, E_nl, E_lin, nu):
    """Internal forces (ne, 8) and tangents (ne, 8, 8) of a batch of elements.

    Finite-strain part weighted by ``eta`` (on the kinematics) and ``eta**2``
    (on the tangent); small-strain part weighted by ``1 - eta**2``.
    """
    B, H, F, P, A = gauss_point_state(dNdX, ue, eta, E_nl, nu)
    C = flatten4(linear_moduli(E_lin, nu))  # (ne, 4, 4)
    ne = ue.shape[0]
    vP = P.reshape(ne, -1, 4)
    vH = H.reshape(ne, -1, 4)
    wl = wdet * (1.0 - eta ** 2)[:, None]
    sig = (wdet * eta[:, None])[..., None] * vP \
        + wl[..., None] * np.einsum("emk,egk->egm", C, vH)
    fe = np.einsum("egmn,egm->en", B, sig)
    At = (wdet * eta[:, None] ** 2)[..., None, None] * A \
        + wl[..., None, None] * C[:, None]
    ke = np.einsum("egmn,egmk,egkl->enl", B, At, B)
    return fe, ke

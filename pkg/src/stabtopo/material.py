"""Neo-Hookean kernels, SIMP interpolation and the energy-interpolation weight.

All tensor kernels act on the in-plane 2x2 block of a plane-strain
deformation gradient (out-of-plane stretch fixed at 1) and broadcast over
leading batch dimensions.  Fourth- and sixth-order tensors are returned with
explicit indices, shape ``(..., 2, 2, 2, 2)`` and ``(..., 2, 2, 2, 2, 2, 2)``;
:func:`flatten4` / :func:`flatten6` give the 4x4 and 16x4 matrix forms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

I2 = np.eye(2)


class SingularConfigurationError(ValueError):
    """Deformation gradient with non-positive determinant."""


# --------------------------------------------------------------------------
# property interpolation

def simp_modulus(rho, E: float, p: float, eps: float = 1e-8):
    rho = np.asarray(rho, dtype=float)
    return (eps + (1.0 - eps) * rho ** p) * E


def simp_modulus_derivative(rho, E: float, p: float, eps: float = 1e-8):
    rho = np.asarray(rho, dtype=float)
    if p == 1.0:
        return np.full_like(rho, (1.0 - eps) * E)
    return p * (1.0 - eps) * rho ** (p - 1.0) * E


def bulk_shear(E, nu: float):
    """Bulk and shear moduli from Young's modulus and Poisson's ratio."""
    return E / (3.0 * (1.0 - 2.0 * nu)), E / (2.0 * (1.0 + nu))


def energy_weight(rho, beta: float, c: float):
    """Weight blending finite-strain and small-strain kinematics.

    Evaluated as a logistic function of ``beta * (rho - c)`` so that large
    ``beta`` never overflows.
    """
    t = beta * (np.asarray(rho, dtype=float) - c)
    return _logistic(t)


def energy_weight_derivative(rho, beta: float, c: float):
    eta = energy_weight(rho, beta, c)
    return beta * eta * (1.0 - eta)


def _logistic(t):
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    et = np.exp(t[~pos])
    out[~pos] = et / (1.0 + et)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class InterpolatedProperties:
    """Density-dependent properties of a set of elements."""

    E_nl: np.ndarray      # finite-strain modulus, penalization p
    dE_nl: np.ndarray
    E_lin: np.ndarray     # small-strain modulus, penalization p_L
    dE_lin: np.ndarray
    eta: np.ndarray
    deta: np.ndarray
    nu: float

    @property
    def kappa(self):
        return bulk_shear(self.E_nl, self.nu)[0]

    @property
    def mu(self):
        return bulk_shear(self.E_nl, self.nu)[1]


def interpolate(rho, model, c: float | None = None) -> InterpolatedProperties:
    rho = np.asarray(rho, dtype=float)
    c = model.c0 if c is None else c
    return InterpolatedProperties(
        E_nl=simp_modulus(rho, model.E, model.p, model.eps),
        dE_nl=simp_modulus_derivative(rho, model.E, model.p, model.eps),
        E_lin=simp_modulus(rho, model.E, model.p_L, model.eps),
        dE_lin=simp_modulus_derivative(rho, model.E, model.p_L, model.eps),
        eta=np.asarray(energy_weight(rho, model.beta, c), dtype=float),
        deta=np.asarray(energy_weight_derivative(rho, model.beta, c), dtype=float),
        nu=model.nu,
    )


# --------------------------------------------------------------------------
# neo-Hookean kernels

def _kinematics(F):
    F = np.asarray(F, dtype=float)
    J = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    if np.any(J <= 0):
        raise SingularConfigurationError("det F <= 0")
    G = np.empty_like(F)  # F^{-T}
    G[..., 0, 0] = F[..., 1, 1] / J
    G[..., 0, 1] = -F[..., 1, 0] / J
    G[..., 1, 0] = -F[..., 0, 1] / J
    G[..., 1, 1] = F[..., 0, 0] / J
    Jm23 = J ** (-2.0 / 3.0)
    # out-of-plane stretch contributes 1 to tr C
    I1bar = Jm23 * (np.einsum("...ij,...ij->...", F, F) + 1.0)
    return F, J, G, Jm23, I1bar


def _bc(x, nd):
    """Append ``nd`` singleton axes to a batch scalar."""
    x = np.asarray(x, dtype=float)
    return x.reshape(x.shape + (1,) * nd)


def neo_hookean_energy(F, kappa, mu):
    F, J, G, Jm23, I1bar = _kinematics(F)
    return 0.5 * kappa * (J - 1.0) ** 2 + 0.5 * mu * (I1bar - 3.0)


def pk1_stress(F, kappa, mu):
    """First Piola-Kirchhoff stress, in-plane block."""
    F, J, G, Jm23, I1bar = _kinematics(F)
    a = kappa * (J - 1.0) * J - mu / 3.0 * I1bar
    return _bc(a, 2) * G + _bc(mu * Jm23, 2) * F


def _dI1bar(F, G, Jm23, I1bar):
    return 2.0 * _bc(Jm23, 2) * F - 2.0 / 3.0 * _bc(I1bar, 2) * G


def tangent_moduli(F, kappa, mu):
    """Second derivative of the stored energy, A_ijkl = dP_ij / dF_kl."""
    F, J, G, Jm23, I1bar = _kinematics(F)
    D = _dI1bar(F, G, Jm23, I1bar)
    GG = np.einsum("...ij,...kl->...ijkl", G, G)
    GGx = np.einsum("...il,...kj->...ijkl", G, G)
    Id = np.einsum("ik,jl->ijkl", I2, I2)
    FG = np.einsum("...ij,...kl->...ijkl", F, G)
    GD = np.einsum("...ij,...kl->...ijkl", G, D)
    kappa = np.asarray(kappa, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return (_bc(kappa * (2 * J - 1) * J, 4) * GG
            - _bc(kappa * (J - 1) * J - mu / 3.0 * I1bar, 4) * GGx
            + _bc(mu * Jm23, 4) * Id
            - _bc(2.0 / 3.0 * mu * Jm23, 4) * FG
            - _bc(mu / 3.0, 4) * GD)


def tangent_moduli_derivative(F, kappa, mu):
    """Third derivative of the stored energy, dA_ijkl / dF_pq."""
    F, J, G, Jm23, I1bar = _kinematics(F)
    D = _dI1bar(F, G, Jm23, I1bar)
    kappa = np.asarray(kappa, dtype=float)
    mu = np.asarray(mu, dtype=float)
    e = lambda s, *ops: np.einsum(s, *ops)  # noqa: E731

    # dG_ij/dF_pq = -G_iq G_pj
    GGG = e("...pq,...ij,...kl->...ijklpq", G, G, G)
    # d(G_ij G_kl)/dF_pq
    dGG = -(e("...iq,...pj,...kl->...ijklpq", G, G, G)
            + e("...ij,...kq,...pl->...ijklpq", G, G, G))
    # d(G_il G_kj)/dF_pq
    dGGx = -(e("...iq,...pl,...kj->...ijklpq", G, G, G)
             + e("...il,...kq,...pj->...ijklpq", G, G, G))
    GGx_G = e("...il,...kj,...pq->...ijklpq", G, G, G)
    Id = np.einsum("ik,jl->ijkl", I2, I2)
    Id_G = e("ijkl,...pq->...ijklpq", Id, G)
    FGG = e("...ij,...kl,...pq->...ijklpq", F, G, G)
    # d(F_ij G_kl)/dF_pq
    dFG = (e("ip,jq,...kl->...ijklpq", I2, I2, G)
           - e("...ij,...kq,...pl->...ijklpq", F, G, G))
    # dD_kl/dF_pq
    dD = (2.0 * _bc(Jm23, 4) * Id
          - 4.0 / 3.0 * _bc(Jm23, 4) * e("...kl,...pq->...klpq", F, G)
          - 2.0 / 3.0 * e("...kl,...pq->...klpq", G, D)
          + 2.0 / 3.0 * _bc(I1bar, 4) * e("...kq,...pl->...klpq", G, G))
    G_dD = e("...ij,...klpq->...ijklpq", G, dD)
    dG_D = -e("...iq,...pj,...kl->...ijklpq", G, G, D)
    GGx_D = e("...il,...kj,...pq->...ijklpq", G, G, D)

    b = kappa * (2 * J - 1) * J
    c = kappa * (J - 1) * J - mu / 3.0 * I1bar
    out = (_bc(kappa * (4 * J - 1) * J, 6) * GGG + _bc(b, 6) * dGG
           - _bc(kappa * (2 * J - 1) * J, 6) * GGx_G
           + _bc(mu / 3.0, 6) * GGx_D
           - _bc(c, 6) * dGGx
           - _bc(2.0 / 3.0 * mu * Jm23, 6) * Id_G
           + _bc(4.0 / 9.0 * mu * Jm23, 6) * FGG
           - _bc(2.0 / 3.0 * mu * Jm23, 6) * dFG
           - _bc(mu / 3.0, 6) * (G_dD + dG_D))
    return out


def flatten4(A):
    return np.asarray(A).reshape(A.shape[:-4] + (4, 4))


def flatten6(dA):
    return np.asarray(dA).reshape(dA.shape[:-6] + (16, 4))


def linear_moduli(E, nu: float):
    """Plane-strain isotropic moduli acting on the displacement gradient.

    Same tensor form as :func:`tangent_moduli` at F = I, so that
    ``C : H`` equals ``C : sym(H)``.
    """
    E = np.asarray(E, dtype=float)
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    Iv = np.einsum("ij,kl->ijkl", I2, I2)
    Is = np.einsum("ik,jl->ijkl", I2, I2) + np.einsum("il,jk->ijkl", I2, I2)
    return _bc(lam, 4) * Iv + _bc(mu, 4) * Is

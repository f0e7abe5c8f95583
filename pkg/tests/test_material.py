import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from stabtopo.material import (SingularConfigurationError, bulk_shear,
                               energy_weight, energy_weight_derivative,
                               flatten4, flatten6, linear_moduli,
                               neo_hookean_energy, pk1_stress, simp_modulus,
                               simp_modulus_derivative, tangent_moduli,
                               tangent_moduli_derivative)

from conftest import rel

KAPPA, MU = bulk_shear(1.0, 0.3)
small = arrays(float, (2, 2), elements=st.floats(-0.3, 0.3))


def _fd(fun, F, h=1e-6):
    """Central-difference derivative of ``fun`` w.r.t. every component of F."""
    out = []
    for k in range(2):
        for l in range(2):
            d = np.zeros((2, 2))
            d[k, l] = h
            out.append((fun(F + d) - fun(F - d)) / (2 * h))
    out = np.array(out)
    return np.moveaxis(out.reshape((2, 2) + out.shape[1:]), (0, 1), (-2, -1))


def test_bulk_shear_values():
    kappa, mu = bulk_shear(1.0, 0.3)
    assert kappa == pytest.approx(1 / 1.2)
    assert mu == pytest.approx(1 / 2.6)


def test_simp_modulus_and_derivative():
    rho = np.linspace(0.05, 1, 7)
    h = 1e-6
    fd = (simp_modulus(rho + h, 2.0, 3) - simp_modulus(rho - h, 2.0, 3)) / (2 * h)
    assert rel(simp_modulus_derivative(rho, 2.0, 3), fd) < 1e-8
    assert simp_modulus(0.0, 2.0, 3, 1e-8) == pytest.approx(2e-8)
    assert simp_modulus(1.0, 2.0, 3) == pytest.approx(2.0)


def test_energy_weight_limits_and_derivative():
    assert energy_weight(1.0, 120, 0.08) == pytest.approx(1.0)
    assert energy_weight(0.0, 120, 0.08) < 1e-4
    assert energy_weight(0.08, 120, 0.08) == pytest.approx(0.5)
    # no overflow for extreme arguments
    assert np.isfinite(energy_weight(np.array([-1e6, 1e6]), 1e3, 0.0)).all()
    rho = np.linspace(0.0, 0.2, 9)
    h = 1e-7
    fd = (energy_weight(rho + h, 120, 0.08) - energy_weight(rho - h, 120, 0.08)) / (2 * h)
    assert rel(energy_weight_derivative(rho, 120, 0.08), fd) < 1e-6


def test_identity_is_stress_free():
    assert neo_hookean_energy(np.eye(2), KAPPA, MU) == pytest.approx(0.0, abs=1e-15)
    assert np.abs(pk1_stress(np.eye(2), KAPPA, MU)).max() < 1e-15


def test_small_strain_limit_matches_linear_moduli():
    A = tangent_moduli(np.eye(2), KAPPA, MU)
    C = linear_moduli(1.0, 0.3)
    assert rel(A, C) < 1e-12


@given(small)
def test_stress_is_energy_gradient(H):
    F = np.eye(2) + H
    fd = _fd(lambda G: neo_hookean_energy(G, KAPPA, MU), F)
    assert rel(pk1_stress(F, KAPPA, MU), fd, floor=1e-2) < 1e-6


@given(small)
def test_tangent_is_stress_gradient(H):
    F = np.eye(2) + H
    fd = _fd(lambda G: pk1_stress(G, KAPPA, MU), F)
    assert rel(tangent_moduli(F, KAPPA, MU), fd) < 1e-5


@given(small)
def test_tangent_derivative_fd(H):
    F = np.eye(2) + H
    fd = _fd(lambda G: tangent_moduli(G, KAPPA, MU), F)
    assert rel(tangent_moduli_derivative(F, KAPPA, MU), fd) < 1e-5


@given(small, st.floats(0, 2 * np.pi))
def test_frame_invariance(H, a):
    F = np.eye(2) + H
    Q = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    assert neo_hookean_energy(Q @ F, KAPPA, MU) == pytest.approx(
        neo_hookean_energy(F, KAPPA, MU), rel=1e-10, abs=1e-14)
    P = pk1_stress(F, KAPPA, MU)
    # balance of angular momentum: P F^T symmetric
    assert np.allclose(P @ F.T, (P @ F.T).T, atol=1e-12)


@given(small)
def test_tangent_major_symmetry(H):
    A = flatten4(tangent_moduli(np.eye(2) + H, KAPPA, MU))
    assert np.allclose(A, A.T, atol=1e-12)


def test_flatten_shapes():
    F = np.eye(2) + 0.1
    assert flatten4(tangent_moduli(F, KAPPA, MU)).shape == (4, 4)
    assert flatten6(tangent_moduli_derivative(F, KAPPA, MU)).shape == (16, 4)


def test_batched_kernels_broadcast(rng):
    F = np.eye(2) + 0.1 * rng.standard_normal((5, 3, 2, 2))
    P = pk1_stress(F, KAPPA, MU)
    assert P.shape == (5, 3, 2, 2)
    assert np.allclose(P[2, 1], pk1_stress(F[2, 1], KAPPA, MU))


def test_inverted_configuration_raises():
    F = np.diag([1.0, -0.5])
    with pytest.raises(SingularConfigurationError):
        pk1_stress(F, KAPPA, MU)

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stabtopo import kernels
from stabtopo.kernels import (ElementInversionError, element_force_tangent_py,
                              strain_displacement)
from stabtopo.material import bulk_shear, flatten4, linear_moduli, neo_hookean_energy
from stabtopo.model import q4_geometry

from conftest import rel

NU = 0.3
SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
SKEWED = np.array([[0.0, 0.0], [1.2, 0.1], [1.0, 0.9], [-0.1, 1.1]])


def element_energy(xe, ue, eta, E_nl, E_lin):
    """Blended element energy whose gradient is the element force."""
    dNdX, wdet = q4_geometry(xe[None])
    B = strain_displacement(dNdX)[0]
    kappa, mu = bulk_shear(E_nl, NU)
    C = flatten4(linear_moduli(E_lin, NU))
    W = 0.0
    for g in range(4):
        vH = B[g] @ ue
        F = np.eye(2) + eta * vH.reshape(2, 2)
        W += wdet[0, g] * (neo_hookean_energy(F, kappa, mu)
                           + 0.5 * (1 - eta ** 2) * vH @ C @ vH)
    return W


def force_tangent(xe, ue, eta, E_nl, E_lin, fn=None):
    fn = kernels.element_force_tangent if fn is None else fn
    dNdX, wdet = q4_geometry(xe[None])
    f, k = fn(dNdX, wdet, ue[None], np.array([eta]), np.array([E_nl]),
              np.array([E_lin]), NU)
    return f[0], k[0]


ue_strategy = st.lists(st.floats(-0.1, 0.1), min_size=8, max_size=8).map(np.array)


@pytest.mark.parametrize("xe", [SQUARE, SKEWED])
@given(ue=ue_strategy, eta=st.floats(0.0, 1.0))
def test_force_is_energy_gradient(xe, ue, eta):
    f, _ = force_tangent(xe, ue, eta, 1.0, 0.5)
    h = 1e-6
    fd = np.array([(element_energy(xe, ue + h * e, eta, 1.0, 0.5)
                    - element_energy(xe, ue - h * e, eta, 1.0, 0.5)) / (2 * h)
                   for e in np.eye(8)])
    assert rel(f, fd, floor=1e-3) < 1e-6


@pytest.mark.parametrize("xe", [SQUARE, SKEWED])
@given(ue=ue_strategy, eta=st.floats(0.0, 1.0))
def test_tangent_is_force_gradient(xe, ue, eta):
    f, k = force_tangent(xe, ue, eta, 1.0, 0.5)
    h = 1e-7
    fd = np.column_stack([(force_tangent(xe, ue + h * e, eta, 1.0, 0.5)[0]
                           - force_tangent(xe, ue - h * e, eta, 1.0, 0.5)[0]) / (2 * h)
                          for e in np.eye(8)])
    assert rel(k, fd) < 1e-5
    assert np.allclose(k, k.T, atol=1e-12 * np.abs(k).max())


@given(ue=ue_strategy, eta=st.floats(0.0, 1.0))
def test_rigid_translation_is_force_free(ue, eta):
    t = np.tile([0.3, -0.2], 4)
    f0, k0 = force_tangent(SKEWED, ue, eta, 1.0, 0.5)
    f1, k1 = force_tangent(SKEWED, ue + t, eta, 1.0, 0.5)
    assert np.allclose(f0, f1, atol=1e-12)
    assert np.allclose(k0 @ t, 0.0, atol=1e-12)


@pytest.mark.skipif(kernels.element_force_tangent_c is None,
                    reason="compiled kernel not built")
@given(st.integers(0, 2 ** 32 - 1))
def test_compiled_matches_python(seed):
    rng = np.random.default_rng(seed)
    ne = 7
    xe = SKEWED[None] + 0.05 * rng.standard_normal((ne, 4, 2))
    dNdX, wdet = q4_geometry(xe)
    ue = 0.05 * rng.standard_normal((ne, 8))
    eta = rng.uniform(0, 1, ne)
    E_nl = rng.uniform(0.1, 2, ne)
    E_lin = rng.uniform(0.1, 2, ne)
    fp, kp = element_force_tangent_py(dNdX, wdet, ue, eta, E_nl, E_lin, NU)
    fc, kc = kernels.element_force_tangent_c(dNdX, wdet, ue, eta, E_nl, E_lin, NU)
    assert rel(fc, fp, floor=1e-12) < 1e-12
    assert rel(kc, kp) < 1e-12


@pytest.mark.parametrize("fn", [element_force_tangent_py, kernels.element_force_tangent])
def test_inversion_is_reported_with_element_id(fn):
    xe = np.stack([SQUARE, SQUARE])
    dNdX, wdet = q4_geometry(xe)
    ue = np.zeros((2, 8))
    ue[1] = [0, 0, -3, 0, -3, 0, 0, 0]     # fold element 1 through itself
    with pytest.raises(ElementInversionError) as exc:
        fn(dNdX, wdet, ue, np.ones(2), np.ones(2), np.ones(2), NU)
    assert exc.value.element == 1


def test_pure_python_fallback_is_selectable():
    env = dict(os.environ, STABTOPO_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c",
                          "from stabtopo import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_strain_displacement_layout():
    dNdX, _ = q4_geometry(SQUARE[None])
    B = strain_displacement(dNdX)
    assert B.shape == (1, 4, 4, 8)
    # B[2i+j, 2a+i] = dN_a/dX_j
    g = 0
    for a in range(4):
        for i in range(2):
            for j in range(2):
                assert B[0, g, 2 * i + j, 2 * a + i] == dNdX[0, g, a, j]

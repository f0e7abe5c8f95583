import numpy as np
import pytest
import scipy.sparse.linalg as spla

from stabtopo.fem import (AnalysisFailure, SolverOptions, assemble,
                          element_force_and_tangent, element_properties,
                          equilibrium_residual, internal_forces, free_tangent,
                          linear_stiffness, residual_density_derivative,
                          solve_equilibrium)
from stabtopo.model import build_grid_mesh

from conftest import rel


def _random_state(model, rng, amp=0.02):
    rho = rng.uniform(0.05, 1.0, model.n_elements)
    u = amp * rng.standard_normal(model.n_dofs)
    u[model.fixed_dofs] = model.fixed_values
    return rho, u


def test_global_tangent_matches_fd(small_beam, rng):
    model = small_beam
    rho, u = _random_state(model, rng)
    fint, ke = internal_forces(model, u, rho)
    K = free_tangent(model, ke).toarray()
    free = model.free_dofs
    h = 1e-7
    fd = np.empty_like(K)
    for k, d in enumerate(free):
        up, um = u.copy(), u.copy()
        up[d] += h
        um[d] -= h
        fd[:, k] = (internal_forces(model, up, rho)[0][free]
                    - internal_forces(model, um, rho)[0][free]) / (2 * h)
    assert rel(K, fd) < 1e-5


def test_residual_density_derivative_matches_fd(small_beam, rng):
    model = small_beam
    rho, u = _random_state(model, rng)
    dR = residual_density_derivative(model, u, rho).toarray()
    h = 1e-6
    for e in range(model.n_elements):
        d = np.zeros_like(rho)
        d[e] = h
        fd = (assemble(model, u, rho + d)[0] - assemble(model, u, rho - d)[0]) / (2 * h)
        assert rel(dR[:, e], fd, floor=1e-3 * np.abs(dR).max()) < 1e-5


def test_assemble_eliminates_boundary(small_beam, rng):
    rho, u = _random_state(small_beam, rng)
    R, K = assemble(small_beam, u, rho, gamma=0.3)
    fixed = small_beam.fixed_dofs
    assert np.all(R[fixed] == 0.0)
    Kd = K.toarray()
    assert np.allclose(Kd[fixed][:, fixed], np.eye(fixed.size))
    assert np.allclose(Kd, Kd.T, atol=1e-12 * np.abs(Kd).max())


def test_small_load_matches_linear_solution(small_beam):
    model = small_beam
    rho = np.ones(model.n_elements)
    gamma = 1e-6
    state = solve_equilibrium(model, rho, gamma)
    K0 = linear_stiffness(model, rho)
    u_lin = gamma * spla.spsolve(K0, model.load[model.free_dofs])
    assert rel(state.u[model.free_dofs], u_lin) < 1e-5


def test_equilibrium_residual_is_small(small_beam, rng):
    model = small_beam
    rho = rng.uniform(0.2, 1.0, model.n_elements)
    state = solve_equilibrium(model, rho, 0.05)
    r = equilibrium_residual(model, state)
    assert np.linalg.norm(r) <= 1e-9 * np.linalg.norm(0.05 * model.load)
    assert state.gamma == 0.05
    # continuing from a converged state reaches the same equilibrium
    half = solve_equilibrium(model, rho, 0.025)
    cont = solve_equilibrium(model, rho, 0.05, start=half)
    assert rel(cont.u, state.u) < 1e-8


def test_patch_test_uniform_stretch():
    """Homogeneous deformation of an irregular-free patch: interior forces vanish."""
    model = build_grid_mesh(3, 3, 1.0)
    rho = np.ones(model.n_elements)
    F = np.array([[1.05, 0.02], [-0.01, 0.97]])
    u = ((model.nodes @ F.T) - model.nodes).ravel()
    fint, _ = internal_forces(model, u, rho)
    interior = [5, 6, 9, 10]
    for n in interior:
        assert np.allclose(fint[2 * n:2 * n + 2], 0.0, atol=1e-13)
    # net force on the patch is zero
    assert np.allclose(fint.reshape(-1, 2).sum(axis=0), 0.0, atol=1e-13)


def test_element_state_consistency():
    coords = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    F = np.array([[1.1, 0.0], [0.0, 0.95]])
    ue = ((coords @ F.T) - coords).ravel()
    model = build_grid_mesh(1, 1, 1.0)
    props = element_properties(model, np.ones(1))
    props1 = type(props)(**{k: (v[0] if isinstance(v, np.ndarray) else v)
                            for k, v in vars(props).items()})
    out = element_force_and_tangent(coords, ue, 1.0, props1)
    eta = props1.eta
    assert np.allclose(out.F, np.eye(2) + eta * (F - np.eye(2)))
    assert out.force.shape == (8,) and out.tangent.shape == (8, 8)


def test_cutoff_update_and_failure(small_beam):
    model = small_beam
    rho = np.full(model.n_elements, 0.02)
    opts = SolverOptions(update_cutoff=False, min_increment=1 / 4)
    with pytest.raises(AnalysisFailure) as exc:
        solve_equilibrium(model, rho, 50.0, opts=opts)
    assert 0.0 <= exc.value.gamma_reached < 50.0
    assert "gamma reached" in str(exc.value)

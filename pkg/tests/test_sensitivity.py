import numpy as np
import pytest

from stabtopo.fem import solve_equilibrium
from stabtopo.model import build_filter, make_symmetry
from stabtopo.problems import compressive_block
from stabtopo.sensitivity import (SensitivityContext, analyse_sensitivities,
                                  cluster_direction_vectors, design_gradient,
                                  directional_increments, first_order_multi_eig_check,
                                  simple_eigenvalue_gradient, verify_sensitivities_cdm)
from stabtopo.stability import PseudoMassParams, eigen_lowest, pseudo_mass_diagonal

PM = PseudoMassParams(p_m=4.0)


@pytest.fixture(scope="module")
def beam_report(small_beam):
    rho = np.random.default_rng(7).uniform(0.2, 1.0, small_beam.n_elements)
    return verify_sensitivities_cdm(small_beam, rho, 0.05, h=1e-5, m=3, params=PM)


def test_compliance_and_eigen_gradients_match_fd(beam_report):
    assert beam_report.excluded == []
    assert beam_report.max_rel_err(0) < 1e-5
    assert beam_report.max_rel_err() < 1e-4


def test_cdm_table_layout(beam_report):
    lines = beam_report.table().splitlines()
    assert lines[0] == "element,kernel,analytic,fd,rel_err"
    assert len(lines) == 1 + beam_report.elements.size * 4
    assert lines[1].split(",")[1] == "f0"


def test_cdm_detects_corrupted_gradient(small_beam):
    rho = np.random.default_rng(7).uniform(0.2, 1.0, small_beam.n_elements)

    def corrupt(a):
        a = a.copy()
        a[:, 2] *= 1.01
        return a
    rep = verify_sensitivities_cdm(small_beam, rho, 0.05, m=3, params=PM,
                                   elements=[0, 5, 9], gradient_hook=corrupt)
    assert rep.max_rel_err(2) > 5e-3
    assert rep.max_rel_err(1) < 1e-4


def test_mass_chain_on_low_density_design(small_beam):
    """Near-void densities put the nodal pseudo-densities on the cubic blend."""
    model = small_beam
    rng = np.random.default_rng(3)
    rho = rng.uniform(0.3, 1.0, model.n_elements)
    patch = np.array([j * 8 + i for j in (1, 2) for i in range(2, 6)])
    rho[patch] = rng.uniform(0.1, 0.2, patch.size)
    state = solve_equilibrium(model, rho, 0.02)
    ctx = SensitivityContext(model, state, PM)
    s = pseudo_mass_diagonal(model, rho, PM)
    assert np.any(s < 1.0)
    eig = eigen_lowest(state.K, s, 1, tol_mult=0.0)
    phi = eig.vectors[:, 0]
    g = simple_eigenvalue_gradient(state, (eig.values[0], phi), model, ctx=ctx)
    assert np.abs(ctx.mass_pair(phi, phi)).max() > 1e-3 * np.abs(g).max()
    rep = verify_sensitivities_cdm(model, rho, 0.02, h=1e-5, m=1, params=PM,
                                   elements=patch)
    assert rep.max_rel_err(1) < 1e-4


def test_singleton_cluster_equals_simple_gradient(small_beam):
    rho = np.random.default_rng(2).uniform(0.3, 1.0, small_beam.n_elements)
    state = solve_equilibrium(small_beam, rho, 0.05)
    s = pseudo_mass_diagonal(small_beam, rho, PM)
    eig = eigen_lowest(state.K, s, 1)
    lam, phi = eig.values[0], eig.vectors[:, 0]
    g = simple_eigenvalue_gradient(state, (lam, phi), small_beam, params=PM)
    z, _ = cluster_direction_vectors(state, (lam, phi[:, None]), small_beam, params=PM)
    assert np.max(np.abs(z[0, 0] - g)) <= 1e-10 * np.abs(g).max()


def test_directional_increments_are_symmetric_eigs(rng):
    n = 5
    z = {(0, 0): rng.standard_normal(n), (0, 1): rng.standard_normal(n),
         (1, 1): rng.standard_normal(n)}
    d = rng.standard_normal(n)
    T, lam = directional_increments(z, d)
    ref = np.array([[z[0, 0] @ d, z[0, 1] @ d], [z[0, 1] @ d, z[1, 1] @ d]])
    assert np.allclose(T, ref)
    assert np.allclose(lam, np.linalg.eigvalsh(ref))


def test_repeated_eigenvalue_first_order():
    model = compressive_block(6)
    rho = np.full(model.n_elements, 0.6)
    state = solve_equilibrium(model, rho, 0.05)
    sens = analyse_sensitivities(model, state, 4, params=PM)
    idx = next(i for i, c in enumerate(sens.eig.clusters) if len(c) > 1)
    drho = np.random.default_rng(1).uniform(-1, 1, model.n_elements)
    rep = first_order_multi_eig_check(model, state, idx, drho, m=idx + 1, params=PM)
    assert 1.7 <= rep.slope <= 2.3


def test_design_gradient_chain(small_beam, rng):
    W = build_filter(small_beam, 1.5)
    sym = make_symmetry(small_beam, "half-x")
    g = rng.standard_normal(small_beam.n_elements)
    x = rng.standard_normal(sym.n_reduced)
    dx = rng.standard_normal(sym.n_reduced)
    lin = lambda v: g @ (W @ sym.expand(v))
    assert np.isclose(design_gradient(g, W, sym) @ dx, lin(x + dx) - lin(x))

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stabtopo.continuation import (EquilibriumSystem, arc_length_trace,
                                   branch_switch_predictor, branch_switch_simple,
                                   disturbance_load, export_paths_csv, read_paths_csv,
                                   same_crossings, suggest_arc_length, threshold_design,
                                   trace_post_buckling)
from stabtopo.model import MeshError, build_grid_mesh
from stabtopo.problems import monitored_dof, pinned_column, shallow_arch

NU = 0.3


def euler_load(width, height, E=1.0):
    return np.pi ** 2 * E / (1 - NU ** 2) * width ** 3 / 12 / height ** 2


@pytest.fixture(scope="module")
def column():
    model, rho = pinned_column(width=4, height=60)
    Pe = euler_load(4, 60)
    ell = suggest_arc_length(model, rho, 1.3 * Pe, 20)
    path = arc_length_trace(model, rho, ell, None, max_points=60, gamma_max=1.3 * Pe)
    return model, rho, Pe, path


def test_column_critical_load_and_residuals(column):
    model, rho, Pe, path = column
    assert path.reached_target
    assert path.constraint_residuals(model.free_dofs).max() <= 1e-8
    cr = path.criticals[0]
    assert abs(cr.gamma / Pe - 1) < 0.15
    assert cr.kind == "bifurcation"
    # primary path stays symmetric: the critical mode does no work on the load
    P = model.load[model.free_dofs]
    assert abs(cr.phi @ P) / np.linalg.norm(P) < 1e-6


def test_branch_switch_is_mirror_symmetric(column):
    model, rho, Pe, path = column
    cr = path.criticals[0]
    bp = branch_switch_simple(model, rho, cr, 100.0, +1)
    bm = branch_switch_simple(model, rho, cr, 100.0, -1)
    assert bp.residual < 1e-10 and bm.residual < 1e-10
    U = bp.u.reshape(model.ny + 1, model.nx + 1, 2)
    M = bm.u.reshape(model.ny + 1, model.nx + 1, 2)
    Um = U[:, ::-1].copy()
    Um[..., 0] *= -1
    assert np.abs(Um - M).max() <= 1e-7 * np.abs(U).max()
    # the secondary branch continues past the critical point
    branches = trace_post_buckling(model, rho, [bp], 0.5 * path.points[1].ell,
                                   max_points=8)
    assert len(branches[0]) > 2
    lateral = branches[0].points[-1].u[0::2]
    assert np.abs(lateral).max() > np.abs(cr.u[0::2]).max()


def test_shallow_arch_snaps_through():
    model = shallow_arch(40, 2, 4.0)
    rho = np.ones(model.n_elements)
    ell = suggest_arc_length(model, rho, 0.01, 10)
    path = arc_length_trace(model, rho, ell, None, max_points=150)
    dg = np.sign(np.diff(path.gammas))
    pattern = [dg[0]] + [d for a, d in zip(dg[:-1], dg[1:]) if d != a]
    assert pattern[:3] == [1, -1, 1]
    assert path.criticals and path.criticals[0].kind == "limit"
    g_peak = path.gammas[np.argmax(dg < 0)]
    assert abs(path.criticals[0].gamma - g_peak) <= 0.05 * g_peak


def test_predictor_examples():
    u = np.array([1.0, 0.0, 0.0])
    phi = np.array([0.0, 2.0, 0.0])
    assert np.allclose(branch_switch_predictor(u, phi, 100.0), [1.0, 0.01, 0.0])
    assert np.allclose(branch_switch_predictor(u, phi, 100.0, -1), [1.0, -0.01, 0.0])


@given(scale=st.floats(1e-6, 1e6), tau=st.floats(10, 1e4))
def test_predictor_scale_invariance(scale, tau):
    rng = np.random.default_rng(0)
    u, phi = rng.standard_normal(6), rng.standard_normal(6)
    a = branch_switch_predictor(u, phi, tau)
    b = branch_switch_predictor(scale * u, 3.0 * phi, tau)
    assert np.allclose(b, scale * a, rtol=1e-12, atol=0)
    d = np.linalg.norm(a - u)
    assert np.isclose(d, np.linalg.norm(u) / tau)


@given(seed=st.integers(0, 1000))
def test_disturbance_load_orthogonal(seed):
    P = np.random.default_rng(5).standard_normal(30)
    v = disturbance_load(P, seed)
    assert abs(v @ P) <= 1e-14 * np.linalg.norm(P)
    assert np.isclose(np.linalg.norm(v), 1.0)
    assert np.array_equal(v, disturbance_load(P, seed))


def test_same_crossings_tolerance():
    from stabtopo.continuation import BranchPoint
    o = np.zeros(3)
    a = [BranchPoint(np.array([1.0, 0, 0]), 1.0, o, 1.0),
         BranchPoint(np.array([0, 1.0, 0]), 2.0, o, 1.0)]
    b = [BranchPoint(np.array([0, 1.0 + 1e-9, 0]), 2.0, o, 1.0),
         BranchPoint(np.array([1.0, 0, 0]), 1.0, o, 1.0)]
    assert same_crossings(a, b)
    b[0].u[1] += 1e-3
    assert not same_crossings(a, b)
    assert not same_crossings(a, a[:1])


def test_equilibrium_system_linear_solve():
    model, rho = pinned_column(width=2, height=6)
    sysm = EquilibriumSystem(model, rho)
    u, g, _, _ = sysm.solve(np.zeros(sysm.free.size), 1e-4, free_gamma=False)
    assert g == 1e-4
    assert sysm.residual_norm(u, g) < 1e-12


def test_threshold_design_errors():
    model = build_grid_mesh(4, 2, 1.0, supports=[(0, 0), (0, 1), (1, 1)],
                            loads=[(14, 1, -1.0)])
    solid = np.ones(8)
    sub, keep = threshold_design(model, solid)
    assert sub.n_elements == 8 and np.array_equal(keep, np.arange(8))
    split = solid.copy()
    split[[1, 5]] = 0.0           # cut the grid into two parts
    with pytest.raises(MeshError, match="disconnected"):
        threshold_design(model, split)
    corner_only = np.zeros(8)
    corner_only[[3, 7]] = 1.0     # keeps the loaded node, loses the supports
    with pytest.raises(MeshError, match="support"):
        threshold_design(model, corner_only)
    no_load = np.zeros(8)
    no_load[[0, 4]] = 1.0
    with pytest.raises(MeshError, match="loaded"):
        threshold_design(model, no_load)
    with pytest.raises(MeshError):
        threshold_design(model, np.zeros(8))


def test_paths_csv_round_trip(column, tmp_path):
    model, rho, Pe, path = column
    f = tmp_path / "paths.csv"
    dof = monitored_dof(model)
    export_paths_csv(f, [path], dof)
    rows = read_paths_csv(f)
    pts = [r for r in rows if not r["step"].startswith("c")]
    assert len(pts) == len(path)
    for r, p in zip(pts, path.points):
        assert r["gamma"] == p.gamma
        assert r["displacement"] == p.u[dof]
        assert r["lambda_1"] == p.lam[0]
    crit = [r for r in rows if r["step"].startswith("c")]
    assert [r["critical"] for r in crit] == [c.kind for c in path.criticals]

import numpy as np
import pytest

from stabtopo.optimizer import (Analysis, DesignField, OptimizationConfig,
                                OptimizationTrace, continuation_schedule,
                                final_analysis, inner_subproblem, run_optimization)
from stabtopo.problems import double_clamped_beam
from stabtopo.model import build_grid_mesh, volume_fraction
from stabtopo.stability import EigenSolution


@pytest.mark.parametrize("it,expected", [
    (1, (1.0, 4.0, 1.0)), (5, (1.0, 4.0, 1.0)), (6, (1.1, 4.1, 1.1)),
    (101, (3.0, 6.0, 3.0)), (500, (3.0, 6.0, 6.0)),
])
def test_continuation_schedule(it, expected):
    assert np.allclose(continuation_schedule(it), expected)


def test_continuation_schedule_rejects_zero():
    with pytest.raises(ValueError):
        continuation_schedule(0)


@pytest.mark.parametrize("kwargs", [dict(V_f=0.0), dict(V_f=1.0), dict(lam_hat=-1.0),
                                    dict(theta=0.2), dict(theta=0.0), dict(m=0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        OptimizationConfig(**kwargs)


def test_zero_iterations_leave_design_unchanged(small_beam):
    d = DesignField.uniform(small_beam, 0.4, 1.5)
    out, trace = run_optimization(small_beam, d, OptimizationConfig(V_f=0.4, max_iter=0))
    assert np.array_equal(out.x, d.x) and len(trace) == 0


def _synthetic_analysis(model, design, pattern, rng, lam0=1.0):
    clusters, values, z = [], [], []
    i = 0
    for k, N in enumerate(pattern):
        clusters.append(list(range(i, i + N)))
        values += [lam0 * (k + 2)] * N
        z.append({(s, t): 1e-2 * rng.standard_normal(model.n_elements)
                  for s in range(N) for t in range(s, N)})
        i += N
    ne = model.n_elements
    eig = EigenSolution(np.array(values), np.zeros((1, i)), clusters, 1e-8)
    dv = np.full(ne, 1.0 / (ne * 0.4))
    an = Analysis(None, 1.0, -rng.uniform(0.5, 1.0, ne), -0.1, dv, eig, z)
    return an


def test_inner_subproblem_counts_and_bounds(rng):
    model = build_grid_mesh(8, 4, 1.0)
    design = DesignField.uniform(model, 0.3, 1.5)
    cfg = OptimizationConfig(V_f=0.4, lam_hat=1.0, theta=0.04)
    an = _synthetic_analysis(model, design, [1, 2, 3, 1, 2, 1], rng)
    res = inner_subproblem(design, an, cfg)
    assert res.n_equalities == 5
    assert res.n_stability_rows == 10
    assert res.feasible
    assert np.max(np.abs(res.dx)) <= res.theta + 1e-12
    d_rho = design.drho(res.dx)
    for zc, N in zip(an.z, [1, 2, 3, 1, 2, 1]):
        for s in range(N):
            for t in range(s + 1, N):
                z = zc[s, t]
                assert abs(z @ d_rho) <= 1e-6 * np.linalg.norm(z) * np.linalg.norm(d_rho)
    # the step improves the linearized objective
    assert design.chain(an.df0) @ res.dx < 0


def test_volume_only_zero_load():
    model = build_grid_mesh(6, 4, 1.0, supports=[(0, 0), (0, 1), (6, 1)])
    design = DesignField.uniform(model, 0.7, 1.5)
    cfg = OptimizationConfig(V_f=0.4, max_iter=25, continuation=False)
    out, trace = run_optimization(model, design, cfg)
    assert np.all(trace.column("f0") == 0.0)
    assert volume_fraction(out.rho, model) <= 0.4 * (1 + 1e-3)


def test_trace_invariants(small_beam):
    cfg = OptimizationConfig(V_f=0.4, lam_hat=1e-5, gamma=0.05, max_iter=12, m=2,
                             pm_range=(4.0, 6.0))
    seen = []
    out, trace = run_optimization(small_beam, DesignField.uniform(small_beam, 0.4, 1.5),
                                  cfg, callback=lambda r, d: seen.append(r.iteration))
    assert seen == list(range(1, 13))
    assert np.array_equal(trace.column("iteration"), np.arange(1, 13))
    p = trace.column("p")
    assert np.all(np.diff(p) >= 0) and p.max() <= 3.0
    assert np.all(out.x >= 0) and np.all(out.x <= 1)
    for r in trace.records:
        assert sum(r.multiplicities) == len(r.eigenvalues)
        assert len(r.multiplicities) == cfg.m
    head = trace.header(cfg.m).split(",")
    assert len(OptimizationTrace.row(trace.records[0], cfg.m).split(",")) == len(head)
    fin = final_analysis(small_beam, out, cfg)
    assert fin.p == continuation_schedule(12)[0]

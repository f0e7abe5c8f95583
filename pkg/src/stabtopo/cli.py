"""Command-line entry point: optimize, analyze, verify-sens, post-buckle."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .continuation import (PathError, arc_length_trace, bcc_traverse,
                           branch_switch_simple, export_paths_csv,
                           suggest_arc_length, threshold_design,
                           trace_post_buckling)
from .fem import AnalysisFailure, solve_equilibrium
from .io import (ConfigError, RunConfig, load_config, read_density_csv,
                 write_density_csv, write_modes, write_pgm, write_summary)
from .model import MeshError, Model
from .optimizer import (DesignField, OptimizationConfig, OptimizationTrace,
                        final_analysis, run_optimization)
from .problems import (compressive_block, double_clamped_beam, monitored_dof,
                       pinned_column, shallow_arch)
from .stability import (EigenSolverError, PseudoMassParams, eigen_lowest,
                        free_to_full, nodal_pseudo_mass, pseudo_mass_diagonal)

log = logging.getLogger("stabtopo")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ANALYSIS = 3
EXIT_ACCEPTANCE = 4


# --------------------------------------------------------------------------
# problem construction

_MATERIAL_KEYS = ("E", "nu", "eps", "beta", "c0", "dc")


def build_problem(cfg: RunConfig, nx: int | None = None,
                  ny: int | None = None) -> tuple[Model, np.ndarray | None]:
    """Model described by ``[problem]`` and an optional preset density."""
    pr = cfg.problem
    params = {k: pr[k] for k in _MATERIAL_KEYS}
    nx = pr["nx"] if nx is None else nx
    ny = pr["ny"] if ny is None else ny
    h, load, kind = pr["elem_size"], pr["load"], pr["type"]
    try:
        if kind == "double_clamped_beam":
            return double_clamped_beam(nx, ny, h, load, **params), None
        if kind == "pinned_column":
            return pinned_column(pr["width"], pr["height"], pr["margin"], h,
                                 load, **params)
        if kind == "compressive_block":
            return compressive_block(nx, h, load, **params), None
        if kind == "shallow_arch":
            return shallow_arch(nx, ny, pr["rise"], h, load, **params), None
        if kind == "grid":
            from .model import build_grid_mesh
            return build_grid_mesh(nx, ny, h, [tuple(s) for s in pr["supports"]],
                                   [tuple(s) for s in pr["loads"]], **params), None
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{cfg.source}: invalid [problem]: {exc}") from exc
    raise ConfigError(f"{cfg.source}: unknown problem type '{kind}'")


def _grid_shape(model: Model) -> tuple[int, int]:
    if not model.nx:
        raise ConfigError("density grids need a structured-grid problem")
    return model.nx, model.ny


def _load_density(path, model: Model) -> np.ndarray:
    rho, nx, ny, h = read_density_csv(path)
    gx, gy = _grid_shape(model)
    if (nx, ny) != (gx, gy) or abs(h - model.elem_size) > 1e-12 * h:
        raise ConfigError(f"density grid {nx}x{ny} (h={h}) does not match the "
                          f"mesh {gx}x{gy} (h={model.elem_size})")
    return rho


def _out_dir(args, cfg: RunConfig) -> Path:
    p = Path(args.out_dir or cfg.output["directory"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def optimization_config(cfg: RunConfig) -> OptimizationConfig:
    o = cfg.optimizer
    try:
        return OptimizationConfig(
            V_f=o["V_f"], lam_hat=o["lam_hat"], m=o["m"], gamma=cfg.problem["gamma"],
            r_min=cfg.filter["r_min"], symmetry=o["symmetry"], theta=o["theta"],
            move=o["move"], max_iter=o["max_iter"],
            inner_max_iter=o["inner_max_iter"], inner_obj_tol=o["inner_obj_tol"],
            inner_dx_tol=o["inner_dx_tol"], tol_mult=o["tol_mult"],
            continuation=o["continuation"], pm_range=(o["pm_start"], 6.0))
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: [optimizer]: {exc}") from exc


# --------------------------------------------------------------------------
# commands

def cmd_optimize(args, cfg: RunConfig) -> int:
    model, _ = build_problem(cfg)
    ocfg = optimization_config(cfg)
    out = _out_dir(args, cfg)
    nx, ny = _grid_shape(model)
    design = DesignField.uniform(model, ocfg.V_f, ocfg.r_min, ocfg.symmetry)
    if args.density:
        rho0 = _load_density(args.density, model)
        design = design.with_x(design.symmetry.restrict(rho0))
    every = cfg.output["snapshot_every"]
    trace_path = out / "trace.csv"
    fh = open(trace_path, "w")
    fh.write(OptimizationTrace().header(ocfg.m) + "\n")

    def callback(rec, d):
        fh.write(OptimizationTrace.row(rec, ocfg.m) + "\n")
        fh.flush()
        if every and rec.iteration % every == 0:
            write_density_csv(out / f"density_{rec.iteration:04d}.csv", d.rho,
                              nx, ny, model.elem_size)
        log.info("iter %d  f0=%.6g  f1=%.3g  inner=%s", rec.iteration, rec.f0,
                 rec.f1, rec.inner)

    t0 = time.time()
    try:
        design, trace = run_optimization(model, design, ocfg, callback)
        final = final_analysis(model, design, ocfg)
    except (AnalysisFailure, EigenSolverError) as exc:
        log.error("analysis failed: %s", exc)
        write_summary(out / "summary.json", {"status": "analysis_failure",
                                             "message": str(exc)})
        return EXIT_ANALYSIS
    finally:
        fh.close()
    rho = design.rho
    write_density_csv(out / "density.csv", rho, nx, ny, model.elem_size)
    if cfg.output["pgm"]:
        write_pgm(out / "density.pgm", rho, nx, ny)
    V = 1.0 + final.f1
    ok_vol = final.f1 <= 1e-3
    ok_lam = True if ocfg.lam_hat is None else \
        final.eigenvalues[0] >= ocfg.lam_hat * (1 - 1e-3)
    summary = {
        "status": "ok", "iterations": len(trace), "runtime_s": time.time() - t0,
        "f0": final.f0, "f1": final.f1, "volume_ratio": V,
        "eigenvalues": final.eigenvalues, "multiplicities": final.multiplicities,
        "lam_hat": ocfg.lam_hat, "volume_satisfied": bool(ok_vol),
        "stability_satisfied": bool(ok_lam), "c": final.c,
        "inner_activations": int(sum(r.inner for r in trace.records)),
    }
    write_summary(out / "summary.json", summary)
    print(f"f0={final.f0:.6g} V/V_f={V:.6f} lambda_1={final.eigenvalues[0]:.6g}")
    return EXIT_OK if ok_vol and ok_lam else EXIT_ACCEPTANCE


def cmd_analyze(args, cfg: RunConfig) -> int:
    model, preset = build_problem(cfg)
    if args.density:
        rho = _load_density(args.density, model)
    elif preset is not None:
        rho = preset
    else:
        raise ConfigError("analyze needs --density for this problem type")
    out = _out_dir(args, cfg)
    an = cfg.analysis
    params = PseudoMassParams() if an["pseudo_mass"] else None
    gamma = cfg.problem["gamma"]
    try:
        state = solve_equilibrium(model, rho, gamma)
        s = (np.ones(model.free_dofs.size) if params is None
             else pseudo_mass_diagonal(model, rho, params))
        eig = eigen_lowest(state.K, s, an["m"])
    except (AnalysisFailure, EigenSolverError) as exc:
        log.error("analysis failed: %s", exc)
        return EXIT_ANALYSIS
    degenerate = bool(params is not None and
                      nodal_pseudo_mass(model, rho, params).max() < 1e-6)
    write_modes(out / "modes.csv", model, free_to_full(model, eig.vectors),
                eig.values)
    summary = {
        "gamma": gamma, "eigenvalues": eig.values, "multiplicities": eig.multiplicities,
        "stable": bool(eig.values[0] > 0), "degenerate": degenerate,
        "c": state.c, "c_updates": state.n_c_updates,
        "compliance": float(gamma * model.load @ state.u),
    }
    write_summary(out / "analysis.json", summary)
    verdict = "stable" if summary["stable"] else "unstable"
    print(f"lambda = {' '.join(f'{v:.8g}' for v in eig.values)}  ({verdict}"
          f"{', degenerate' if degenerate else ''})")
    return EXIT_OK


def cmd_verify_sens(args, cfg: RunConfig, gradient_hook=None) -> int:
    from .sensitivity import verify_sensitivities_cdm
    v = cfg.verify
    model, _ = build_problem(cfg, v["nx"], v["ny"])
    seed = v["seed"] if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    rho = rng.uniform(v["density_low"], v["density_high"], model.n_elements)
    workers = args.workers or cfg.output["workers"]
    out = _out_dir(args, cfg)
    try:
        rep = verify_sensitivities_cdm(model, rho, v["gamma"], h=v["h"], m=v["m"],
                                       elements=v["elements"],
                                       gradient_hook=gradient_hook,
                                       workers=workers)
    except (AnalysisFailure, EigenSolverError) as exc:
        log.error("analysis failed: %s", exc)
        return EXIT_ANALYSIS
    (out / "sensitivity_check.csv").write_text(rep.table())
    worst = [rep.max_rel_err(j) for j in range(len(rep.labels))]
    j = int(np.nanargmax(worst))
    print(f"max relative error {worst[j]:.3e} ({rep.labels[j]}); "
          f"{len(rep.excluded)} elements excluded")
    if not worst[j] <= v["tolerance"]:
        print(f"FAIL: sensitivity of {rep.labels[j]} exceeds tolerance "
              f"{v['tolerance']:.1e}")
        return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_post_buckle(args, cfg: RunConfig) -> int:
    model, preset = build_problem(cfg)
    if args.density:
        rho = _load_density(args.density, model)
    elif preset is not None:
        rho = preset
    else:
        raise ConfigError("post-buckle needs --density for this problem type")
    an = cfg.analysis
    level = an["threshold"] if args.threshold is None else args.threshold
    try:
        sub, _ = threshold_design(model, rho, level)
    except MeshError as exc:
        log.error("cannot build the solid model: %s", exc)
        return EXIT_CONFIG
    out = _out_dir(args, cfg)
    solid = np.ones(sub.n_elements)
    gmax = an["gamma_max"] or cfg.problem["gamma"]
    seed = an["seed"] if args.seed is None else args.seed
    try:
        ell = an["ell"] or suggest_arc_length(sub, solid, gmax, an["n_steps"])
        primary = arc_length_trace(sub, solid, ell, None, an["max_points"],
                                   gamma_max=gmax)
    except (PathError, RuntimeError) as exc:
        log.error("primary path failed: %s", exc)
        return EXIT_ANALYSIS
    paths = [primary]
    crit_info = []
    for cp in primary.criticals:
        crit_info.append({"gamma": cp.gamma, "kind": cp.kind})
        if cp.kind != "bifurcation":
            continue
        try:
            if an["r_factor"] > 0:
                crossings = bcc_traverse(sub, solid, cp,
                                         r=an["r_factor"] * np.linalg.norm(cp.u),
                                         seed=seed)
                free = sub.free_dofs
                t = cp.tangent
                branch = []
                for bp in crossings:
                    d = bp.u[free] - cp.u[free]
                    if np.linalg.norm(d - (t @ d) * t) > 0.1 * np.linalg.norm(d):
                        branch.append(bp)
            else:
                branch = [branch_switch_simple(sub, solid, cp, an["tau"], +1)]
        except PathError as exc:
            log.warning("branch switching failed: %s", exc)
            continue
        paths += trace_post_buckling(sub, solid, branch, ell, an["branch_points"],
                                     gamma_max=gmax, first_id=len(paths))
    export_paths_csv(out / "paths.csv", paths, monitored_dof(sub))
    below = [c for c in crit_info if c["gamma"] < gmax]
    write_summary(out / "post_buckle.json", {
        "threshold": level, "gamma_target": gmax,
        "reached_target": primary.reached_target, "criticals": crit_info,
        "criticals_below_target": len(below), "branches": len(paths) - 1,
    })
    print(f"primary: {len(primary)} points, reached target: {primary.reached_target}; "
          f"{len(below)} critical point(s) below target")
    return EXIT_OK


COMMANDS = {"optimize": cmd_optimize, "analyze": cmd_analyze,
            "verify-sens": cmd_verify_sens, "post-buckle": cmd_post_buckle}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stabtopo", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--density", help="density grid CSV")
        p.add_argument("--out-dir", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="random seed (overrides config)")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--threshold", type=float,
                       help="solid threshold for post-buckling analysis")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.command)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

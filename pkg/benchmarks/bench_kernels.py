"""Compare the compiled and pure-Python element kernels.

Usage::

    python benchmarks/bench_kernels.py [--sizes 300 1200 4800] [--repeat 5]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from stabtopo import kernels
from stabtopo.material import interpolate
from stabtopo.problems import double_clamped_beam


def _inputs(n_el: int, seed: int = 0):
    nx = int(np.sqrt(3 * n_el))
    nx += nx % 2
    ny = max(1, n_el // nx)
    model = double_clamped_beam(nx, ny)
    rng = np.random.default_rng(seed)
    rho = rng.uniform(0.05, 1.0, model.n_elements)
    props = interpolate(rho, model)
    u = 0.01 * rng.standard_normal(model.n_dofs)
    dNdX, wdet = model.geometry
    ue = u[model.element_dofs]
    return (dNdX, wdet, ue, props.eta, props.E_nl, props.E_lin, model.nu)


def _time(fn, args, repeat):
    fn(*args)
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[300, 1200, 4800])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"active backend: {kernels.BACKEND}")
    if kernels.element_force_tangent_c is None:
        print("compiled kernel not built; only the Python fallback is available")
    print(f"{'elements':>9} {'python [ms]':>12} {'compiled [ms]':>14} {'speed-up':>9} {'max diff':>10}")
    for n in args.sizes:
        inp = _inputs(n)
        t_py = _time(kernels.element_force_tangent_py, inp, args.repeat)
        if kernels.element_force_tangent_c is None:
            print(f"{inp[2].shape[0]:>9} {1e3 * t_py:>12.2f} {'-':>14} {'-':>9} {'-':>10}")
            continue
        t_c = _time(kernels.element_force_tangent_c, inp, args.repeat)
        f1, k1 = kernels.element_force_tangent_py(*inp)
        f2, k2 = kernels.element_force_tangent_c(*inp)
        diff = max(np.abs(f1 - f2).max() / np.abs(f1).max(),
                   np.abs(k1 - k2).max() / np.abs(k1).max())
        print(f"{inp[2].shape[0]:>9} {1e3 * t_py:>12.2f} {1e3 * t_c:>14.2f} "
              f"{t_py / t_c:>9.1f} {diff:>10.1e}")


if __name__ == "__main__":
    main()

"""Compare the compiled and pure-Python integration kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--steps 200000]
"""

import argparse
import timeit

import numpy as np

from dirtyderiv import kernels
from dirtyderiv.baselines import hgo_gains
from dirtyderiv.closed_loop import build_aug_thm1
from dirtyderiv.plant import ControllerFormPlant, pole_placement_gain
from dirtyderiv.sim_core import rk4_affine_maps


def cases(steps):
    plant = ControllerFormPlant([-1.0, 3.0, 3.0, 0.0, 1.0], -4.0)
    k = pole_placement_gain(plant)
    m = build_aug_thm1(plant, k, 75.0).a_aug
    phi, g0, g1 = (np.ascontiguousarray(a) for a in rk4_affine_maps(m, np.zeros((10, 1)), 1e-4))
    u = np.zeros((steps + 1, 1))
    z0 = np.r_[-1.0, 5.0, -1.0, -3.0, 3.0, np.zeros(5)]
    _, h = hgo_gains(-np.arange(1.0, 6.0), 0.2)
    y = np.sin(np.arange(steps + 1) * 1e-5)
    return {
        "affine_recursion (10 states)":
            lambda b: b.affine_recursion(phi, g0, g1, z0, u, 10, np.inf),
        "rk4_oscillator":
            lambda b: b.rk4_oscillator(0.1 * np.ones(5), 1e-5, steps, 10, np.inf),
        "rk4_hgo_oscillator":
            lambda b: b.rk4_hgo_oscillator(h, np.zeros(5), y, 1e-5, 10, np.inf),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--steps", type=int, default=200_000)
    args = parser.parse_args(argv)
    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
    else:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':32s} {'backend':8s} {'best [ms]':>10s} {'speedup':>8s}")
    for name, fn in cases(args.steps).items():
        ref = None
        for bname, backend in backends.items():
            best = min(timeit.repeat(lambda: fn(backend), number=1, repeat=args.repeat))
            ref = best if bname == "python" else ref
            print(f"{name:32s} {bname:8s} {1e3 * best:10.2f} {ref / best:8.1f}x")


if __name__ == "__main__":
    main()

"""Compare the compiled and numpy kernel backends on icospheres and tori.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--levels 3 4 5]
Prints one line per (mesh, kernel, backend) with the best wall time and the
speedup of the compiled backend.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from willmore_lab import kernels, shapes


def _cases(levels):
    for L in levels:
        yield f"icosphere(L={L})", shapes.icosphere(L)
    for n in (64, 128, 256):
        yield f"torus({n}x{n})", shapes.torus(np.sqrt(2.0), 1.0, n, n)


def _calls(impl, x, F):
    cot, dbl = impl.corner_cotangents(x, F)
    n = len(x)
    return {
        "corner_cotangents": lambda: impl.corner_cotangents(x, F),
        "mixed_vertex_areas": lambda: impl.mixed_vertex_areas(x, F, cot, dbl, n),
        "cotan_laplacian_apply": lambda: impl.cotan_laplacian_apply(x, F, cot),
        "willmore_energy_grad": lambda: impl.willmore_energy_grad(x, F),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--levels", type=int, nargs="+", default=[3, 4, 5])
    args = ap.parse_args(argv)
    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled backend not built; timing the numpy fallback only")
    print(f"{'mesh':<18} {'kernel':<24} {'backend':<8} {'best [ms]':>10} {'speedup':>8}")
    for name, imm in _cases(args.levels):
        x, F = imm.vertices, imm.faces
        calls = {b: _calls(impl, x, F) for b, impl in impls.items()}
        for kernel in calls["numpy"]:
            times = {b: min(timeit.repeat(calls[b][kernel], number=1, repeat=args.repeat)) for b in calls}
            for b, t in times.items():
                sp = times["numpy"] / t if b != "numpy" else 1.0
                print(f"{name:<18} {kernel:<24} {b:<8} {1e3 * t:>10.3f} {sp:>7.2f}x")


if __name__ == "__main__":
    main()

"""Time the hot kernels on the compiled and pure-Python backends.

    python benchmarks/bench_kernels.py --dims 128x128 --half-length 40
"""
import argparse
import time

import numpy as np

from flowembed import _backend, field as fld, kernel as krn, matrix as mtx


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def run(backend, dims, L, shape, repeat, threads):
    dom = fld.default_domain("center", dims)
    f = fld.make_analytic("center", None, dom)
    cfg = mtx.AssemblyConfig(kernel=krn.make_kernel(shape, L), threads=threads)
    res = {}
    res["assemble"], P = best_of(lambda: mtx.assemble_probability_matrix(f, dom, cfg, backend), repeat)
    P = mtx.normalize_cols(mtx.normalize_rows(P))
    res["mixture (SpGEMM)"], H = best_of(lambda: mtx.mixture_matrix(P, threads, backend), repeat)
    x = np.random.default_rng(0).random(dom.ncells)
    res["spmv x100 on H"], _ = best_of(
        lambda: [mtx.spmv(H, x, threads, backend) for _ in range(100)], repeat)
    res["transpose"], _ = best_of(lambda: P.transpose(backend), repeat)
    return res, P.nnz, H.nnz


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", default="64x64")
    ap.add_argument("--half-length", type=int, default=20)
    ap.add_argument("--kernel", default="gaussian")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    dims = tuple(int(d) for d in args.dims.split("x"))
    names = _backend.available()
    results = {}
    for name in names:
        results[name], pnnz, hnnz = run(name, dims, args.half_length, args.kernel, args.repeat,
                                        args.threads)
    print(f"center flow {args.dims}, {args.kernel} L={args.half_length}: "
          f"P.nnz={pnnz}, H.nnz={hnnz}, best of {args.repeat}")
    print(f"{'kernel':<18}" + "".join(f"{n:>12}" for n in names)
          + ("     speedup" if len(names) == 2 else ""))
    for key in results[names[0]]:
        row = f"{key:<18}" + "".join(f"{results[n][key]:>11.4f}s" for n in names)
        if len(names) == 2:
            row += f"{results['python'][key] / results['compiled'][key]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()

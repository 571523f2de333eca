"""Benchmark the compiled kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from groupdance._kernels import numpy_backend

try:
    from groupdance._kernels import _ckern as compiled
except ImportError:
    compiled = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_attention(backend, repeats, b=8, h=4, lq=64, lk=64, d=16):
    rng = np.random.default_rng(0)
    q = rng.normal(size=(b, h, lq, d))
    k = rng.normal(size=(b, h, lk, d))
    v = rng.normal(size=(b, h, lk, d))
    mask = np.triu(np.full((lq, lk), -1e9), k=1)
    scale = 1.0 / np.sqrt(d)
    out, w = backend.attn_forward(q, k, v, mask, scale)
    g = rng.normal(size=out.shape)
    fwd = timeit(lambda: backend.attn_forward(q, k, v, mask, scale), repeats)
    bwd = timeit(lambda: backend.attn_backward(g, q, k, v, w, scale), repeats)
    return fwd, bwd


def bench_fk(backend, repeats, frames=600, joints=24):
    rng = np.random.default_rng(0)
    r6 = rng.normal(size=(frames, joints, 6))
    rot = numpy_backend.sixd_to_matrix_batch(r6)
    tau = rng.normal(size=(frames, 3))
    parents = np.array([-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13,
                        14, 16, 17, 18, 19, 20, 21], dtype=np.int32)
    offsets = rng.normal(size=(joints, 3))
    fk = timeit(lambda: backend.fk_positions(np.ascontiguousarray(rot), tau, parents, offsets), repeats)
    sixd = timeit(lambda: backend.sixd_to_matrix_batch(r6), repeats)
    return fk, sixd


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    backends = [("numpy", numpy_backend)]
    if compiled is not None:
        backends.append(("compiled", compiled))
    else:
        print("compiled extension not available; benchmarking numpy only")

    results = {}
    for name, backend in backends:
        fwd, bwd = bench_attention(backend, args.repeats)
        fk, sixd = bench_fk(backend, args.repeats)
        results[name] = {"attn_fwd": fwd, "attn_bwd": bwd, "fk": fk, "sixd": sixd}

    header = f"{'kernel':<10}" + "".join(f"{name + ' (ms)':>16}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for key in ("attn_fwd", "attn_bwd", "fk", "sixd"):
        row = f"{key:<10}"
        for name, _ in backends:
            row += f"{results[name][key] * 1e3:>16.3f}"
        if len(backends) == 2:
            row += f"{results['numpy'][key] / results['compiled'][key]:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Both implementations stay importable regardless of the UZ_NO_NUMBA flag, so
this script times them side by side and checks they agree.

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from uzoom import _kernels as K


def timeit(fn, repeats):
    fn()  # warm up (numba compiles here)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_resample(repeats):
    rng = np.random.default_rng(0)
    rows = []
    for h, w, out_h, out_w in (
        (512, 512, 4096, 4096),
        (2048, 2048, 256, 256),
        (1024, 1024, 1024, 1024),
    ):
        img = rng.random((h, w, 3), dtype=np.float32)
        idx_y, wts_y, _ = K.axis_taps(h, out_h, h / out_h)
        idx_x, wts_x, _ = K.axis_taps(w, out_w, w / out_w)

        def run(gr, gc):
            mid = gr(img, idx_y, wts_y)
            return gc(np.ascontiguousarray(mid), idx_x, wts_x)

        t_np = timeit(lambda: run(K.gather_rows_numpy, K.gather_cols_numpy), repeats)
        row = {
            "case": f"bicubic {h}x{w} -> {out_h}x{out_w}",
            "numpy_s": t_np,
        }
        if K.NUMBA_AVAILABLE:
            t_nb = timeit(
                lambda: run(K.gather_rows_numba, K.gather_cols_numba), repeats
            )
            a = run(K.gather_rows_numpy, K.gather_cols_numpy)
            b = run(K.gather_rows_numba, K.gather_cols_numba)
            assert np.abs(a - b).max() < 1e-5, "kernel paths disagree"
            row["numba_s"] = t_nb
            row["speedup"] = t_np / t_nb
        rows.append(row)
    return rows


def bench_zncc(repeats):
    rng = np.random.default_rng(1)
    rows = []
    for n_pts, patch_r, search_r in ((100, 9, 14), (400, 15, 31)):
        prev = rng.random((480, 640), dtype=np.float32)
        nxt = np.roll(prev, (2, 3), axis=(0, 1)).astype(np.float32)
        pts = rng.uniform(80, 400, (n_pts, 2))
        active = np.ones(n_pts, dtype=np.bool_)

        t_np = timeit(
            lambda: K.zncc_search_numpy(prev, nxt, pts, active, patch_r, search_r, 0.5),
            repeats,
        )
        row = {
            "case": f"zncc {n_pts} pts, patch {2*patch_r+1}, search {2*search_r+1}",
            "numpy_s": t_np,
        }
        if K.NUMBA_AVAILABLE:
            t_nb = timeit(
                lambda: K.zncc_search_numba(
                    prev, nxt, pts, active, patch_r, search_r, 0.5
                ),
                repeats,
            )
            a = K.zncc_search_numpy(prev, nxt, pts, active, patch_r, search_r, 0.5)
            b = K.zncc_search_numba(prev, nxt, pts, active, patch_r, search_r, 0.5)
            assert (a[1] == b[1]).all() and np.abs(a[0] - b[0]).max() < 1e-5
            row["numba_s"] = t_nb
            row["speedup"] = t_np / t_nb
        rows.append(row)
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if not K.NUMBA_AVAILABLE:
        print("numba path disabled (UZ_NO_NUMBA / NUMBA_DISABLE_JIT); timing numpy only")
    rows = bench_resample(args.repeats) + bench_zncc(args.repeats)
    width = max(len(r["case"]) for r in rows)
    print(f"{'case':<{width}}  {'numpy':>9}  {'numba':>9}  {'speedup':>7}")
    for r in rows:
        numba_s = f"{r['numba_s']*1e3:8.1f}ms" if "numba_s" in r else "      --"
        speedup = f"{r['speedup']:6.1f}x" if "speedup" in r else "     --"
        print(f"{r['case']:<{width}}  {r['numpy_s']*1e3:8.1f}ms  {numba_s}  {speedup}")


if __name__ == "__main__":
    main()

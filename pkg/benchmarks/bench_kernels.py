"""Benchmark the compiled kernels against the pure-NumPy fallback.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from damdnet.backend import available_backends


def time_call(fn, *args, repeats=5, warmup=1):
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_conv(mods, rows):
    rng = np.random.default_rng(0)
    cases = [
        ("conv 1x1 16x60x60 -> 32", (4, 16, 60, 60), (32, 16, 1, 1), 1, 0),
        ("conv 3x3 3x120x120 -> 32 s2", (4, 3, 120, 120), (32, 3, 3, 3), 2, 1),
        ("conv 1x1 96x15x15 -> 192", (4, 96, 15, 15), (192, 96, 1, 1), 1, 0),
        ("conv 3x3 8x9x9 -> 8", (2, 8, 9, 9), (8, 8, 3, 3), 1, 1),
    ]
    for name, xshape, wshape, stride, pad in cases:
        x = rng.standard_normal(xshape).astype(np.float32)
        w = rng.standard_normal(wshape).astype(np.float32)
        fwd = {k: time_call(m.conv2d_forward, x, w, stride, pad) for k, m in mods.items()}
        y = mods["numpy"].conv2d_forward(x, w, stride, pad)
        gy = np.ascontiguousarray(np.ones_like(y))
        bwd = {k: time_call(m.conv2d_backward, x, w, gy, stride, pad) for k, m in mods.items()}
        rows.append((name + " fwd", fwd))
        rows.append((name + " bwd", bwd))


def bench_depthwise(mods, rows):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 64, 30, 30)).astype(np.float32)
    w = rng.standard_normal((64, 1, 3, 3)).astype(np.float32)
    fwd = {k: time_call(m.depthwise_forward, x, w, 1, 1) for k, m in mods.items()}
    y = mods["numpy"].depthwise_forward(x, w, 1, 1)
    gy = np.ascontiguousarray(np.ones_like(y))
    bwd = {k: time_call(m.depthwise_backward, x, w, gy, 1, 1) for k, m in mods.items()}
    rows.append(("depthwise 3x3 64x30x30 fwd", fwd))
    rows.append(("depthwise 3x3 64x30x30 bwd", bwd))


def bench_raster(mods, rows):
    rng = np.random.default_rng(2)
    n_vert, n_tri = 500, 950
    xy = rng.uniform(0, 120, (n_vert, 2))
    z = rng.uniform(0, 10, n_vert)
    vcol = rng.uniform(0, 1, (n_vert, 3))
    tris = rng.integers(0, n_vert, (n_tri, 3)).astype(np.int32)
    ids = np.arange(n_tri, dtype=np.int64)
    shade = rng.uniform(0.3, 1.0, n_tri)

    def run(mod):
        color = np.zeros((120, 120, 3))
        depth = np.full((120, 120), -np.inf)
        idx = np.full((120, 120), np.iinfo(np.int64).max, dtype=np.int64)
        mod.fill_triangles(xy, z, vcol, tris, ids, shade, color, depth, idx)

    rows.append((
        f"raster {n_tri} tris @120x120",
        {k: time_call(run, m) for k, m in mods.items()},
    ))


def main():
    mods = available_backends()
    if "native" not in mods:
        print("compiled extension not available; run `python3 setup.py build_ext --inplace`")
    rows = []
    bench_conv(mods, rows)
    bench_depthwise(mods, rows)
    bench_raster(mods, rows)

    names = list(mods)
    header = f"{'case':<34}" + "".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for case, times in rows:
        line = f"{case:<34}" + "".join(f"{times[n] * 1e3:>10.2f}ms" for n in names)
        if len(names) == 2:
            line += f"{times['numpy'] / times['native']:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()

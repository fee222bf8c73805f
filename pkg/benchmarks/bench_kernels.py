"""Time the compiled and pure-Python kernel backends side by side.

    python3 benchmarks/bench_kernels.py [--repeat N]

Also checks that both backends return identical results on the timed inputs.
"""
import argparse
import timeit

import numpy as np

from dcorbench.kernels import backend_module


def _inputs():
    rng = np.random.default_rng(0)
    ref = rng.integers(0, 256, (240, 320), dtype=np.uint8)
    cur = np.roll(ref, (2, -3), axis=(0, 1))
    ii, jj = np.meshgrid(np.arange(240.0), np.arange(320.0), indexing="ij")
    src = np.stack([ii * 0.93 + 5.3, jj * 0.91 + 7.7], axis=-1)
    src[:8] = np.nan
    levels = rng.laplace(0, 1.5, (1200, 64)).round().astype(int)
    return ref, cur, src, levels


def _cases(mod, ref, cur, src, levels):
    def bits():
        bw = mod.BitWriter()
        for row in levels:
            bw.put_block(row)
        return bw.getvalue()

    return {
        "sad_search 240x320 r=8": lambda: mod.sad_search(cur, ref, 8, 8),
        "remap_plane bilinear 240x320": lambda: mod.remap_plane(ref, src, False, 0),
        "remap_plane nearest 240x320": lambda: mod.remap_plane(ref, src, True, 0),
        "BitWriter 1200 blocks": bits,
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    data = _inputs()
    py = _cases(backend_module("python"), *data)
    try:
        cy = _cases(backend_module("cython"), *data)
    except ImportError:
        cy = None
        print("compiled backend not built; timing the fallback only")

    print(f"{'kernel':32s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}  identical")
    for name, fn in py.items():
        t_py = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
        if cy is None:
            print(f"{name:32s} {t_py:10.2f}")
            continue
        t_cy = min(timeit.repeat(cy[name], number=1, repeat=args.repeat)) * 1e3
        print(f"{name:32s} {t_py:10.2f} {t_cy:10.2f} {t_py / t_cy:7.1f}x  {_same(fn(), cy[name]())}")


if __name__ == "__main__":
    main()

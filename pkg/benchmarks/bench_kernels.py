"""Compiled vs numpy Philox kernels.

    python3 benchmarks/bench_kernels.py [--n 1000000] [--repeat 5]

Prints best-of-repeat wall time per kernel and checks that both backends
return identical words.
"""
import argparse
import time

import numpy as np
from scipy.special import ndtri

from kspl import _philox_py

try:
    from kspl import _philox
except ImportError:
    _philox = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    key, stream, n = 0x1234ABCD, 7, args.n
    backends = {"python": _philox_py}
    if _philox is not None:
        backends["cython"] = _philox
        assert np.array_equal(_philox.words(key, stream, 3, 1000),
                              _philox_py.words(key, stream, 3, 1000))
    else:
        print("compiled extension not built; timing the fallback only")
    rows = []
    for name, mod in backends.items():
        rows.append((name, "words", best_of(lambda: mod.words(key, stream, 0, n), args.repeat)))
        rows.append((name, "uniforms", best_of(lambda: mod.uniforms(key, stream, 0, n), args.repeat)))
        rows.append((name, "normals", best_of(lambda: ndtri(mod.uniforms(key, stream, 0, n)),
                                              args.repeat)))
    print(f"n = {n}, best of {args.repeat}")
    print(f"{'backend':<8} {'kernel':<9} {'ms':>9} {'Mvals/s':>9}")
    for name, kernel, t in rows:
        print(f"{name:<8} {kernel:<9} {t * 1e3:9.2f} {n / t / 1e6:9.1f}")
    if _philox is not None:
        base = {k: t for b, k, t in rows if b == "python"}
        for b, k, t in rows:
            if b == "cython":
                print(f"speedup {k}: {base[k] / t:.1f}x")


if __name__ == "__main__":
    main()

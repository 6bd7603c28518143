"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--N 100000] [--K 64] [--repeat 5]

Both backends get the same raw words, so the draws are also checked for
equality.
"""
import argparse
import timeit

import numpy as np

from mvflow import _core, rng
from mvflow._core import _kernels_py


def backends():
    out = {"python": _kernels_py}
    try:
        from mvflow._core import _kernels
    except ImportError:
        return out
    out["compiled"] = _kernels
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=100_000)
    ap.add_argument("--K", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    g = np.random.default_rng(0)
    P = g.random((args.K, args.K))
    P /= P.sum(axis=1, keepdims=True)
    cdf_rows = _core.build_cdf(P)
    cdf = cdf_rows[0].copy()
    rows = g.integers(0, args.K, args.N)
    raw = rng.raw_words(rng.stream_key(1, 0, 1, rng.PROPAGATE), 0, args.N)
    D = g.random((min(args.K, 48), min(args.K, 48)))
    D /= D.sum(axis=1, keepdims=True)

    cases = {
        "sample_shared": lambda m: m.sample_shared(cdf, raw),
        "sample_rows": lambda m: m.sample_rows(cdf_rows, rows, raw),
        "dobrushin": lambda m: m.dobrushin(D),
    }
    impls = backends()
    print(f"N={args.N} K={args.K} repeat={args.repeat} active backend: {_core.BACKEND}")
    print(f"{'kernel':<14}" + "".join(f"{name:>14}" for name in impls) + f"{'speedup':>10}")
    for label, fn in cases.items():
        times = {}
        results = {}
        for name, mod in impls.items():
            results[name] = fn(mod)
            times[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        if len(results) > 1:
            a, b = results.values()
            assert np.array_equal(np.asarray(a), np.asarray(b)) or np.allclose(a, b, rtol=0, atol=1e-14)
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{label:<14}" + "".join(f"{times[n] * 1e3:>12.2f}ms" for n in impls) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()

"""Time each hot kernel under its numba build and its numpy twin.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both variants are imported directly, so the PRODRAND_DISABLE_NUMBA flag is
irrelevant here. The first numba call (compilation) is excluded.
"""

import argparse
import time

import numpy as np

from prodrand import kernels
from prodrand._jit import HAVE_NUMBA
from prodrand.ensembles import EnsembleSpec, draw_batch, haar_vectors


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases():
    rng = np.random.default_rng(0)
    small = draw_batch(EnsembleSpec.rotated(4, 1.0, 2.0), 20000, rng).mats
    mid = draw_batch(EnsembleSpec.gaussian(32), 2000, rng).mats
    w4 = np.eye(4)[0]
    w32 = np.eye(32)[0]
    cands = haar_vectors(4, 20000, rng)
    pts = haar_vectors(3, 20000, rng)
    net = haar_vectors(3, 2000, rng)
    return [
        ("track_vector N=4 n=20000", lambda k: k.track_vector(small, w4)),
        ("track_vector N=32 n=2000", lambda k: k.track_vector(mid, w32)),
        ("track_operator N=4 n=20000", lambda k: k.track_operator(small, np.eye(4), 0.0)),
        ("track_operator N=32 n=2000", lambda k: k.track_operator(mid, np.eye(32), 32 * 2.2e-16)),
        ("greedy_net N=4 eps=0.5 C=20000", lambda k: k.greedy_net(cands, np.cos(0.5), 20000)),
        ("worst_cover P=20000 M=2000", lambda k: k.worst_cover(pts, net)),
    ]


class _Variant:
    def __init__(self, suffix):
        for name in ("track_vector", "track_operator", "greedy_net", "worst_cover"):
            setattr(self, name, getattr(kernels, f"{name}_{suffix}"))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    variants = {"numpy": _Variant("numpy")}
    if HAVE_NUMBA:
        variants["numba"] = _Variant("numba")
    print(f"{'kernel':34s} " + " ".join(f"{v:>10s}" for v in variants) + "   speedup")
    for label, fn in cases():
        times = {}
        for name, var in variants.items():
            fn(var)  # warm-up / compile
            times[name] = _best(lambda: fn(var), args.repeat)
        cols = " ".join(f"{times[v] * 1e3:9.2f}ms" for v in variants)
        speed = times["numpy"] / times["numba"] if "numba" in times else float("nan")
        print(f"{label:34s} {cols}   {speed:6.2f}x")


if __name__ == "__main__":
    main()

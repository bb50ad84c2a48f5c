"""Compare the numba and numpy backends of the variational exponential-map kernel.

Usage: ``python benchmarks/bench_kernels.py [--nodes 500] [--steps 48] [--repeat 5]``
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from yespheres.families import conformal_perturbation
from yespheres.geometry import base_frame
from yespheres.kernels import variations


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=500)
    ap.add_argument("--steps", type=int, default=48)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dim", type=int, default=3)
    args = ap.parse_args(argv)

    fam = conformal_perturbation(args.dim, seed=0)
    x = np.full(args.dim, 0.1)
    E = base_frame(fam, x)
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(args.nodes, args.dim))
    V = 0.2 * (Y / np.linalg.norm(Y, axis=1)[:, None]) @ E.T

    t0 = time.perf_counter()
    ref = variations(fam, x, V, E, steps=args.steps, force_backend="numba")
    first = time.perf_counter() - t0
    other = variations(fam, x, V, E, steps=args.steps, force_backend="numpy")
    diff = max(float(np.abs(a - b).max()) for a, b in zip(ref, other))

    rows = []
    for name in ("numba", "numpy"):
        sec = _time(lambda: variations(fam, x, V, E, steps=args.steps, force_backend=name), args.repeat)
        rows.append((name, sec))
    print(f"nodes={args.nodes} steps={args.steps} dim={args.dim}")
    print(f"first numba call (includes compile or cache load): {first:.3f} s")
    for name, sec in rows:
        print(f"{name:>6}: {sec * 1e3:9.2f} ms  ({args.nodes * args.steps / sec:,.0f} node-steps/s)")
    print(f"speedup numba/numpy: {rows[1][1] / rows[0][1]:.1f}x   max backend difference: {diff:.2e}")


if __name__ == "__main__":
    main()

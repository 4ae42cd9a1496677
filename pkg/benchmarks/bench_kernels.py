"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--solves 200] [--frames 200] [--seed 0]

Times MaxSAT decoding on the shipped 41-label fixture and greedy NMS on
random frames, checks that both backends return identical results, and
prints one line per (kernel, backend).
"""

import argparse
import time

import numpy as np

from modcl import _kernels
from modcl.fixtures import example_requirements
from modcl.maxsat import encode, solve


def bench_solve(rs, backend, problems):
    t0 = time.perf_counter()
    out = [solve(p, backend=backend) for p in problems]
    return time.perf_counter() - t0, out


def bench_nms(kern, frames):
    t0 = time.perf_counter()
    out = [kern.greedy_nms(b, s, c, 0.5) for b, s, c in frames]
    return time.perf_counter() - t0, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--solves", type=int, default=200)
    ap.add_argument("--frames", type=int, default=200)
    ap.add_argument("--boxes", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = ["pure"]
    try:
        _kernels.get_backend("compiled")
        backends.insert(0, "compiled")
    except ImportError:
        print("compiled backend unavailable; timing pure only")

    rng = np.random.default_rng(args.seed)
    rs = example_requirements()
    problems = [encode(rs, rng.random(rs.num_labels)) for _ in range(args.solves)]
    frames = []
    for _ in range(args.frames):
        xy = rng.uniform(0, 600, size=(args.boxes, 2))
        wh = rng.uniform(10, 120, size=(args.boxes, 2))
        frames.append((np.hstack([xy, xy + wh]), rng.random(args.boxes), rng.integers(0, 10, args.boxes)))

    results = {}
    for name in backends:
        kern = _kernels.get_backend(name)
        t_solve, s_out = bench_solve(rs, name, problems)
        t_nms, n_out = bench_nms(kern, frames)
        results[name] = (s_out, n_out)
        print(f"solve  {name:9s} {1000 * t_solve / len(problems):8.3f} ms/detection")
        print(f"nms    {name:9s} {1000 * t_nms / len(frames):8.3f} ms/frame ({args.boxes} boxes)")

    if len(results) == 2:
        (sa, na), (sb, nb) = results["compiled"], results["pure"]
        same = all(a[1] == b[1] and np.array_equal(a[0], b[0]) for a, b in zip(sa, sb))
        same &= all(np.array_equal(a, b) for a, b in zip(na, nb))
        print(f"backends agree: {same}")


if __name__ == "__main__":
    main()

"""Time the generation walk kernels: numba loop versus vectorised numpy.

Usage: python3 benchmarks/bench_kernels.py [--rows 1000] [--horizon 500] [--repeats 5]

Both backends consume the same pre-drawn uniforms, so their outputs must be
identical; the script checks that before timing.
"""
import argparse
import timeit

import numpy as np

from psar import kernels
from psar.generate import PredictiveTables
from psar.seqmodel import OracleMixtureModel


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=1000, help="walks per call")
    parser.add_argument("--horizon", type=int, default=500)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    z = rng.uniform(0.0, 0.25, size=(10, 2))
    tabs = PredictiveTables(OracleMixtureModel(), z, args.horizon)
    idx = rng.integers(0, z.shape[0], size=args.rows)
    n0 = rng.integers(0, args.horizon // 2, size=args.rows)
    s0 = rng.binomial(n0, 0.1)
    steps = args.horizon - n0
    u = rng.random((args.rows, args.horizon))
    prepared = kernels._prepare(tabs.tables, idx, n0, s0, steps, u)

    backends = {"numpy": kernels.walk_successes_numpy}
    if kernels.HAVE_NUMBA:
        backends["numba"] = kernels.walk_successes_numba
        backends["numba"](*prepared)  # compile outside the timed region
    else:
        print("numba is not installed; timing numpy only")

    outputs = {name: fn(*prepared) for name, fn in backends.items()}
    ref = outputs["numpy"]
    assert all(np.array_equal(ref, out) for out in outputs.values()), "backends disagree"

    print(f"{args.rows} walks of up to {args.horizon} steps, best of {args.repeats}")
    best = {}
    for name, fn in backends.items():
        best[name] = min(timeit.repeat(lambda: fn(*prepared), number=1, repeat=args.repeats))
        print(f"  {name:6s} {best[name] * 1e3:9.2f} ms")
    if "numba" in best:
        print(f"  speedup {best['numpy'] / best['numba']:.1f}x")


if __name__ == "__main__":
    main()

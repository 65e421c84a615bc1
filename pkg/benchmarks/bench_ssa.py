"""Throughput of the numba and numpy simulation backends on the bundled models.

    python3 benchmarks/bench_ssa.py [--n 20000] [--repeat 3]

The numba kernel is compiled once before timing; both backends draw from
the same per-trajectory streams, so their results are checked for equality.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from fptbound.model import load
from fptbound.ssa import HAVE_NUMBA, simulate_fpt

DATA = Path(__file__).resolve().parents[1] / "src" / "fptbound" / "data"
MODELS = ["model1_dimerization", "model2_parallel", "model3_gene_expression"]


def best_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--n", type=int, default=20_000, help="trajectories per run")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    print(f"{'model':<24} {'backend':<7} {'seconds':>9} {'traj/s':>11}  agree")
    for stem in MODELS:
        model, query = load(DATA / f"{stem}.pctmc")
        ref = None
        for backend in backends:
            simulate_fpt(model, query, 8, args.seed, backend=backend)  # warm-up / JIT
            t = best_time(lambda: simulate_fpt(model, query, args.n, args.seed, backend=backend), args.repeat)
            s = simulate_fpt(model, query, args.n, args.seed, backend=backend)
            agree = "-" if ref is None else str(np.allclose(ref.tau, s.tau, rtol=1e-12) and np.array_equal(ref.final, s.final))
            ref = ref or s
            print(f"{stem:<24} {backend:<7} {t:>9.3f} {args.n / t:>11.0f}  {agree}")


if __name__ == "__main__":
    main()

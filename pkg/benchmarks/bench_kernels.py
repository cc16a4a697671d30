"""Time the compiled and pure-Python closed-loop kernels on the reference configuration.

    python3 benchmarks/bench_kernels.py [--horizon 10000] [--trials 20] [--repeat 3]

Both kernels are run on identical inputs; the script also checks that their
outputs agree bit for bit.
"""
import argparse
import time

import numpy as np

from qtrack.backend import KERNELS
from qtrack.config import load_config, shipped_config_path
from qtrack.harness import run_trial


def time_backend(cfg, backend, trials, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for i in range(trials):
            run_trial(cfg, i, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best / trials


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=int, default=10_000)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    cfg = load_config(shipped_config_path("paper_example"), horizon=args.horizon).config
    backends = ["reference", *KERNELS]
    print(f"horizon {args.horizon}, {args.trials} trials, best of {args.repeat}")
    times = {}
    for b in backends:
        times[b] = time_backend(cfg, b, args.trials, args.repeat)
        print(f"  {b:<10s} {times[b] * 1e3:9.3f} ms/trial")
    if "compiled" in times:
        print(f"  speed-up compiled vs python: {times['python'] / times['compiled']:.1f}x")
        a, b = run_trial(cfg, 0, backend="compiled"), run_trial(cfg, 0, backend="python")
        same = all(np.array_equal(getattr(a, f), getattr(b, f))
                   for f in ("u", "y", "s", "s_bar", "theta_hat"))
        print(f"  outputs bit-identical: {same}")
    else:
        print("  compiled kernel not built; only the Python kernel is available")


if __name__ == "__main__":
    main()

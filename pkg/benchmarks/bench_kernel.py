"""Time the Monte Carlo kernel on each available backend and check they agree.

    python benchmarks/bench_kernel.py [--epochs 2000] [--n 7] [--repeat 3]
"""

import argparse
import sys
import time

import numpy as np

from shelby_audit import kernel
from shelby_audit.config import load_config, shipped_config
from shelby_audit.model import dishonest_profile, honest_profile
from shelby_audit.simulator import run_simulation


def best_time(params, profile, epochs, backend, repeat):
    times, counts = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        counts = run_simulation(params, profile, epochs, backend=backend).counts
        times.append(time.perf_counter() - t0)
    return min(times), counts


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=2000)
    ap.add_argument("--n", type=int, default=7)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    params = load_config(shipped_config()).params.replace(n=args.n)
    backends = sorted(kernel.BACKENDS)
    if "cython" not in backends:
        print("compiled kernel not built; timing the Python fallback only", file=sys.stderr)
    print(f"{'profile':<10} {'backend':<8} {'seconds':>9} {'epochs/s':>10}")
    identical = True
    for name, make in (("honest", honest_profile), ("dishonest", dishonest_profile)):
        profile = make(params.n)
        results = {}
        for backend in backends:
            secs, counts = best_time(params, profile, args.epochs, backend, args.repeat)
            results[backend] = (secs, counts)
            print(f"{name:<10} {backend:<8} {secs:9.4f} {args.epochs / secs:10.0f}")
        if len(results) == 2:
            same = np.array_equal(results["python"][1], results["cython"][1])
            identical &= same
            print(f"{name:<10} speedup  {results['python'][0] / results['cython'][0]:8.1f}x  identical={same}")
    return 0 if identical else 1


if __name__ == "__main__":
    sys.exit(main())

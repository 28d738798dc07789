"""Time the hot kernels under the numba and numpy backends.

Each backend runs in its own subprocess because the backend is chosen once
at import time from PATHSURVEY_NO_NUMBA.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

_CHILD = r"""
import json, sys, timeit
import numpy as np
from pathsurvey import kernels as k

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
A = rng.uniform(0, 50, (800, 2))
G = rng.uniform(0, 50, (15000, 2))
t_s = np.arange(30000) / 50.0
x = np.sin(2 * np.pi * 2 * t_s) + 0.3 * rng.standard_normal(t_s.size)
t_ms = t_s * 1000.0
f = k.lowpass_zero_phase(t_s, x, 3.0)
vals = rng.normal(-70, 5, 40)
means = rng.normal(-70, 5, (40, 15000))
var = rng.uniform(1, 30, (40, 15000))

cases = {
    "pairwise 800x800": lambda: k.pairwise_distances(A, A),
    "exp_kernel 800x15000": lambda: k.exp_kernel(A, G, 20.0, 3.0),
    "lowpass 30000": lambda: k.lowpass_zero_phase(t_s, x, 3.0),
    "peaks 30000": lambda: k.two_threshold_peaks(t_ms, f, 250.0, 0.5),
    "nearest 800->15000": lambda: k.nearest_distances(A, G),
    "loglik 40x15000": lambda: k.gaussian_loglik_sum(vals, means, var),
}
out = {}
for name, fn in cases.items():
    fn()  # warm-up, includes JIT compilation
    out[name] = min(timeit.repeat(fn, number=1, repeat=repeat))
print(json.dumps({"backend": k.BACKEND, "times": out}))
"""


def run(flag, repeat):
    env = dict(os.environ, PATHSURVEY_NO_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", _CHILD, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    start = timeit.default_timer()
    fast = run("0", args.repeat)
    slow = run("1", args.repeat)
    print(f"{'kernel':<24}{fast['backend']:>12}{slow['backend']:>12}{'ratio':>9}")
    for name, t_fast in fast["times"].items():
        t_slow = slow["times"][name]
        print(f"{name:<24}{t_fast * 1e3:>10.2f}ms{t_slow * 1e3:>10.2f}ms{t_slow / t_fast:>8.1f}x")
    print(f"total wall time {timeit.default_timer() - start:.1f} s")


if __name__ == "__main__":
    main()

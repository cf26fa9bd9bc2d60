"""Compare the compiled kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is called on representative inputs (a 45-action lookahead with 4
neighbours and 4 sites, a 12-site received-power batch, an ORCA solve with 4
neighbours); the script reports the best per-call time of each backend, the
speedup, and a one-episode end-to-end timing run once per backend in a
subprocess with ``UAVNAV_PURE_PYTHON`` set accordingly.
"""
import argparse
import math
import os
import subprocess
import sys
import timeit

import numpy as np

from uavnav import _kernels_py, kernels

EPISODE = """
import time, numpy as np
from uavnav import io, kernels
from uavnav.evaluation import evaluate
from uavnav.trainer import TrainConfig, initialize_networks
from uavnav.orca import generate_bootstrap_set
sc = io.resolve_scenario("desk4")
X, V, _, _, _ = generate_bootstrap_set(sc, 20, np.random.default_rng(0))
nets, _ = initialize_networks(X, V, cfg=TrainConfig(init_max_updates=200), n_sites=sc.max_observed_sites)
t = time.perf_counter()
evaluate(nets, sc, 10, np.random.default_rng(1))
print(kernels.BACKEND, time.perf_counter() - t)
"""


def inputs(rng):
    own = np.array([1.0, 2.0, 6.0, 5.0, 1.0, 0.3])
    n_act = 45
    speeds = np.repeat(np.linspace(0.2, 1.0, 5), 9)[:n_act]
    heads = np.tile(np.linspace(-math.pi / 2, math.pi / 2, 9), 5)[:n_act]
    cand_v = np.c_[speeds * np.cos(heads), speeds * np.sin(heads)]
    look = (own, cand_v, heads, rng.uniform(0, 7, (4, 2)), rng.uniform(-1, 1, (4, 2)), np.full(4, 0.3),
            np.ones(4, dtype=np.uint8), rng.uniform(0, 7, (4, 2)), np.full(4, 32.0), 50.0, 20.0, 99.0, 0.5)
    k = 12
    power = (rng.uniform(0, 10, 45), rng.uniform(0, 10, 45), rng.uniform(0, 10, k), rng.uniform(0, 10, k),
             np.full(k, 32.0), np.full(k, 1.26), np.full(k, 10.0), np.full(k, 15.0), np.full(k, 20.0),
             50.0, 2.0, 20.0)
    orca = (np.zeros(2), np.array([0.5, 0.0]), np.array([1.0, 0.0]), 0.3, 1.0, rng.uniform(-2, 2, (4, 2)),
            rng.uniform(-1, 1, (4, 2)), np.full(4, 0.35), np.full(4, 0.5), 2.0, 0.5)
    return {"lookahead_features": look, "received_power": power, "orca_velocity": orca}


def best_time(fn, args, repeat):
    n = 200
    return min(timeit.repeat(lambda: fn(*args), number=n, repeat=repeat)) / n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--no-episode", action="store_true", help="skip the end-to-end timing")
    args = ap.parse_args()
    cy = kernels.compiled_backend
    if cy is None:
        print("compiled extension not available; only the numpy fallback can be timed")
    print(f"{'kernel':<22}{'python (us)':>14}{'cython (us)':>14}{'speedup':>10}")
    for name, call_args in inputs(np.random.default_rng(0)).items():
        tp = best_time(getattr(_kernels_py, name), call_args, args.repeat)
        if cy is None:
            print(f"{name:<22}{tp * 1e6:>14.1f}{'-':>14}{'-':>10}")
            continue
        tc = best_time(getattr(cy, name), call_args, args.repeat)
        print(f"{name:<22}{tp * 1e6:>14.1f}{tc * 1e6:>14.1f}{tp / tc:>9.1f}x")
    if args.no_episode:
        return
    print("\nend to end: greedy evaluation of 10 two-agent desk cases")
    for flag in ("1", "0"):
        env = dict(os.environ, UAVNAV_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", EPISODE], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"  {backend:<8}{float(secs):8.2f} s")


if __name__ == "__main__":
    main()

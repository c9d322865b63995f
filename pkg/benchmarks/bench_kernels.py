"""Compare the numba and numpy kernel implementations.

    python benchmarks/bench_kernels.py [--repeat 7] [--end-to-end]

Per-kernel timings call the ``*_nb`` and ``*_np`` functions directly at the
array sizes the trainer uses. ``--end-to-end`` also times a short training
run in two subprocesses, with and without ``UAVROUTE_DISABLE_NUMBA=1``.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from uavroute import kernels

TRAIN_SNIPPET = """
import time
from uavroute.env import RoutingEnv, build_scenario
from uavroute.learn.ppo import TrainConfig, Trainer
from uavroute.netmodel import generate_topology, link_table
from uavroute.screening import ScreeningParams, screen
g = generate_topology(3, source_distance=720.0)
sc = build_scenario(g, seed=3)
env = RoutingEnv(sc, screen(g, sc.trust, link_table(g, sc.channel, 1e6), ScreeningParams()))
Trainer(env, TrainConfig(rollout_steps=256, episodes=20)).train()
t = time.perf_counter()
Trainer(env, TrainConfig(rollout_steps=256, episodes=300)).train()
print(time.perf_counter() - t)
"""


def cases(rng):
    obs, hidden, slots, batch = 85, 64, 20, 64
    w = [rng.normal(size=s) for s in ((obs, hidden), (hidden,), (hidden, hidden), (hidden,), (hidden, slots), (slots,))]
    x = rng.normal(size=(batch, obs))
    h1, h2, out = kernels.mlp_forward_np(x, *w)
    mask = rng.random((batch, slots)) < 0.5
    mask[:, 0] = True
    pos41, pos400 = rng.uniform(0, 1200, (41, 2)), rng.uniform(0, 1200, (400, 2))
    r, v = rng.normal(size=2048), rng.normal(size=2048)
    d = (rng.random(2048) < 0.2).astype(float)
    return {
        "pairwise_distances n=41": ("pairwise_distances", (pos41,)),
        "pairwise_distances n=400": ("pairwise_distances", (pos400,)),
        "gae T=2048": ("gae", (r, v, d, 0.0, 0.99, 0.95)),
        "masked_log_softmax 64x20": ("masked_log_softmax", (out, mask)),
        "mlp_forward 1x85": ("mlp_forward", (x[:1].copy(), *w)),
        "mlp_forward 64x85": ("mlp_forward", (x, *w)),
        "mlp_backward 64x85": ("mlp_backward", (x, h1, h2, w[2], w[4], np.ones_like(out))),
    }


def best_time(fn, args, repeat):
    fn(*args)  # compile / warm caches
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def end_to_end():
    times = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, UAVROUTE_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env, capture_output=True, text=True,
                             check=True)
        times[label] = float(out.stdout.strip().splitlines()[-1])
    return times


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--end-to-end", action="store_true", help="also time a 300-episode training run")
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numba (us)':>12}{'numpy (us)':>12}{'speed-up':>10}")
    for name, (kernel, call_args) in cases(rng).items():
        nb = best_time(getattr(kernels, kernel + "_nb"), call_args, args.repeat)
        np_ = best_time(getattr(kernels, kernel + "_np"), call_args, args.repeat)
        print(f"{name:<28}{nb * 1e6:>12.2f}{np_ * 1e6:>12.2f}{np_ / nb:>9.2f}x")
    if args.end_to_end:
        t = end_to_end()
        print(f"\n300 training episodes: numba {t['numba']:.2f} s, numpy {t['numpy']:.2f} s "
              f"({t['numpy'] / t['numba']:.2f}x)")


if __name__ == "__main__":
    main()

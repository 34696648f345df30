#!/usr/bin/env python3
"""Time every hot kernel under the numba and numpy backends.

Shapes follow a default training batch: 32 windows of 100 steps with 28
feature columns, LSTM hidden size 192, conv width 64.

    python benchmarks/bench_kernels.py              # kernel table
    python benchmarks/bench_kernels.py --step       # plus one LSTM_AE train step per backend
    python benchmarks/bench_kernels.py --json out.json
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from limbhar import kernels

BATCH, STEPS, COLS, HID, CONV = 32, 100, 28, 192, 64


def cases(rng):
    z = rng.normal(size=(BATCH, 4 * HID))
    c = rng.normal(size=(BATCH, HID))
    acts, _, _, tanh_c = kernels.get_backend("numpy").lstm_gates_forward(z, c)
    dh = rng.normal(size=(BATCH, HID))
    xp = rng.normal(size=(BATCH, STEPS + 2, COLS))
    w = rng.normal(size=(CONV, COLS, 3))
    dy = rng.normal(size=(BATCH, STEPS, CONV))
    pool_in = rng.normal(size=(BATCH, STEPS, CONV))
    _, arg = kernels.get_backend("numpy").maxpool1d_forward(pool_in, 2)
    dpool = rng.normal(size=(BATCH, STEPS // 2, CONV))
    window = rng.normal(size=(STEPS, 14))
    return {
        "lstm_gates_forward": lambda m: m.lstm_gates_forward(z, c),
        "lstm_gates_backward": lambda m: m.lstm_gates_backward(acts, c, tanh_c, dh, dh),
        "conv1d_forward": lambda m: m.conv1d_forward(xp, w, 1),
        "conv1d_backward": lambda m: m.conv1d_backward(xp, w, dy, 1),
        "maxpool1d_forward": lambda m: m.maxpool1d_forward(pool_in, 2),
        "maxpool1d_backward": lambda m: m.maxpool1d_backward(dpool, arg, 2, STEPS),
        "dft2_magnitude": lambda m: m.dft2_magnitude(window),
    }


def best_of(fn, repeat):
    fn()  # compile / warm caches
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


STEP_SNIPPET = """
import time, numpy as np
from limbhar import kernels
from limbhar.autodiff import backward
from limbhar.models import ArchKind, ModelSpec, build
m = build(ModelSpec(ArchKind.LSTM_AE, input_shape=(100, 28)), seed=0)
x = np.random.default_rng(0).normal(size=(32, 100, 28)); y = np.arange(32) % 8
def step():
    loss, _ = m.loss(x, y, mode="train", rng=np.random.default_rng(0))
    backward(loss, params=m.parameters())
step()
t = [time.perf_counter()]
for _ in range(3):
    step(); t.append(time.perf_counter())
print(kernels.BACKEND, min(b - a for a, b in zip(t, t[1:])))
"""


def train_step(backend):
    env = dict(os.environ, LIMBHAR_DISABLE_NUMBA="1" if backend == "numpy" else "0")
    out = subprocess.run([sys.executable, "-c", STEP_SNIPPET], env=env, capture_output=True, text=True, check=True)
    name, secs = out.stdout.split()
    assert name == backend, f"asked for {backend}, got {name}"
    return float(secs)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5, help="timing repeats, best is kept (default 5)")
    ap.add_argument("--step", action="store_true", help="also time a full LSTM_AE forward+backward per backend")
    ap.add_argument("--json", metavar="FILE", help="write results as JSON")
    args = ap.parse_args()

    if not kernels.numba_available():
        sys.exit("numba is not importable; nothing to compare")
    backends = {name: kernels.get_backend(name) for name in ("numpy", "numba")}
    results = {}
    print(f"{'kernel':22s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)).items():
        t = {b: best_of(lambda: fn(mod), args.repeat) for b, mod in backends.items()}
        results[name] = t
        print(f"{name:22s} {t['numpy'] * 1e3:10.3f} {t['numba'] * 1e3:10.3f} {t['numpy'] / t['numba']:7.2f}x")
    if args.step:
        t = {b: train_step(b) for b in backends}
        results["lstm_ae_train_step"] = t
        print(f"{'lstm_ae_train_step':22s} {t['numpy'] * 1e3:10.1f} {t['numba'] * 1e3:10.1f} {t['numpy'] / t['numba']:7.2f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()

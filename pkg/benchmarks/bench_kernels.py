"""Compare the compiled and numpy training kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json]

Each row trains the same network from the same initial weights with both
kernels and reports seconds per epoch, the speedup and the largest
parameter difference afterwards.
"""

import argparse
import json
import time

import numpy as np

from drnet import backend
from drnet.data import generate_equality_dataset
from drnet.network import NetworkSpec, TrainConfig, build_network, train
from drnet.tensor import Rng

CASES = [
    # (arch, n, hidden, batch_size, epochs)
    ("mid", 10, (10,), None, 20),
    ("mid", 10, (10,), 32, 5),
    ("early", 10, (10,), 1, 2),
    ("plain", 100, (10,), 32, 2),
    ("mid", 30, (50, 50), 32, 2),
]


def time_kernel(kind, arch, n, hidden, batch, epochs, ds, repeat):
    best = float("inf")
    for _ in range(repeat):
        net = build_network(NetworkSpec(arch, n, hidden), Rng(0, "bench"))
        start = time.perf_counter()
        train(net, ds, TrainConfig(epochs=epochs, batch_size=batch, lr=0.01), kernel=kind)
        best = min(best, time.perf_counter() - start)
    return best / epochs, net.theta


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3, help="timing repeats; the best is kept")
    ap.add_argument("--json", action="store_true", help="print rows as JSON lines")
    args = ap.parse_args()
    if "c" not in backend.available():
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")

    rows = []
    for arch, n, hidden, batch, epochs in CASES:
        ds = generate_equality_dataset(n, Rng(0, "bench-data"))
        py_t, py_theta = time_kernel("python", arch, n, hidden, batch, epochs, ds, args.repeat)
        c_t, c_theta = time_kernel("c", arch, n, hidden, batch, epochs, ds, args.repeat)
        rows.append({"arch": arch, "n": n, "hidden": list(hidden), "batch": batch or "full",
                     "pairs": len(ds), "python_s_per_epoch": py_t, "c_s_per_epoch": c_t,
                     "speedup": py_t / c_t, "max_abs_diff": float(np.max(np.abs(py_theta - c_theta)))})

    if args.json:
        for r in rows:
            print(json.dumps(r))
        return
    print(f"{'arch':6} {'n':>4} {'hidden':>8} {'batch':>5} {'pairs':>5} {'python s/ep':>12} {'c s/ep':>10} "
          f"{'speedup':>8} {'max|diff|':>10}")
    for r in rows:
        hidden = "x".join(map(str, r["hidden"]))
        print(f"{r['arch']:6} {r['n']:>4} {hidden:>8} {r['batch']!s:>5} {r['pairs']:>5} "
              f"{r['python_s_per_epoch']:>12.5f} {r['c_s_per_epoch']:>10.5f} {r['speedup']:>7.1f}x "
              f"{r['max_abs_diff']:>10.1e}")


if __name__ == "__main__":
    main()

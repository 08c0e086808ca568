"""Compare the numba kernels against the pure-numpy paths.

Run ``python benchmarks/bench_kernels.py``. Kernel timings call both
implementations directly in this process; the end-to-end latency of
variant #9 is measured in two subprocesses, one of them started with
``IDS_DISABLE_NUMBA=1``.
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from iiot_ids import kernels


def best_of(fn, repeat=5):
    n, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=n, repeat=repeat)) / n


def lstm_rows(steps, hidden, batches):
    rng = np.random.default_rng(0)
    U = rng.normal(size=(hidden, 4 * hidden)) * 0.1
    UT = np.ascontiguousarray(U.T)
    rows = []
    for B in batches:
        xp = rng.normal(size=(steps, B, 4 * hidden))
        h0 = np.zeros((B, hidden))
        hs, cs, acts = kernels.lstm_forward_vectorized(xp, U, h0, h0)
        dhs = rng.normal(size=hs.shape)
        kernels.lstm_forward_fused(xp, UT, h0, h0)
        kernels.lstm_backward_fused(dhs, acts, cs, h0, U)
        rows.append({
            "batch": B,
            "forward_fused": best_of(lambda: kernels.lstm_forward_fused(xp, UT, h0, h0)),
            "forward_numpy": best_of(lambda: kernels.lstm_forward_vectorized(xp, U, h0, h0)),
            "backward_fused": best_of(
                lambda: kernels.lstm_backward_fused(dhs, acts, cs, h0, U)),
            "backward_numpy": best_of(
                lambda: kernels.lstm_backward_vectorized(dhs, acts, cs, h0, UT)),
        })
    return rows


def knn_rows(sizes, features=60, k=5):
    rng = np.random.default_rng(1)
    rows = []
    for m in sizes:
        pts = rng.normal(size=(m, features))
        q = np.arange(m)
        kernels.knn_rows_fused(pts[:10], q[:3], 2)
        rows.append({
            "points": m,
            "fused": best_of(lambda: kernels.knn_rows_fused(pts, q, k), repeat=3),
            "numpy": best_of(lambda: kernels.knn_rows_vectorized(pts, q, k), repeat=3),
        })
    return rows


MODEL_PROBE = """
import json, sys
import numpy as np
from iiot_ids import BACKEND, models
from iiot_ids.cli import bench_model
steps, n = int(sys.argv[1]), int(sys.argv[2])
model = models.build_variant(models.variant_spec(9, 6, steps=steps))
x = np.random.default_rng(0).normal(size=(256, steps, 1))
stats = bench_model(model, x, n_instances=n, warmup=50, batch=256)
print(json.dumps({"backend": BACKEND, **stats}))
"""


def model_latency(steps, n):
    out = {}
    for label, flag in (("numba", None), ("numpy", "1")):
        env = dict(os.environ)
        env.pop("IDS_DISABLE_NUMBA", None)
        if flag:
            env["IDS_DISABLE_NUMBA"] = flag
        res = subprocess.run([sys.executable, "-c", MODEL_PROBE, str(steps), str(n)],
                             env=env, capture_output=True, text=True, check=True)
        out[label] = json.loads(res.stdout)
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--n", type=int, default=300, help="single-sample inferences per backend")
    p.add_argument("--json", help="also write the raw numbers here")
    args = p.parse_args(argv)

    lstm = lstm_rows(args.steps, args.hidden, (1, 2, 4, 8, 32, 128))
    print(f"LSTM recurrence, {args.steps} steps, H={args.hidden} (ms)")
    print(f"{'batch':>6} {'fwd fused':>10} {'fwd numpy':>10} {'bwd fused':>10} {'bwd numpy':>10}")
    for r in lstm:
        print(f"{r['batch']:>6} {r['forward_fused'] * 1e3:>10.3f} {r['forward_numpy'] * 1e3:>10.3f}"
              f" {r['backward_fused'] * 1e3:>10.3f} {r['backward_numpy'] * 1e3:>10.3f}")
    print(f"dispatch: fused forward for batch <= {kernels.FUSED_MAX_BATCH_FORWARD}, "
          f"fused backward for batch <= {kernels.FUSED_MAX_BATCH_BACKWARD}")

    knn = knn_rows((200, 800))
    print("\nexact kNN, all rows as queries, 60 features, k=5 (ms)")
    for r in knn:
        print(f"{r['points']:>6} points  fused {r['fused'] * 1e3:9.2f}  numpy {r['numpy'] * 1e3:9.2f}")

    lat = model_latency(args.steps, args.n)
    print(f"\nvariant #9 per-instance latency, {args.steps}x1 input (ms)")
    for label, s in lat.items():
        b1, am = s["batch_of_1"], s["amortized"]
        print(f"{label:>6}  batch-of-1 mean {b1['mean'] * 1e3:.3f}  p50 {b1['p50'] * 1e3:.3f}"
              f"  p99 {b1['p99'] * 1e3:.3f}  amortized {am['mean'] * 1e3:.3f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"lstm": lstm, "knn": knn, "model": lat}, fh, indent=2)


if __name__ == "__main__":
    main()

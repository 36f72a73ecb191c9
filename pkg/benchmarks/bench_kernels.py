"""Compare the numba and pure-numpy kernel backends.

Each backend runs in a fresh interpreter because the backend is chosen at
import time from XREID_BACKEND.

    python3 benchmarks/bench_kernels.py [--points 2500] [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from xreid import kernels
from xreid.gait import GaitParams, WalkSpec, synth_subject
from xreid.signature import synthesize_signature

n, repeat = int(sys.argv[1]), int(sys.argv[2])
mesh = synth_subject(GaitParams(), WalkSpec.toward_sensor(), seed=0, n_points=n)
frame = mesh.frames[0]
rng = np.random.default_rng(0)
radar_like = rng.uniform(-1.0, 1.0, size=(400, 3))

def best(fn):
    fn()  # warm-up (includes JIT compile for numba)
    times = []
    for _ in range(repeat):
        t = time.perf_counter(); fn(); times.append(time.perf_counter() - t)
    return min(times)

print(json.dumps({
    "backend": kernels.BACKEND,
    "knn_7_ms": 1e3 * best(lambda: kernels.knn_all(frame.points, 7)),
    "dbscan_400_ms": 1e3 * best(lambda: kernels.dbscan_labels(radar_like, 0.35, 3)),
    "signature_frame_ms": 1e3 * best(lambda: synthesize_signature(frame)),
}))
"""


def run(backend, points, repeat):
    env = dict(os.environ, XREID_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", WORKER, str(points), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--points", type=int, default=2500)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    rows = [run(b, args.points, args.repeat) for b in ("numba", "numpy")]
    keys = [k for k in rows[0] if k != "backend"]
    print(f"{'kernel':<22}" + "".join(f"{r['backend']:>12}" for r in rows) + f"{'speedup':>10}")
    for k in keys:
        print(f"{k:<22}" + "".join(f"{r[k]:>12.2f}" for r in rows) + f"{rows[1][k] / rows[0][k]:>10.1f}x")


if __name__ == "__main__":
    main()

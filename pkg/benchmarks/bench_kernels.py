"""Time the compiled remeshing kernels against the pure-Python fallback.

Each backend runs in its own interpreter because the choice is made at import.
Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = """
import json, sys, time
import numpy as np
from apsadapt import kernels
from apsadapt.mesh import perturbed_mesh
from apsadapt.remesh import MetricField, adapt_to_metric

repeat = int(sys.argv[1])
mesh = perturbed_mesh(60, 60, jitter=0.25, seed=0)
x = mesh.vertices
metric = MetricField(np.full(mesh.nv, 0.1), 0.004 + 0.1 * np.abs(x[:, 1] - 0.5), np.full(mesh.nv, 0.3))
met = np.ascontiguousarray(metric.tensors())
p, e, t = np.array(mesh.vertices), np.array(mesh.edges), np.array(mesh.triangles)


def best(fn):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


out = {
    "backend": kernels.BACKEND,
    "edge_lengths": best(lambda: kernels.edge_lengths(p, met, e)),
    "qualities": best(lambda: kernels.qualities(p, met, t)),
}
small = perturbed_mesh(20, 20, jitter=0.25, seed=1)
y = small.vertices
target = MetricField(np.full(small.nv, 0.1), 0.01 + 0.1 * np.abs(y[:, 1] - 0.5), np.full(small.nv, 0.3))
t0 = time.perf_counter()
new, _ = adapt_to_metric(small, target)
out["adapt_to_metric"] = time.perf_counter() - t0
out["remesh_nv"] = new.nv
print(json.dumps(out))
"""


def run(pure, repeat):
    env = dict(os.environ, APSADAPT_PURE_PYTHON="1" if pure else "0")
    res = subprocess.run([sys.executable, "-c", WORKLOAD, str(repeat)], env=env, capture_output=True, text=True,
                         check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    fast, slow = run(False, args.repeat), run(True, args.repeat)
    if fast["backend"] != "compiled":
        print("compiled extension not available; both runs used the fallback")
    print(f"{'kernel':<18}{'compiled [s]':>14}{'python [s]':>14}{'speedup':>10}")
    for key in ("edge_lengths", "qualities", "adapt_to_metric"):
        print(f"{key:<18}{fast[key]:>14.4f}{slow[key]:>14.4f}{slow[key] / fast[key]:>10.1f}")
    print(f"remeshed vertices: compiled {fast['remesh_nv']}, python {slow['remesh_nv']}")


if __name__ == "__main__":
    main()

"""Time the memory-convolution kernel on the numba and numpy paths, and the
per-step cost of direct versus recursive memory in the solver.

    python3 benchmarks/bench_memory.py [--steps 2000] [--cells 280]

The numpy timing runs in a child process with VISCOWAVE_DISABLE_NUMBA=1,
because the backend is fixed at import.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

CHILD = r"""
import json, sys, time
import numpy as np
from viscowave import _accel
steps, cells = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
H = rng.standard_normal((steps + 1, cells))
coef = rng.random(steps + 1)
_accel.history_moments(H, 10, coef)           # compile / warm up
t0 = time.perf_counter()
for n in range(0, steps + 1, max(1, steps // 200)):
    _accel.history_moments(H, n, coef)
print(json.dumps({"backend": _accel.backend(), "seconds": time.perf_counter() - t0}))
"""


def kernel_timing(steps, cells, disable):
    env = dict(os.environ)
    if disable:
        env["VISCOWAVE_DISABLE_NUMBA"] = "1"
    else:
        env.pop("VISCOWAVE_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", CHILD, str(steps), str(cells)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def per_step_cost(memory, nsteps):
    from viscowave import scenarios
    from viscowave.solver import build_mesh, init_state, step

    cfg = scenarios.standard(memory=memory, T=nsteps * 0.0025)
    mesh = build_mesh(cfg)
    state = init_state(cfg, mesh)
    marks = []
    t0 = time.perf_counter()
    for n in range(1, mesh.nsteps + 1):
        state = step(state, cfg, mesh)
        if n % (mesh.nsteps // 4) == 0:
            marks.append(time.perf_counter() - t0)
    quarters = np.diff([0.0] + marks) / (mesh.nsteps // 4)
    return [float(q) for q in quarters]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--cells", type=int, default=280)
    args = ap.parse_args()
    for disable in (False, True):
        r = kernel_timing(args.steps, args.cells, disable)
        print(f"history_moments [{r['backend']:5s}] {r['seconds']:.4f} s")
    for memory in ("recursive", "direct"):
        q = per_step_cost(memory, args.steps)
        print(f"step cost [{memory:9s}] per quarter (ms): " + " ".join(f"{1e3 * v:.3f}" for v in q))


if __name__ == "__main__":
    main()

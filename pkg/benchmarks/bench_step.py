"""Compare the compiled and pure-Python simulation kernels.

Runs the same wipe rollout with both backends, checks they agree to
floating-point tolerance, and reports steps/second for each.

Usage: python3 benchmarks/bench_step.py [--steps N] [--repeats R]
"""

from __future__ import annotations

import argparse
import importlib
import os
import subprocess
import sys
import time

import numpy as np


def _run_rollout(T: int, seed: int):
    from defosim.params import SimParams
    from defosim.sim import BACKEND, SimConfig, rollout

    params = SimParams(bend_stiffness=5.0, elastic_stiffness=150.0,
                       friction=0.5, scale=1.0)
    t0 = time.perf_counter()
    traj = rollout("wipe", params, T=T, config=SimConfig(seed=seed))
    dt = time.perf_counter() - t0
    return BACKEND, traj.particles, dt


def _timed_subprocess(T: int, pure: bool) -> tuple[str, float]:
    env = dict(os.environ)
    env["DEFOSIM_PURE"] = "1" if pure else "0"
    code = (
        "import json, sys; "
        "sys.path.insert(0, %r); "
        "from bench_step import _run_rollout; "
        "backend, particles, dt = _run_rollout(%d, 0); "
        "print(json.dumps({'backend': backend, 'dt': dt, "
        "'checksum': float(particles.sum())}))"
        % (os.path.dirname(os.path.abspath(__file__)), T)
    )
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True,
        check=True,
    )
    import json

    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    results = {}
    for pure in (False, True):
        best = None
        for _ in range(args.repeats):
            r = _timed_subprocess(args.steps, pure)
            if best is None or r["dt"] < best["dt"]:
                best = r
        results[best["backend"]] = best

    if set(results) != {"cython", "python"}:
        print("warning: compiled backend unavailable; only",
              sorted(results), file=sys.stderr)

    checksums = {k: v["checksum"] for k, v in results.items()}
    if len(results) == 2:
        agree = np.isclose(checksums["cython"], checksums["python"],
                           rtol=1e-9, atol=1e-12)
        print(f"backends agree: {bool(agree)} "
              f"(checksums {checksums['cython']:.12g} / {checksums['python']:.12g})")
    for name, r in sorted(results.items()):
        sps = args.steps / r["dt"]
        print(f"{name:8s} {r['dt']*1e3:8.1f} ms for {args.steps} steps "
              f"({sps:,.0f} steps/s)")
    if len(results) == 2:
        speedup = results["python"]["dt"] / results["cython"]["dt"]
        print(f"speedup: {speedup:.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())

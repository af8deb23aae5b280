"""Time the numba kernels against their numpy counterparts.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Both flavours are called directly, so the result does not depend on
``FRACTURA_DISABLE_NUMBA``.  The first numba call (compilation or cache load)
is excluded from the timings and reported separately.
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from fractura import kernels
from fractura._accel import USE_NUMBA
from fractura.anisotropy import staircase
from fractura.mesh import structured_rectangle


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    m = structured_rectangle(200, 200)
    nodes, tris = np.ascontiguousarray(m.nodes), np.ascontiguousarray(m.triangles)
    coef = np.tile(np.array([[2.0, 0.3], [0.3, 1.0]]), (len(tris), 1, 1))
    cmat = np.tile(np.diag([3.0, 3.0, 2.0]), (len(tris), 1, 1))
    stair = staircase(256).segments
    diag = np.array([[0.0, 0.0, 1.0, 1.0]])
    empty = np.empty((0, 2))
    return {
        f"scalar_stiffness ({len(tris)} triangles)": ("scalar_stiffness", (nodes, tris, coef)),
        f"vector_stiffness ({len(tris)} triangles)": ("vector_stiffness", (nodes, tris, cmat)),
        "directed_hausdorff (256-step staircase -> diagonal)": ("directed_hausdorff",
                                                               (stair, empty, diag, empty, 1e-9)),
        "directed_hausdorff (diagonal -> 256-step staircase)": ("directed_hausdorff",
                                                               (diag, empty, stair, empty, 1e-9)),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args()
    rows = []
    for label, (name, call_args) in cases().items():
        np_fn = getattr(kernels, f"numpy_{name}")
        row = {"kernel": label, "numpy_s": best_of(lambda: np_fn(*call_args), args.repeat)}
        if USE_NUMBA:
            nb_fn = getattr(kernels, f"numba_{name}")
            t0 = time.perf_counter()
            ref = nb_fn(*call_args)
            row["numba_first_call_s"] = time.perf_counter() - t0
            row["numba_s"] = best_of(lambda: nb_fn(*call_args), args.repeat)
            row["speedup"] = row["numpy_s"] / row["numba_s"]
            row["max_abs_diff"] = float(np.max(np.abs(np.asarray(ref) - np.asarray(np_fn(*call_args)))))
        rows.append(row)
    width = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy [ms]':>11}  {'numba [ms]':>11}  {'speedup':>8}  {'max |diff|':>10}")
    for r in rows:
        nb = f"{1e3 * r['numba_s']:11.2f}" if "numba_s" in r else f"{'n/a':>11}"
        sp = f"{r['speedup']:8.1f}" if "speedup" in r else f"{'n/a':>8}"
        df = f"{r['max_abs_diff']:10.1e}" if "max_abs_diff" in r else f"{'n/a':>10}"
        print(f"{r['kernel']:<{width}}  {1e3 * r['numpy_s']:11.2f}  {nb}  {sp}  {df}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()

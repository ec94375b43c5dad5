"""Benchmark the compiled kernel lane against the NumPy reference lane.

Times the two hot kernels on representative shapes: the fused state/tangent/
Jacobian recursion (path simulation) and the O(M^2)-per-path correction
derivative sweep (the generic weight).  The lanes compute identical doubles;
this script only reports speed.

    python benchmarks/bench_kernels.py [--paths 20000] [--steps 512]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mfdelta import PARAMETER_SET_A, TimeGrid, build_model, resolve_curves
from mfdelta import _kernels_py as py_lane
from mfdelta.rng import increment_block

try:
    from mfdelta import _kernels_cy as cy_lane
except ImportError:
    cy_lane = None


def _time(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=20_000)
    parser.add_argument("--steps", type=int, default=512)
    parser.add_argument("--dsu-paths", type=int, default=200)
    args = parser.parse_args(argv)

    params = PARAMETER_SET_A
    grid = TimeGrid(params["T"], args.steps)
    model = build_model("mean_vol", params)
    curves = resolve_curves(model, params["x"], grid)
    table = model.step_coeffs(curves, grid)
    dw = increment_block(0, 0, args.paths, grid)
    dw_small = dw[: args.dsu_paths]
    eps = 1e-4 * np.sqrt(grid.dt)

    lanes = [("numpy", py_lane)]
    if cy_lane is not None:
        lanes.append(("compiled", cy_lane))
    else:
        print("compiled lane not built; timing the NumPy lane only")

    rows = []
    for name, lane in lanes:
        t_paths = _time(
            lambda: lane.table_paths(
                params["x"], grid.dt, table.drift, table.vol, table.alpha, table.beta, dw
            )
        )
        x, y, _ = lane.table_paths(
            params["x"], grid.dt, table.drift, table.vol, table.alpha, table.beta, dw_small
        )
        t_dsu = _time(
            lambda: lane.correction_noise_derivatives(
                x, y, grid.dt, table.drift, table.vol, table.alpha, table.beta, dw_small, eps
            ),
            repeats=2,
        )
        rows.append((name, t_paths, t_dsu))

    print(f"\npaths kernel: {args.paths} paths x {args.steps} steps (X, Y, J)")
    print(f"dsu kernel:   {args.dsu_paths} paths x {args.steps}^2 bump sweep")
    print(f"\n{'lane':<10} {'paths [s]':>12} {'dsu [s]':>12}")
    for name, t_paths, t_dsu in rows:
        print(f"{name:<10} {t_paths:>12.3f} {t_dsu:>12.3f}")
    if len(rows) == 2:
        print(
            f"{'speedup':<10} {rows[0][1] / rows[1][1]:>11.1f}x "
            f"{rows[0][2] / rows[1][2]:>11.1f}x"
        )
        # identical doubles, not just close
        ok = True
        a = py_lane.correction_noise_derivatives(
            x, y, grid.dt, table.drift, table.vol, table.alpha, table.beta, dw_small, eps
        )
        b = cy_lane.correction_noise_derivatives(
            x, y, grid.dt, table.drift, table.vol, table.alpha, table.beta, dw_small, eps
        )
        ok = all(np.array_equal(u, v) for u, v in zip(a, b))
        print(f"lanes bitwise identical: {ok}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

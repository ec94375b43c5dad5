"""The two kernel lanes must produce bitwise-identical doubles."""

import os
import subprocess
import sys

import numpy as np
import pytest

from mfdelta import TimeGrid, build_model
from mfdelta import _kernels_py as py_lane
from mfdelta.backend import active_backend
from mfdelta.models import PARAMETER_SET_A, resolve_curves
from mfdelta.rng import increment_block
from mfdelta.weights import dsu_eps

cy_lane = pytest.importorskip(
    "mfdelta._kernels_cy", reason="compiled kernel lane not built"
)


@pytest.fixture(scope="module")
def workload():
    params = PARAMETER_SET_A
    grid = TimeGrid(params["T"], 96)
    model = build_model("mean_vol", params)
    curves = resolve_curves(model, params["x"], grid)
    table = model.step_coeffs(curves, grid)
    dw = increment_block(314, 0, 64, grid)
    return params, grid, table, dw


class TestLaneParity:
    def test_state_tangent_jacobian(self, workload):
        params, grid, table, dw = workload
        a = py_lane.table_paths(
            params["x"], grid.dt, table.drift, table.vol, table.alpha, table.beta, dw
        )
        b = cy_lane.table_paths(
            params["x"], grid.dt, table.drift, table.vol, table.alpha, table.beta, dw
        )
        for u, v in zip(a, b):
            assert np.array_equal(u, v)

    def test_state_only_kernel_matches_fused_kernel(self, workload):
        params, grid, table, dw = workload
        fused = cy_lane.table_paths(
            params["x"], grid.dt, table.drift, table.vol, table.alpha, table.beta, dw
        )[0]
        for lane in (py_lane, cy_lane):
            x = lane.table_paths_x(params["x"], grid.dt, table.drift, table.vol, dw)
            assert np.array_equal(x, fused)

    def test_log_accumulation(self, workload):
        params, grid, table, dw = workload
        ldrift = np.ascontiguousarray((table.drift - 0.5 * table.vol**2) * grid.dt)
        a = py_lane.log_accumulate(0.25, ldrift, table.vol, dw)
        b = cy_lane.log_accumulate(0.25, ldrift, table.vol, dw)
        assert np.array_equal(a, b)

    def test_jacobian_from_paths(self, workload):
        params, grid, table, dw = workload
        x, _, _ = py_lane.table_paths(
            params["x"], grid.dt, table.drift, table.vol, table.alpha, table.beta, dw
        )
        a = py_lane.table_jacobian_from_paths(
            x, grid.dt, table.drift, table.vol, table.alpha, table.beta, dw
        )
        b = cy_lane.table_jacobian_from_paths(
            x, grid.dt, table.drift, table.vol, table.alpha, table.beta, dw
        )
        assert np.array_equal(a, b)

    def test_correction_and_noise_derivatives(self, workload):
        params, grid, table, dw = workload
        x, y, _ = py_lane.table_paths(
            params["x"], grid.dt, table.drift, table.vol, table.alpha, table.beta, dw
        )
        eps = dsu_eps(grid)
        a = py_lane.correction_noise_derivatives(
            x, y, grid.dt, table.drift, table.vol, table.alpha, table.beta, dw, eps
        )
        b = cy_lane.correction_noise_derivatives(
            x, y, grid.dt, table.drift, table.vol, table.alpha, table.beta, dw, eps
        )
        for u, v in zip(a, b):
            assert np.array_equal(u, v)
        qa = py_lane.correction_quadrature(
            x, y, grid.dt, table.vol, table.alpha, table.beta, dw
        )
        qb = cy_lane.correction_quadrature(
            x, y, grid.dt, table.vol, table.alpha, table.beta, dw
        )
        for u, v in zip(qa, qb):
            assert np.array_equal(u, v)


class TestBackendSelection:
    def test_active_lane_matches_the_environment(self):
        expected = "python" if os.environ.get("MFDELTA_PURE_PYTHON") == "1" else "compiled"
        assert active_backend() == expected

    def test_environment_override_forces_python_lane(self):
        env = dict(os.environ, MFDELTA_PURE_PYTHON="1")
        out = subprocess.run(
            [sys.executable, "-c", "import mfdelta; print(mfdelta.active_backend())"],
            env=env,
            capture_output=True,
            text=True,
            check=True,
        )
        assert out.stdout.strip() == "python"

    def test_estimates_agree_across_lanes(self):
        # same seed, forced python lane in a subprocess: identical doubles
        script = (
            "from mfdelta import TimeGrid, build_model, make_payoff, RunSettings, "
            "estimate_delta_malliavin, PARAMETER_SET_A\n"
            "m = build_model('mean_vol', PARAMETER_SET_A)\n"
            "st = RunSettings(x0=1.0, grid=TimeGrid(1.0, 64), n_paths=2000, seed=8)\n"
            "e, _ = estimate_delta_malliavin(m, make_payoff('call', 2.0), st)\n"
            "print(repr((e.value, e.std_error)))\n"
        )
        results = {}
        for lane, env_val in (("compiled", "0"), ("python", "1")):
            env = dict(os.environ, MFDELTA_PURE_PYTHON=env_val)
            out = subprocess.run(
                [sys.executable, "-c", script], env=env, capture_output=True, text=True, check=True
            )
            results[lane] = out.stdout.strip()
        assert results["compiled"] == results["python"]


def test_benchmark_script_runs():
    from pathlib import Path

    bench = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    out = subprocess.run(
        [sys.executable, str(bench), "--paths", "500", "--steps", "64", "--dsu-paths", "20"],
        capture_output=True,
        text=True,
        check=True,
    )
    assert "lanes bitwise identical: True" in out.stdout

"""Delta and price estimators built on the path engine and the weights.

Estimators process paths in fixed chunks of :data:`CHUNK_PATHS` indexed by
path_index, and merge per-chunk statistics in chunk order with a stable
pairwise/Chan update.  Workers may run on a thread pool, but because every
path owns its noise stream and the reduction order is fixed, the result is
bitwise identical for any thread count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, TextIO

import numpy as np

from .errors import DeltaEngineError, NonFinite, PayoffNotDifferentiable
from .grid import TimeGrid
from .meanfield import MeanFieldCurves
from .models import (
    ModelSpec,
    Payoff,
    discount_factor,
    drift_shape,
    resolve_curves,
    risk_neutral_simulation_spec,
)
from .rng import INDEPENDENT_LEG_OFFSET, increment_block
from .sde import simulate_chunk
from .weights import (
    classical_weight_values,
    dividend_weight_values,
    gaussian_pair,
    generic_weight_values,
    mean_drift_correction,
    mean_vol_weight,
)

CHUNK_PATHS = 1000

METHOD_NAMES = ("malliavin", "fd_forward", "fd_central", "pathwise")


@dataclass(frozen=True)
class RunSettings:
    """Numerical parameters of one estimation run."""

    x0: float
    grid: TimeGrid
    n_paths: int
    seed: int
    threads: int = 1
    log_euler: bool = False
    use_generic_weight: bool = False
    fd_crn: bool = True
    resolver: str = "analytic"
    n_particles: int = 100_000
    picard_tol: float = 1e-6
    picard_max_iters: int = 50
    weight_convention: str = "cancelled"

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.use_generic_weight and self.log_euler:
            raise ValueError(
                "the generic weight re-simulates with plain Euler steps; "
                "disable log_euler to use it"
            )


@dataclass(frozen=True)
class DeltaEstimate:
    method: str
    value: float
    std_error: float
    n_paths: int
    n_steps: int
    seed: int
    h: float | None = None
    wall_time: float = 0.0


@dataclass
class ConvergenceTrace:
    """Running estimate and standard error at geometrically spaced path counts."""

    method: str
    rows: list[tuple[int, float, float]] = field(default_factory=list)


class RunningStats:
    """Chunk-merged mean and second central moment (Chan's update)."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add_chunk(self, values: np.ndarray) -> None:
        cn = values.size
        cmean = float(np.mean(values))
        cm2 = float(np.sum((values - cmean) ** 2))
        if self.n == 0:
            self.n, self.mean, self.m2 = cn, cmean, cm2
            return
        tot = self.n + cn
        delta = cmean - self.mean
        self.mean += delta * (cn / tot)
        self.m2 += cm2 + delta * delta * (self.n * cn / tot)
        self.n = tot

    @property
    def std_error(self) -> float:
        if self.n < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.n - 1) / self.n)


def _checkpoints(n_paths: int) -> list[int]:
    points = []
    n = CHUNK_PATHS
    while n < n_paths:
        points.append(n)
        n *= 2
    points.append(n_paths)
    return points


def _iter_chunks(n_paths: int):
    start = 0
    while start < n_paths:
        count = min(CHUNK_PATHS, n_paths - start)
        yield start, count
        start += count


def _run_paths(
    settings: RunSettings, worker: Callable[[int, int], np.ndarray], method: str
) -> tuple[RunningStats, ConvergenceTrace]:
    """Map ``worker`` over path chunks and reduce in fixed chunk order."""
    chunks = list(_iter_chunks(settings.n_paths))
    marks = set(_checkpoints(settings.n_paths))

    def guarded(start: int, count: int) -> np.ndarray:
        try:
            return worker(start, count)
        except NonFinite as exc:
            raise NonFinite(f"paths [{start}, {start + count}): {exc}") from exc

    if settings.threads > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            futures = [pool.submit(guarded, start, count) for start, count in chunks]
            results = [f.result() for f in futures]
    else:
        results = [guarded(start, count) for start, count in chunks]

    stats = RunningStats()
    trace = ConvergenceTrace(method=method)
    for (start, count), values in zip(chunks, results):
        stats.add_chunk(values)
        if stats.n in marks:
            trace.rows.append((stats.n, stats.mean, stats.std_error))
    return stats, trace


@dataclass
class _Plan:
    """Everything resolved once per estimation run."""

    model: ModelSpec
    sim_model: ModelSpec
    curves: MeanFieldCurves
    discount: float
    weight_params: dict
    weight_method: str
    det_correction: float | None = None  # RK4 u(T) for deterministic-u weights


def _prepare(model: ModelSpec, payoff: Payoff, settings: RunSettings) -> _Plan:
    grid = settings.grid
    curves = resolve_curves(
        model,
        settings.x0,
        grid,
        resolver=settings.resolver,
        n_particles=settings.n_particles,
        max_iters=settings.picard_max_iters,
        tol=settings.picard_tol,
        seed=settings.seed,
    )
    wparams = dict(model.params)
    wparams["x"] = settings.x0
    wparams["T"] = grid.horizon
    if payoff.strike is not None:
        wparams["K"] = payoff.strike
    method = "generic" if settings.use_generic_weight else model.weight_method
    plan = _Plan(
        model=model,
        sim_model=risk_neutral_simulation_spec(model),
        curves=curves,
        discount=discount_factor(model, grid.horizon),
        weight_params=wparams,
        weight_method=method or "generic",
    )
    if plan.weight_method == "mean_drift":
        f, fp = drift_shape(model)
        plan.det_correction = mean_drift_correction(f, fp, settings.x0, grid)
    return plan


def _weight_values(plan: _Plan, settings: RunSettings, dw: np.ndarray, chunk) -> np.ndarray:
    grid = settings.grid
    method = plan.weight_method
    p = plan.weight_params
    if method == "mean_vol":
        pair = gaussian_pair(plan.curves, grid, dw)
        return mean_vol_weight(pair, plan.curves, grid, p).value
    if method == "mean_drift":
        base = classical_weight_values(dw, p["sigma"], settings.x0, grid.horizon)
        return plan.det_correction * base
    if method == "bs_dividend":
        return dividend_weight_values(
            dw, plan.curves, grid, p, convention=settings.weight_convention
        )
    if method == "generic":
        if chunk.table is None:
            raise DeltaEngineError(
                "the generic weight needs per-step coefficient tables"
            )
        return generic_weight_values(
            chunk.table, chunk.x, chunk.y, grid, dw, floor=plan.model.ellipticity_floor
        )
    raise DeltaEngineError(f"no weight method {method!r}")


def estimate_price(
    model: ModelSpec, payoff: Payoff, settings: RunSettings
) -> DeltaEstimate:
    """Plain (discounted, for the dividend model) Monte Carlo price."""
    t0 = time.perf_counter()
    plan = _prepare(model, payoff, settings)
    grid = settings.grid

    def worker(start, count):
        dw = increment_block(settings.seed, start, count, grid)
        chunk = simulate_chunk(
            plan.sim_model, plan.curves, settings.x0, grid, dw, settings.log_euler
        )
        return plan.discount * payoff.evaluate(chunk.x[:, -1])

    stats, _ = _run_paths(settings, worker, "price")
    return DeltaEstimate(
        method="price",
        value=stats.mean,
        std_error=stats.std_error,
        n_paths=settings.n_paths,
        n_steps=grid.n_steps,
        seed=settings.seed,
        wall_time=time.perf_counter() - t0,
    )


def estimate_delta_malliavin(
    model: ModelSpec, payoff: Payoff, settings: RunSettings
) -> tuple[DeltaEstimate, ConvergenceTrace]:
    """Weighted-payoff delta estimator E[Phi(X_T) w]."""
    t0 = time.perf_counter()
    plan = _prepare(model, payoff, settings)
    grid = settings.grid
    needs_tangent = plan.weight_method == "generic"

    def worker(start, count):
        dw = increment_block(settings.seed, start, count, grid)
        chunk = simulate_chunk(
            plan.sim_model,
            plan.curves,
            settings.x0,
            grid,
            dw,
            settings.log_euler,
            need_tangent=needs_tangent,
        )
        w = _weight_values(plan, settings, dw, chunk)
        return plan.discount * payoff.evaluate(chunk.x[:, -1]) * w

    stats, trace = _run_paths(settings, worker, "malliavin")
    est = DeltaEstimate(
        method="malliavin",
        value=stats.mean,
        std_error=stats.std_error,
        n_paths=settings.n_paths,
        n_steps=grid.n_steps,
        seed=settings.seed,
        wall_time=time.perf_counter() - t0,
    )
    return est, trace


def estimate_delta_fd(
    model: ModelSpec,
    payoff: Payoff,
    settings: RunSettings,
    h: float,
    scheme: str = "central",
) -> tuple[DeltaEstimate, ConvergenceTrace]:
    """Finite-difference delta with per-path difference quotients.

    Under common random numbers (the default) the same noise streams drive
    the base and bumped initial conditions and the mean curves are
    re-resolved at each bumped x.  With ``fd_crn=False`` the bumped legs use
    disjoint stream blocks, reproducing the naive two-run estimator.
    """
    if scheme not in ("forward", "central"):
        raise ValueError(f"unknown finite-difference scheme {scheme!r}")
    if not h > 0.0:
        raise ValueError("bump size h must be positive")
    t0 = time.perf_counter()
    plan = _prepare(model, payoff, settings)
    grid = settings.grid

    def curves_at(x):
        return resolve_curves(
            model,
            x,
            grid,
            resolver=settings.resolver,
            n_particles=settings.n_particles,
            max_iters=settings.picard_max_iters,
            tol=settings.picard_tol,
            seed=settings.seed,
        )

    curves_up = curves_at(settings.x0 + h)
    curves_dn = curves_at(settings.x0 - h) if scheme == "central" else None

    def terminal(start, count, x0, curves, leg):
        offset = 0 if settings.fd_crn else leg * INDEPENDENT_LEG_OFFSET
        dw = increment_block(settings.seed, start + offset, count, grid)
        chunk = simulate_chunk(
            plan.sim_model, curves, x0, grid, dw, settings.log_euler
        )
        return chunk.x[:, -1]

    def worker(start, count):
        up = payoff.evaluate(terminal(start, count, settings.x0 + h, curves_up, 1))
        if scheme == "forward":
            base = payoff.evaluate(terminal(start, count, settings.x0, plan.curves, 0))
            quot = (up - base) / h
        else:
            dn = payoff.evaluate(
                terminal(start, count, settings.x0 - h, curves_dn, 2)
            )
            quot = (up - dn) / (2.0 * h)
        return plan.discount * quot

    method = f"fd_{scheme}"
    stats, trace = _run_paths(settings, worker, method)
    est = DeltaEstimate(
        method=method,
        value=stats.mean,
        std_error=stats.std_error,
        n_paths=settings.n_paths,
        n_steps=grid.n_steps,
        seed=settings.seed,
        h=h,
        wall_time=time.perf_counter() - t0,
    )
    return est, trace


def _pathwise_with_trace(
    model: ModelSpec, payoff: Payoff, settings: RunSettings
) -> tuple[DeltaEstimate, ConvergenceTrace]:
    if not payoff.differentiable:
        raise PayoffNotDifferentiable(
            "pathwise delta needs a payoff with an a.e. derivative"
        )
    t0 = time.perf_counter()
    plan = _prepare(model, payoff, settings)
    grid = settings.grid

    def worker(start, count):
        dw = increment_block(settings.seed, start, count, grid)
        chunk = simulate_chunk(
            plan.sim_model,
            plan.curves,
            settings.x0,
            grid,
            dw,
            settings.log_euler,
            need_jacobian=True,
        )
        return plan.discount * payoff.derivative(chunk.x[:, -1]) * chunk.jac[:, -1]

    stats, trace = _run_paths(settings, worker, "pathwise")
    est = DeltaEstimate(
        method="pathwise",
        value=stats.mean,
        std_error=stats.std_error,
        n_paths=settings.n_paths,
        n_steps=grid.n_steps,
        seed=settings.seed,
        wall_time=time.perf_counter() - t0,
    )
    return est, trace


def estimate_delta_pathwise(
    model: ModelSpec, payoff: Payoff, settings: RunSettings
) -> DeltaEstimate:
    """Pathwise (tangent) delta E[Phi'(X_T) J_T] for differentiable payoffs.

    Uses the full Jacobian including the mean-field feedback terms, so it is
    a valid independent comparator for the weighted estimator whenever the
    payoff admits an almost-everywhere derivative.
    """
    est, _ = _pathwise_with_trace(model, payoff, settings)
    return est


@dataclass
class MethodRun:
    estimate: DeltaEstimate | None
    trace: ConvergenceTrace | None
    error: str | None = None


def compare_methods(
    model: ModelSpec,
    payoff: Payoff,
    settings: RunSettings,
    methods: Sequence[str] = ("malliavin",),
    h_list: Sequence[float] = (),
) -> list[MethodRun]:
    """Run the requested estimators on a shared seed, one after another.

    Finite-difference methods run once per bump size in ``h_list``.  A
    failing method is recorded as a failed row instead of aborting the
    comparison.
    """
    rows: list[MethodRun] = []
    for name in methods:
        if name not in METHOD_NAMES:
            raise ValueError(f"unknown method {name!r}; expected one of {METHOD_NAMES}")
        try:
            if name == "malliavin":
                est, trace = estimate_delta_malliavin(model, payoff, settings)
                rows.append(MethodRun(est, trace))
            elif name in ("fd_forward", "fd_central"):
                scheme = name.split("_", 1)[1]
                for h in h_list:
                    est, trace = estimate_delta_fd(model, payoff, settings, h, scheme)
                    rows.append(MethodRun(est, trace))
            else:
                est, trace = _pathwise_with_trace(model, payoff, settings)
                rows.append(MethodRun(est, trace))
        except DeltaEngineError as exc:
            rows.append(MethodRun(None, None, error=f"{name}: {exc}"))
    return rows


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

ESTIMATE_CSV_HEADER = "method,n_paths,n_steps,h,estimate,std_error,seed,wall_time_ms"
TRACE_CSV_HEADER = "method,n,estimate,std_error"


def write_estimates_csv(
    rows: Sequence[MethodRun], out: TextIO, include_timings: bool = False
) -> None:
    """Write the estimate table.

    The wall_time_ms column is left empty unless ``include_timings`` is set:
    timing is not reproducible and the default output is required to be
    byte-identical across reruns of the same configuration.
    """
    out.write(ESTIMATE_CSV_HEADER + "\n")
    for row in rows:
        if row.estimate is None:
            continue
        e = row.estimate
        h_txt = "" if e.h is None else f"{e.h:.17g}"
        wall = f"{e.wall_time * 1000.0:.3f}" if include_timings else ""
        out.write(
            f"{e.method},{e.n_paths},{e.n_steps},{h_txt},"
            f"{e.value:.17g},{e.std_error:.17g},{e.seed},{wall}\n"
        )


def write_trace_csv(rows: Sequence[MethodRun], out: TextIO) -> None:
    out.write(TRACE_CSV_HEADER + "\n")
    for row in rows:
        if row.trace is None:
            continue
        label = row.trace.method
        if row.estimate is not None and row.estimate.h is not None:
            label = f"{label}(h={row.estimate.h:g})"
        for n, est, se in row.trace.rows:
            out.write(f"{label},{n},{est:.17g},{se:.17g}\n")

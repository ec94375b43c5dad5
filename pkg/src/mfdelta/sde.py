"""Path simulation: state, first-variation (tangent) and full Jacobian.

With the mean curves resolved up front, the state follows the scalar SDE

    dX = b(t, X, rho_t) dt + sigma(t, X, pi_t) dW,        X_0 = x,

its tangent is the homogeneous linear equation dY = A Y dt + B Y dW with
A_t = d1 b and B_t = d1 sigma evaluated along the path, and the full
initial-condition Jacobian picks up the mean-field feedback terms

    dJ = (A J + alpha) dt + (B J + beta) dW,              J_0 = 1,

where alpha = d2 b * drho/dx and beta = d2 sigma * dpi/dx.  Everything is
stepped by Euler-Maruyama on the shared grid; models that declare
coefficient tables (all catalog models) run through the backend kernels,
arbitrary coefficient closures fall back to vectorized NumPy stepping.

An optional log-space stepping mode is available for geometric models: the
state and tangent then follow the exact per-step stochastic exponential,
which keeps both strictly positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import EllipticityFloor, NonFinite, TangentDegenerate
from .grid import TimeGrid
from .meanfield import ELLIPTICITY_FLOOR, MeanFieldCurves
from .rng import NoiseGrid


@dataclass(frozen=True)
class StepCoeffs:
    """Per-step scalar coefficient tables of a state-linear model.

    The model must satisfy b(t_i, x, rho_i) = drift[i] * x and
    sigma(t_i, x, pi_i) = vol[i] * x on the grid; the mean-field feedback
    terms of the Jacobian are then alpha[i] * X_i and beta[i] * X_i.
    """

    drift: np.ndarray
    vol: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @staticmethod
    def build(drift, vol, alpha, beta) -> "StepCoeffs":
        as_c = lambda a: np.ascontiguousarray(np.asarray(a, dtype=np.float64))
        return StepCoeffs(as_c(drift), as_c(vol), as_c(alpha), as_c(beta))


@dataclass
class ChunkPaths:
    """Simulated arrays for a contiguous block of paths, shape (C, M+1)."""

    x: np.ndarray
    y: np.ndarray | None
    jac: np.ndarray | None
    table: StepCoeffs | None
    # Coefficient values along the path, shape (C, M); for table models the
    # per-step scalars broadcast and these stay None.
    drift_slope: np.ndarray | None = None
    vol_slope: np.ndarray | None = None
    drift_feedback: np.ndarray | None = None
    vol_feedback: np.ndarray | None = None


@dataclass
class PathBundle:
    """One path's state, tangent, Jacobian and coefficient processes."""

    x_path: np.ndarray
    y_path: np.ndarray
    jac_path: np.ndarray
    drift_slope: np.ndarray  # A_i = d1 b along the path
    vol_slope: np.ndarray  # B_i = d1 sigma along the path
    drift_feedback: np.ndarray  # alpha_i = d2 b * drho/dx
    vol_feedback: np.ndarray  # beta_i = d2 sigma * dpi/dx
    sigma_along: np.ndarray  # sigma(t_i, X_i, pi_i) at the left nodes
    noise: NoiseGrid


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        bad = np.argwhere(~np.isfinite(arr))
        raise NonFinite(f"{what} overflowed (first bad entry at path {bad[0][0]})")


def _check_sigma_floor(table: StepCoeffs, x: np.ndarray, floor: float) -> None:
    if floor <= 0.0:
        return
    sig_min = np.min(np.abs(x[:, :-1]) * np.abs(table.vol)[None, :])
    if sig_min < floor:
        raise EllipticityFloor(
            f"diffusion evaluation {sig_min:.3e} fell below the floor "
            f"{floor:g} during path simulation"
        )


def simulate_chunk(
    model,
    curves: MeanFieldCurves,
    x0: float,
    grid: TimeGrid,
    dw: np.ndarray,
    log_euler: bool = False,
    need_tangent: bool = False,
    need_jacobian: bool = False,
) -> ChunkPaths:
    """Simulate a block of paths sharing the increments ``dw`` of shape (C, M)."""
    dw = np.ascontiguousarray(dw, dtype=np.float64)
    floor = getattr(model, "ellipticity_floor", ELLIPTICITY_FLOOR)
    if model.step_coeffs is not None:
        table = model.step_coeffs(curves, grid)
        return _simulate_table(
            table, x0, grid, dw, log_euler, need_tangent, need_jacobian, floor
        )
    if log_euler:
        raise ValueError("log-space stepping requires a model with coefficient tables")
    return _simulate_closures(model, curves, x0, grid, dw, need_tangent, need_jacobian, floor)


def _simulate_table(table, x0, grid, dw, log_euler, need_tangent, need_jacobian, floor):
    # overflow is detected post hoc via the finiteness checks below
    with np.errstate(over="ignore", invalid="ignore"):
        return _simulate_table_inner(
            table, x0, grid, dw, log_euler, need_tangent, need_jacobian, floor
        )


def _simulate_table_inner(table, x0, grid, dw, log_euler, need_tangent, need_jacobian, floor):
    dt = grid.dt
    if log_euler:
        ldrift = (table.drift - 0.5 * table.vol * table.vol) * dt
        ldrift = np.ascontiguousarray(ldrift)
        x = np.exp(backend.log_accumulate(math.log(x0), ldrift, table.vol, dw))
        y = jac = None
        if need_tangent or need_jacobian:
            y = np.exp(backend.log_accumulate(0.0, ldrift, table.vol, dw))
        if need_jacobian:
            jac = backend.table_jacobian_from_paths(
                x, dt, table.drift, table.vol, table.alpha, table.beta, dw
            )
    elif need_tangent or need_jacobian:
        x, y, jac = backend.table_paths(
            x0, dt, table.drift, table.vol, table.alpha, table.beta, dw
        )
        if not need_jacobian:
            jac = None
    else:
        x = backend.table_paths_x(x0, dt, table.drift, table.vol, dw)
        y = jac = None
    _check_finite(x[:, -1], "state path")
    _check_sigma_floor(table, x, floor)
    if y is not None:
        _check_finite(y[:, -1], "tangent path")
        if np.any(y == 0.0):
            raise TangentDegenerate("tangent path hit zero exactly")
    if jac is not None:
        _check_finite(jac[:, -1], "Jacobian path")
    return ChunkPaths(x=x, y=y, jac=jac, table=table)


def _simulate_closures(model, curves, x0, grid, dw, need_tangent, need_jacobian, floor):
    with np.errstate(over="ignore", invalid="ignore"):
        return _simulate_closures_inner(
            model, curves, x0, grid, dw, need_tangent, need_jacobian, floor
        )


def _simulate_closures_inner(model, curves, x0, grid, dw, need_tangent, need_jacobian, floor):
    c, m = dw.shape
    dt = grid.dt
    rho, pi = curves.rho, curves.pi
    drho, dpi = curves.drho_dx, curves.dpi_dx
    x = np.empty((c, m + 1))
    x[:, 0] = x0
    y = jac = None
    a_along = b_along = al_along = be_along = None
    if need_tangent or need_jacobian:
        y = np.empty((c, m + 1))
        y[:, 0] = 1.0
        a_along = np.empty((c, m))
        b_along = np.empty((c, m))
        al_along = np.empty((c, m))
        be_along = np.empty((c, m))
    if need_jacobian:
        jac = np.empty((c, m + 1))
        jac[:, 0] = 1.0
    sig_min = math.inf
    for i in range(m):
        t_i = i * dt
        xa = x[:, i]
        w = dw[:, i]
        b_i = np.broadcast_to(np.asarray(model.b(t_i, xa, rho[i]), dtype=float), xa.shape)
        s_i = np.broadcast_to(np.asarray(model.sigma(t_i, xa, pi[i]), dtype=float), xa.shape)
        sig_min = min(sig_min, float(np.min(np.abs(s_i))))
        x[:, i + 1] = (xa + b_i * dt) + s_i * w
        if y is not None:
            a_i = np.broadcast_to(
                np.asarray(model.d1_b(t_i, xa, rho[i]), dtype=float), xa.shape
            )
            bs_i = np.broadcast_to(
                np.asarray(model.d1_sigma(t_i, xa, pi[i]), dtype=float), xa.shape
            )
            al_i = np.asarray(model.d2_b(t_i, xa, rho[i]), dtype=float) * drho[i]
            be_i = np.asarray(model.d2_sigma(t_i, xa, pi[i]), dtype=float) * dpi[i]
            al_i = np.broadcast_to(al_i, xa.shape)
            be_i = np.broadcast_to(be_i, xa.shape)
            a_along[:, i] = a_i
            b_along[:, i] = bs_i
            al_along[:, i] = al_i
            be_along[:, i] = be_i
            ya = y[:, i]
            y[:, i + 1] = (ya + (a_i * ya) * dt) + (bs_i * ya) * w
            if jac is not None:
                ja = jac[:, i]
                jac[:, i + 1] = (ja + (a_i * ja + al_i) * dt) + (bs_i * ja + be_i) * w
    if floor > 0.0 and sig_min < floor:
        raise EllipticityFloor(
            f"diffusion evaluation {sig_min:.3e} fell below the floor "
            f"{floor:g} during path simulation"
        )
    _check_finite(x[:, -1], "state path")
    if y is not None:
        _check_finite(y[:, -1], "tangent path")
        if np.any(y == 0.0):
            raise TangentDegenerate("tangent path hit zero exactly")
    if jac is not None:
        _check_finite(jac[:, -1], "Jacobian path")
    return ChunkPaths(
        x=x,
        y=y,
        jac=jac,
        table=None,
        drift_slope=a_along,
        vol_slope=b_along,
        drift_feedback=al_along,
        vol_feedback=be_along,
    )


def _coefficients_along(chunk: ChunkPaths, row: int) -> tuple:
    """A, B, alpha, beta arrays of one path, shape (M,)."""
    if chunk.table is not None:
        t = chunk.table
        xa = chunk.x[row, :-1]
        return t.drift, t.vol, t.alpha * xa, t.beta * xa
    return (
        chunk.drift_slope[row],
        chunk.vol_slope[row],
        chunk.drift_feedback[row],
        chunk.vol_feedback[row],
    )


def simulate_bundle(
    model,
    curves: MeanFieldCurves,
    x0: float,
    grid: TimeGrid,
    noise: NoiseGrid,
    log_euler: bool = False,
) -> PathBundle:
    """Simulate one path's full bundle from its noise grid."""
    dw = noise.increments[None, :]
    chunk = simulate_chunk(
        model, curves, x0, grid, dw, log_euler, need_tangent=True, need_jacobian=True
    )
    a, b, alpha, beta = _coefficients_along(chunk, 0)
    x_left = chunk.x[0, :-1]
    if chunk.table is not None:
        sigma_along = chunk.table.vol * x_left
    else:
        t = grid.left_nodes()
        sigma_along = np.array(
            [model.sigma(t[i], x_left[i], curves.pi[i]) for i in range(grid.n_steps)],
            dtype=float,
        )
    return PathBundle(
        x_path=chunk.x[0],
        y_path=chunk.y[0],
        jac_path=chunk.jac[0],
        drift_slope=np.asarray(a, dtype=float).copy(),
        vol_slope=np.asarray(b, dtype=float).copy(),
        drift_feedback=np.asarray(alpha, dtype=float).copy(),
        vol_feedback=np.asarray(beta, dtype=float).copy(),
        sigma_along=sigma_along,
        noise=noise,
    )


def simulate_x(model, curves, x0, grid, noise: NoiseGrid) -> np.ndarray:
    """Euler path of the state alone; X_0 = x0, length M+1."""
    chunk = simulate_chunk(model, curves, x0, grid, noise.increments[None, :])
    return chunk.x[0]


def simulate_tangent(model, curves, x_path, grid, noise: NoiseGrid):
    """Tangent path and the coefficient processes evaluated along x_path.

    Returns (y_path, drift_slope, vol_slope, drift_feedback, vol_feedback).
    """
    m = grid.n_steps
    dt = grid.dt
    dw = noise.increments
    xa = x_path[:-1]
    t = grid.left_nodes()
    a = _eval_along(model.d1_b, t, xa, curves.rho[:-1])
    b = _eval_along(model.d1_sigma, t, xa, curves.pi[:-1])
    alpha = _eval_along(model.d2_b, t, xa, curves.rho[:-1]) * curves.drho_dx[:-1]
    beta = _eval_along(model.d2_sigma, t, xa, curves.pi[:-1]) * curves.dpi_dx[:-1]
    y = np.empty(m + 1)
    y[0] = 1.0
    for i in range(m):
        ya = y[i]
        y[i + 1] = (ya + (a[i] * ya) * dt) + (b[i] * ya) * dw[i]
    if np.any(y == 0.0):
        raise TangentDegenerate("tangent path hit zero exactly")
    _check_finite(y[-1:], "tangent path")
    return y, a, b, alpha, beta


def simulate_jacobian(model, curves, x_path, grid, noise: NoiseGrid) -> np.ndarray:
    """Full Jacobian path including the mean-field feedback terms."""
    _, a, b, alpha, beta = simulate_tangent(model, curves, x_path, grid, noise)
    m = grid.n_steps
    dt = grid.dt
    dw = noise.increments
    jac = np.empty(m + 1)
    jac[0] = 1.0
    for i in range(m):
        ja = jac[i]
        jac[i + 1] = (ja + (a[i] * ja + alpha[i]) * dt) + (b[i] * ja + beta[i]) * dw[i]
    _check_finite(jac[-1:], "Jacobian path")
    return jac


def _eval_along(func, t, xa, curve_left):
    vals = np.empty_like(xa)
    for i in range(len(xa)):
        vals[i] = func(t[i], xa[i], curve_left[i])
    return vals


def liouville_check(
    y_path,
    drift_slope,
    vol_slope,
    grid: TimeGrid,
    noise: NoiseGrid,
    exponent_variant: str = "ito",
) -> float:
    """Relative gap between Y_T and its stochastic-exponential form.

    The scalar tangent solves a linear SDE, so on the same noise it should
    track exp(sum (A - B^2/2) dt + sum B dW); the returned value is
    |Y_T - E_T| / |E_T|.  The gap measures the Euler stepping error of the
    tangent recursion (strong order 1/2 in dt for stochastic B).

    ``exponent_variant="plus"`` flips the quadratic-variation term to
    +B^2/2.  That form does NOT reproduce geometric Brownian motion for
    constant B; it exists purely as a diagnostic so the two sign
    conventions can be compared numerically, and is never asserted on.
    """
    if exponent_variant not in ("ito", "plus"):
        raise ValueError("exponent_variant must be 'ito' or 'plus'")
    half = -0.5 if exponent_variant == "ito" else 0.5
    dt = grid.dt
    expo = float(
        np.sum((drift_slope + half * vol_slope * vol_slope) * dt)
        + np.sum(vol_slope * noise.increments)
    )
    ref = math.exp(expo)
    return abs(float(y_path[-1]) - ref) / abs(ref)

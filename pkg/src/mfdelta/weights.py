"""Malliavin weights for initial-condition sensitivities.

The estimators compute delta = d/dx E[Phi(X_T)] as E[Phi(X_T) w] for a
payoff-independent random weight w.  For a scalar mean-field SDE the
Bismut-Elworthy-Li representation of the weight, with the uniform
averaging choice a(s) = 1/T, reads

    w = (1/T) int_0^T sigma^{-1}(s, X_s, pi_s) Y_s u(T) deltaW_s,

where Y is the tangent process and u(T) is the correction process

    u(T) = 1 + int_0^T Y_s^{-1} (alpha_s - B_s beta_s) ds
             + int_0^T Y_s^{-1} beta_s dW_s,

which collapses to 1 when the coefficients do not depend on the mean
curves.  Because u(T) looks into the whole path, the integral above is a
Skorokhod (anticipative) integral; integrating by parts turns it into the
implementable Ito-plus-correction form

    w = (1/T) [ int sigma^{-1} Y dW * u(T) - int sigma^{-1} Y_s D_s u(T) ds ],

with D_s the Malliavin derivative.  The generic assembly below realizes
D_s u(T) by re-simulating u with a single bumped Brownian increment per
grid node; the catalog models additionally ship the closed-form weights
this machinery reduces to.

All stochastic integrals use left-point (Ito) quadrature; purely
deterministic time integrals use the trapezoid rule.
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
from .sde import PathBundle, StepCoeffs, simulate_bundle

# Bump size of the difference-quotient Malliavin derivative, relative to the
# Brownian step scale sqrt(dt).
DSU_EPS_REL = 1e-4

UNIFORM_AVERAGING = "uniform"  # a(s) = 1/T, the only shipped averaging choice


def dsu_eps(grid: TimeGrid) -> float:
    return DSU_EPS_REL * math.sqrt(grid.dt)


def trapezoid(values: np.ndarray, dt: float) -> float:
    """Trapezoid rule on uniformly spaced node values."""
    return float(dt * (np.sum(values) - 0.5 * (values[0] + values[-1])))


@dataclass(frozen=True)
class CorrectionProcess:
    """u(T) split into its defining pieces; u_final = 1 + lebesgue + ito."""

    u_final: float
    lebesgue_part: float
    ito_part: float


@dataclass(frozen=True)
class MalliavinWeight:
    """A per-path weight value (scalar or vector across paths)."""

    value: np.ndarray | float
    method: str
    averaging: str = UNIFORM_AVERAGING


@dataclass(frozen=True)
class GaussianPair:
    """The Wiener integrals F = int rho dW and G = int rho^{-1} dW.

    For deterministic mean curves (F, G) is a centered Gaussian vector whose
    covariance matrix has off-diagonal exactly T; ``covariance`` stores the
    deterministic 2x2 matrix, the integrals themselves may be vectors across
    paths.
    """

    f_integral: np.ndarray | float
    g_integral: np.ndarray | float
    covariance: np.ndarray

    def covariance_determinant(self) -> float:
        c = self.covariance
        return float(c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0])


# ---------------------------------------------------------------------------
# Correction process and its Malliavin derivative
# ---------------------------------------------------------------------------


def correction_process(bundle: PathBundle, grid: TimeGrid) -> CorrectionProcess:
    """Left-point quadrature of the correction integrals along one path."""
    y_left = bundle.y_path[:-1]
    if np.any(y_left == 0.0):
        raise TangentDegenerate("tangent path vanished; u(T) undefined")
    num = bundle.drift_feedback - bundle.vol_slope * bundle.vol_feedback
    leb = float(np.sum((num / y_left) * grid.dt))
    ito = float(np.sum((bundle.vol_feedback / y_left) * bundle.noise.increments))
    return CorrectionProcess(u_final=(1.0 + leb) + ito, lebesgue_part=leb, ito_part=ito)


def correction_noise_derivative(
    model,
    curves: MeanFieldCurves,
    x: float,
    grid: TimeGrid,
    noise: NoiseGrid,
    s_index: int,
    eps: float,
) -> float:
    """Difference-quotient D_s u(T) for a single grid index.

    Re-simulates the whole path with the increment dW_{s_index} shifted by
    ``eps`` (the direction 1_{[t_s, t_{s+1})}/dt) and recomputes u(T).  The
    batched assembly in ``generic_weight_values`` evaluates this at every
    node with shared prefixes; this entry point is the simple reference.
    """
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    if not 0 <= s_index < grid.n_steps:
        raise ValueError(f"s_index {s_index} outside [0, {grid.n_steps})")
    base = simulate_bundle(model, curves, x, grid, noise)
    u_base = correction_process(base, grid).u_final
    bumped_inc = noise.increments.copy()
    bumped_inc[s_index] = bumped_inc[s_index] + eps
    bumped_noise = NoiseGrid(
        seed=noise.seed, path_index=noise.path_index, dt=noise.dt, increments=bumped_inc
    )
    bumped = simulate_bundle(model, curves, x, grid, bumped_noise)
    u_bumped = correction_process(bumped, grid).u_final
    return (u_bumped - u_base) / eps


# ---------------------------------------------------------------------------
# Generic Ito-plus-correction weight
# ---------------------------------------------------------------------------


def generic_weight_values(
    table: StepCoeffs,
    x: np.ndarray,
    y: np.ndarray,
    grid: TimeGrid,
    dw: np.ndarray,
    eps: float | None = None,
    floor: float = ELLIPTICITY_FLOOR,
) -> np.ndarray:
    """Assemble the generic weight for a chunk of table-model paths.

    ``x`` and ``y`` are plain-Euler paths of shape (C, M+1) simulated from
    ``dw``; the O(M^2) Malliavin-derivative sweep runs in the active kernel
    backend.  Returns one weight per path.
    """
    if eps is None:
        eps = dsu_eps(grid)
    if np.any(y == 0.0):
        raise TangentDegenerate("tangent path vanished; generic weight undefined")
    x_left = x[:, :-1]
    sig_vals = table.vol[None, :] * x_left
    if floor > 0.0 and np.min(np.abs(sig_vals)) < floor:
        raise EllipticityFloor("sigma^{-1} evaluation below the ellipticity floor")
    leb, ito, dsu = backend.correction_noise_derivatives(
        x, y, grid.dt, table.drift, table.vol, table.alpha, table.beta, dw, eps
    )
    u_final = (1.0 + leb) + ito
    inv_sigma_y = y[:, :-1] / sig_vals
    ito_leg = np.sum(inv_sigma_y * dw, axis=1)
    corr_leg = np.sum((inv_sigma_y * dsu) * grid.dt, axis=1)
    w = (ito_leg * u_final - corr_leg) / grid.horizon
    if not np.isfinite(w).all():
        raise NonFinite("generic weight produced non-finite values")
    return w


def generic_weight(
    bundle: PathBundle, corr: CorrectionProcess, grid: TimeGrid, dsu: np.ndarray
) -> MalliavinWeight:
    """Per-path generic weight from a correction process and D_s u values.

    ``dsu`` holds the Malliavin-derivative approximations on the M left
    nodes, e.g. from ``correction_noise_derivative``.
    """
    inv_sigma_y = bundle.y_path[:-1] / bundle.sigma_along
    ito_leg = float(np.sum(inv_sigma_y * bundle.noise.increments))
    corr_leg = float(np.sum((inv_sigma_y * dsu) * grid.dt))
    value = (ito_leg * corr.u_final - corr_leg) / grid.horizon
    return MalliavinWeight(value=value, method="generic")


# ---------------------------------------------------------------------------
# Closed-form weights of the catalog models
# ---------------------------------------------------------------------------


def classical_weight_values(dw: np.ndarray, sigma: float, x: float, horizon: float):
    """W_T / (sigma x T): the classical lognormal-model weight."""
    w_t = np.sum(dw, axis=-1)
    return w_t / (sigma * x * horizon)


def mean_drift_correction(f, f_prime, x: float, grid: TimeGrid) -> float:
    """Deterministic u(T) = 1 + x int_0^T f'(rho_s) drho_s/dx ds by RK4.

    The mean curve, its x-derivative and the correction integral are
    co-integrated as one ODE system, so the result carries RK4 accuracy
    rather than the O(dt) of the path quadrature.
    """

    def rhs(state):
        r, s, _ = state
        fr = f(r)
        return np.array([r * fr, (fr + r * f_prime(r)) * s, f_prime(r) * s])

    dt = grid.dt
    state = np.array([float(x), 1.0, 0.0])
    for _ in range(grid.n_steps):
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * dt * k1)
        k3 = rhs(state + 0.5 * dt * k2)
        k4 = rhs(state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.isfinite(state).all():
        raise NonFinite("correction ODE overflowed")
    return 1.0 + x * float(state[2])


def mean_drift_weight(
    bundle: PathBundle,
    corr: CorrectionProcess,
    grid: TimeGrid,
    params,
    u_final: float | None = None,
) -> MalliavinWeight:
    """w = u(T) W_T / (sigma x T) for models whose u(T) is deterministic.

    Requires beta identically zero (no mean dependence in the diffusion).
    When ``u_final`` is omitted the path-quadrature value from ``corr`` is
    used; the estimators pass the RK4 value from ``mean_drift_correction``.
    """
    if np.any(bundle.vol_feedback != 0.0):
        raise ValueError("mean-drift weight requires a mean-free diffusion (beta = 0)")
    u = corr.u_final if u_final is None else u_final
    sigma = float(params["sigma"])
    x = float(bundle.x_path[0])
    w_t = float(np.sum(bundle.noise.increments))
    value = u * w_t / (sigma * x * grid.horizon)
    return MalliavinWeight(value=value, method="mean_drift")


def gaussian_pair(
    curves: MeanFieldCurves, grid: TimeGrid, increments: np.ndarray
) -> GaussianPair:
    """F and G quadratures against one or many paths' increments.

    ``increments`` has shape (M,) or (C, M); the Ito sums use left-node
    curve values, the covariance entries use trapezoid time integrals.
    """
    rho_left = curves.rho[:-1]
    f_int = np.sum(increments * rho_left, axis=-1)
    g_int = np.sum(increments * (1.0 / rho_left), axis=-1)
    rho = curves.rho
    cov = np.array(
        [
            [trapezoid(rho * rho, grid.dt), grid.horizon],
            [grid.horizon, trapezoid(1.0 / (rho * rho), grid.dt)],
        ]
    )
    # Cauchy-Schwarz: int rho^2 * int rho^{-2} >= T^2, up to rounding
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    if det < -1e-12 * cov[0, 0] * cov[1, 1]:
        raise ValueError(f"Gaussian pair covariance not positive semidefinite ({det:.3e})")
    return GaussianPair(f_integral=f_int, g_integral=g_int, covariance=cov)


def mean_vol_weight(
    pair: GaussianPair, curves: MeanFieldCurves, grid: TimeGrid, params
) -> MalliavinWeight:
    """Closed-form weight of the mean-proportional-volatility model.

    w = (1/(sigma x T)) [ (1 - sigma^2 int rho^2 + sigma F) G - sigma T ].
    """
    if np.min(curves.rho) <= 0.0:
        raise ValueError("mean_vol weight requires a strictly positive mean curve")
    sigma = float(params["sigma"])
    x = float(params["x"])
    horizon = grid.horizon
    v_int = trapezoid(curves.rho * curves.rho, grid.dt)
    u = (1.0 - (sigma * sigma) * v_int) + sigma * pair.f_integral
    value = (u * pair.g_integral - sigma * horizon) / (sigma * x * horizon)
    return MalliavinWeight(value=value, method="mean_vol")


def digital_threshold(params, curves: MeanFieldCurves, grid: TimeGrid) -> float:
    """Threshold d(x) with {X_T >= K} = {F >= d(x)} for the mean-vol model."""
    k = float(params["K"])
    x = float(params["x"])
    if k <= 0.0 or x <= 0.0:
        raise ValueError("digital threshold requires positive K and x")
    mu = float(params["mu"])
    sigma = float(params["sigma"])
    v_int = trapezoid(curves.rho * curves.rho, grid.dt)
    return (math.log(k / x) - mu * grid.horizon + 0.5 * sigma * sigma * v_int) / sigma


# ---------------------------------------------------------------------------
# Dividend-model weight
# ---------------------------------------------------------------------------

DIVIDEND_CONVENTIONS = ("cancelled", "literal")


def dividend_weight_values(
    dw: np.ndarray,
    curves: MeanFieldCurves,
    grid: TimeGrid,
    params,
    convention: str = "cancelled",
):
    """Weight of the dividend model against risk-neutral simulation noise.

    The default "cancelled" convention reads the weight's stochastic
    integral against the physical-measure Brownian motion and converts it
    to the simulation measure, under which the market-price-of-risk terms
    cancel, leaving

        Z = (q/(x^2 sigma)) int e^{-mu s} rho_s^2 dW_s
            + (e^{-mu T} rho_T / (x^2 sigma)) W_T / T.

    This is the reading validated by the closed-form delta oracle and it
    reduces to the classical weight W_T/(x sigma T) as q -> 0.  The
    "literal" convention instead keeps the market-price-of-risk integrals
    explicitly (it needs q != 0 and carries a deterministic bias; it is
    exposed for investigating the convention difference).
    """
    if convention not in DIVIDEND_CONVENTIONS:
        raise ValueError(f"unknown weight convention {convention!r}")
    mu = float(params["mu"])
    q = float(params.get("q", 0.0))
    sigma = float(params["sigma"])
    x = float(params["x"])
    horizon = grid.horizon
    t_left = grid.left_nodes()
    rho = curves.rho
    rho_left = rho[:-1]
    decay_sq = np.exp(-mu * t_left) * rho_left * rho_left
    stoch = np.sum(dw * decay_sq, axis=-1)
    w_t = np.sum(dw, axis=-1)
    tail = math.exp(-mu * horizon) * float(rho[-1]) / (x * x * sigma)
    if convention == "cancelled":
        return (q / (x * x * sigma)) * stoch + tail * (w_t / horizon)
    if q == 0.0:
        raise ValueError("literal weight convention needs q != 0")
    r = float(params["r"])
    t_all = grid.nodes()
    theta = (mu - r - q * rho) / sigma
    theta_int = trapezoid(theta, grid.dt)
    theta_rho_int = trapezoid(theta * np.exp(-mu * t_all) * rho * rho, grid.dt)
    return (q / (x * x * sigma)) * (
        stoch
        + theta_rho_int
        + (math.exp(-mu * horizon) / q) * float(rho[-1]) * (w_t - theta_int) / horizon
    )


def dividend_weight(
    bundle: PathBundle,
    curves: MeanFieldCurves,
    params,
    grid: TimeGrid,
    convention: str = "cancelled",
) -> MalliavinWeight:
    value = dividend_weight_values(
        bundle.noise.increments, curves, grid, params, convention
    )
    return MalliavinWeight(value=float(value), method="bs_dividend")

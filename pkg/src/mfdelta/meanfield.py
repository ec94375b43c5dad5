"""Deterministic mean curves of the state and their initial-condition slopes.

The drift and diffusion coefficients of the models in this package depend on
the running expectations

    rho_t = E[phi(X_t)],    pi_t = E[psi(X_t)].

Because these curves are deterministic functions of time once the model and
the initial state are fixed, they can be resolved up front and then treated
as exogenous inputs by the path simulation.  Two resolvers are provided:

* closed-form / ODE curves for models that declare them (all catalog models
  do), integrated by fixed-step classical RK4 on the simulation grid;
* a generic interacting-particle Picard iteration for models without an
  analytic provider, with initial-condition sensitivities obtained by
  common-random-number central differencing of the whole fixed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, TextIO

import numpy as np

from .errors import DegenerateDenominator, EllipticityFloor, NoConvergence, NonFinite
from .grid import TimeGrid
from .rng import increment_block

# Diffusion evaluations below this magnitude abort the run: the weight
# formulas divide by sigma and must fail loudly instead of overflowing.
ELLIPTICITY_FLOOR = 1e-12

# Relative bump used for the particle resolver's curve sensitivities.
SENSITIVITY_BUMP_REL = 1e-4
SENSITIVITY_BUMP_ABS = 1e-6

_PARTICLE_CHUNK = 10_000


@dataclass
class MeanFieldCurves:
    """Discretized mean curves and their x-sensitivities on a time grid.

    All arrays have length ``n_steps + 1`` and are indexed by grid node.
    """

    rho: np.ndarray
    pi: np.ndarray
    drho_dx: np.ndarray
    dpi_dx: np.ndarray
    provenance: str = "analytic"

    def validate(self, grid: TimeGrid, x: float, phi, psi) -> None:
        n = grid.n_steps + 1
        for name in ("rho", "pi", "drho_dx", "dpi_dx"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
            if not np.isfinite(arr).all():
                raise NonFinite(f"curve {name} contains non-finite values")
        if self.rho[0] != phi(x) or self.pi[0] != psi(x):
            raise ValueError("curves do not start at phi(x), psi(x)")


def riccati_curves(mu: float, q: float, x: float, grid: TimeGrid) -> MeanFieldCurves:
    """Mean curve of the dividend model, rho' = rho (mu - q rho).

    The solution is rho_t = x mu e^{mu t} / (q x e^{mu t} + mu - q x) with
    x-derivative (e^{-mu t} / x^2) rho_t^2; both are evaluated in closed form
    on the grid nodes.  The second moment functional is unused by this model,
    so the pi curves are filled with the rho curves.
    """
    if mu == 0.0:
        raise ValueError("riccati_curves requires mu != 0")
    t = grid.nodes()
    emt = np.exp(mu * t)
    denom = q * x * emt + (mu - q * x)
    if np.min(denom) <= 0.0:
        raise DegenerateDenominator(
            f"mean curve denominator crosses zero on [0, {grid.horizon}] "
            f"(min {np.min(denom):.3e}): finite-time blow-up"
        )
    rho = x * mu * emt / denom
    drho = np.exp(-mu * t) / (x * x) * rho * rho
    return MeanFieldCurves(rho=rho, pi=rho.copy(), drho_dx=drho, dpi_dx=drho.copy())


def exponential_curves(mu: float, x: float, grid: TimeGrid) -> MeanFieldCurves:
    """rho_t = x e^{mu t}: the mean curve of every drift-mu geometric model."""
    growth = np.exp(mu * grid.nodes())
    return MeanFieldCurves(
        rho=x * growth, pi=x * growth, drho_dx=growth, dpi_dx=growth.copy()
    )


def ode_curves(
    f: Callable[[float], float],
    f_prime: Callable[[float], float],
    x: float,
    grid: TimeGrid,
) -> MeanFieldCurves:
    """Integrate rho' = rho f(rho) and its variational ODE by classical RK4.

    The sensitivity s = d rho / dx solves s' = (f(rho) + rho f'(rho)) s with
    s_0 = 1 and is co-integrated with rho so both live on the same grid.
    """

    def rhs(state):
        r, s = state
        fr = f(r)
        return np.array([r * fr, (fr + r * f_prime(r)) * s])

    dt = grid.dt
    out_rho = np.empty(grid.n_steps + 1)
    out_s = np.empty(grid.n_steps + 1)
    state = np.array([float(x), 1.0])
    out_rho[0], out_s[0] = state
    for i in range(grid.n_steps):
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * dt * k1)
        k3 = rhs(state + 0.5 * dt * k2)
        k4 = rhs(state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(state).all():
            raise NonFinite(f"mean-curve ODE overflowed at t={grid.nodes()[i + 1]:.6g}")
        out_rho[i + 1], out_s[i + 1] = state
    return MeanFieldCurves(
        rho=out_rho, pi=out_rho.copy(), drho_dx=out_s, dpi_dx=out_s.copy()
    )


def check_ellipticity(sigma_values: np.ndarray | float, floor: float = ELLIPTICITY_FLOOR):
    if np.min(np.abs(sigma_values)) < floor:
        raise EllipticityFloor(
            f"diffusion coefficient fell below the ellipticity floor {floor:g}"
        )


def _particle_pass(model, x, grid, rho, pi, n_particles, seed):
    """One Euler sweep of all particles against frozen candidate curves.

    Returns the per-node sums of phi(X) and psi(X); the noise of particle k
    is its counter-based stream, so repeated sweeps see identical draws.
    """
    m = grid.n_steps
    dt = grid.dt
    floor = getattr(model, "ellipticity_floor", ELLIPTICITY_FLOOR)
    sums_phi = np.zeros(m + 1)
    sums_psi = np.zeros(m + 1)
    for start in range(0, n_particles, _PARTICLE_CHUNK):
        count = min(_PARTICLE_CHUNK, n_particles - start)
        dw = increment_block(seed, start, count, grid)
        state = np.full(count, float(x))
        sums_phi[0] += float(np.sum(model.phi(state)))
        sums_psi[0] += float(np.sum(model.psi(state)))
        for i in range(m):
            t_i = i * dt
            sig = np.asarray(model.sigma(t_i, state, pi[i]))
            if floor > 0.0:
                check_ellipticity(sig, floor)
            state = state + model.b(t_i, state, rho[i]) * dt + sig * dw[:, i]
            sums_phi[i + 1] += float(np.sum(model.phi(state)))
            sums_psi[i + 1] += float(np.sum(model.psi(state)))
        if not np.isfinite(state).all():
            bad = int(np.flatnonzero(~np.isfinite(state))[0]) + start
            raise NonFinite(f"particle {bad} overflowed during the mean-field pass")
    return sums_phi, sums_psi


def _picard(model, x, grid, n_particles, max_iters, tol, seed):
    """Iterate curves -> particle sweep -> empirical curves to a fixed point."""
    phi0 = float(model.phi(float(x)))
    psi0 = float(model.psi(float(x)))
    rho = np.full(grid.n_steps + 1, phi0)
    pi = np.full(grid.n_steps + 1, psi0)
    last = math.inf
    for _ in range(max_iters):
        sums_phi, sums_psi = _particle_pass(model, x, grid, rho, pi, n_particles, seed)
        rho_new = sums_phi / n_particles
        pi_new = sums_psi / n_particles
        # Time zero is deterministic; pin it to the exact functional value.
        rho_new[0] = phi0
        pi_new[0] = psi0
        last = max(
            float(np.max(np.abs(rho_new - rho))), float(np.max(np.abs(pi_new - pi)))
        )
        rho, pi = rho_new, pi_new
        if last < tol:
            return rho, pi
    raise NoConvergence(
        f"particle fixed point did not reach tol={tol:g} within {max_iters} "
        f"iterations (last sup distance {last:.3e})",
        last_distance=last,
    )


def particle_curves(
    model,
    x: float,
    grid: TimeGrid,
    n_particles: int,
    max_iters: int = 50,
    tol: float = 1e-6,
    seed: int = 0,
    sensitivity_bump: float | None = None,
) -> MeanFieldCurves:
    """Resolve the mean curves by an interacting-particle Picard iteration.

    The x-sensitivities are obtained by rerunning the entire fixed point at
    x + delta and x - delta with the same particle noise and central
    differencing; common random numbers cancel the Monte Carlo error of the
    difference to first order.
    """
    if n_particles < 2:
        raise ValueError("n_particles must be >= 2")
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    rho, pi = _picard(model, x, grid, n_particles, max_iters, tol, seed)
    delta = sensitivity_bump
    if delta is None:
        delta = max(SENSITIVITY_BUMP_REL * abs(x), SENSITIVITY_BUMP_ABS)
    rho_up, pi_up = _picard(model, x + delta, grid, n_particles, max_iters, tol, seed)
    rho_dn, pi_dn = _picard(model, x - delta, grid, n_particles, max_iters, tol, seed)
    return MeanFieldCurves(
        rho=rho,
        pi=pi,
        drho_dx=(rho_up - rho_dn) / (2.0 * delta),
        dpi_dx=(pi_up - pi_dn) / (2.0 * delta),
        provenance="particle",
    )


@dataclass
class DerivativeCheck:
    name: str
    max_discrepancy: float
    flagged: bool


@dataclass
class DerivativeReport:
    checks: list[DerivativeCheck] = field(default_factory=list)
    threshold: float = 1e-6

    @property
    def ok(self) -> bool:
        return not any(c.flagged for c in self.checks)

    def flagged_names(self) -> list[str]:
        return [c.name for c in self.checks if c.flagged]


def check_model_derivatives(
    model,
    samples: Iterable[tuple[float, float, float, float]],
    h: float = 1e-5,
    threshold: float = 1e-6,
) -> DerivativeReport:
    """Compare the model's supplied partials against central differences.

    ``samples`` is an iterable of (t, x, rho, pi) evaluation points.  The
    discrepancy is relative to the larger of the two values, so exact zeros
    compare clean.  Entries above ``threshold`` are flagged but nothing is
    raised; callers decide what a flag means.
    """
    if not h > 0.0:
        raise ValueError("bump h must be positive")

    pairs = {
        "d1_b": (lambda t, x, r, p: model.b(t, x, r), model.d1_b, "x"),
        "d2_b": (lambda t, x, r, p: model.b(t, x, r), model.d2_b, "rho"),
        "d1_sigma": (lambda t, x, r, p: model.sigma(t, x, p), model.d1_sigma, "x"),
        "d2_sigma": (lambda t, x, r, p: model.sigma(t, x, p), model.d2_sigma, "pi"),
    }
    pts = list(samples)
    report = DerivativeReport(threshold=threshold)
    for name, (func, deriv, wrt) in pairs.items():
        worst = 0.0
        for (t, x, rho, pi) in pts:
            if wrt == "x":
                up = func(t, x + h, rho, pi)
                dn = func(t, x - h, rho, pi)
            elif wrt == "rho":
                up = func(t, x, rho + h, pi)
                dn = func(t, x, rho - h, pi)
            else:
                up = func(t, x, rho, pi + h)
                dn = func(t, x, rho, pi - h)
            fd = (up - dn) / (2.0 * h)
            if name in ("d1_b", "d2_b"):
                an = deriv(t, x, rho)
            else:
                an = deriv(t, x, pi)
            scale = max(abs(an), abs(fd), 1.0)
            worst = max(worst, abs(an - fd) / scale)
        report.checks.append(
            DerivativeCheck(name=name, max_discrepancy=worst, flagged=worst > threshold)
        )
    return report


CURVE_CSV_HEADER = "t,rho,pi,drho_dx,dpi_dx"


def write_curves_csv(grid: TimeGrid, curves: MeanFieldCurves, out: TextIO) -> None:
    """Write the curves with 17 significant digits per value."""
    t = grid.nodes()
    out.write(CURVE_CSV_HEADER + "\n")
    for i in range(grid.n_steps + 1):
        out.write(
            f"{t[i]:.17g},{curves.rho[i]:.17g},{curves.pi[i]:.17g},"
            f"{curves.drho_dx[i]:.17g},{curves.dpi_dx[i]:.17g}\n"
        )

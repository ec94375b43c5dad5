"""Model catalog, payoffs and closed-form price/delta oracles.

Four scalar models ship with the package, all geometric (drift and
diffusion linear in the state):

``classical_gbm``
    dX/X = mu dt + sigma dW.  No mean-field dependence; the baseline.

``bs_dividend``
    dS/S = (mu - q rho_t) dt + sigma dW with rho_t = E[S_t].  The mean
    curve solves the logistic equation rho' = rho (mu - q rho) and has a
    closed form.  Delta estimation for this model runs under the
    risk-neutral measure, where the paths are plain GBM with drift r and
    the mean curve only enters through the weight.

``mean_drift``
    dX/X = f(rho_t) dt + sigma dW.  Shipped drift shapes: affine
    f(rho) = mu - q rho and the nonlinear stress case f(rho) = mu tanh(rho).

``mean_vol``
    dX/X = mu dt + sigma rho_t dW.  The mean curve is x e^{mu t}; the
    terminal state is lognormal with an x-dependent variance
    V(x) = x^2 (e^{2 mu T} - 1) / (2 mu), which makes closed-form call and
    digital prices (and their deltas, including the dV/dx chain-rule term)
    available as oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .errors import MissingParameter, PayoffNotDifferentiable, Unavailable, UnknownModel
from .grid import TimeGrid
from .meanfield import (
    ELLIPTICITY_FLOOR,
    MeanFieldCurves,
    exponential_curves,
    ode_curves,
    riccati_curves,
)
from .sde import StepCoeffs

# Figure parameter sets used throughout the experiments.
PARAMETER_SET_A = {"sigma": 0.8, "mu": 1.0, "x": 1.0, "K": 2.0, "T": 1.0}
PARAMETER_SET_B = {"sigma": 1.2, "mu": 1.0, "x": 0.5, "K": 0.7, "T": 1.0}

MODEL_IDS = ("bs_dividend", "mean_drift", "mean_vol", "classical_gbm")

DEFAULT_RATE = 0.05  # risk-free rate of the dividend model


def norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def norm_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Payoffs
# ---------------------------------------------------------------------------

PAYOFF_KINDS = ("call", "digital", "identity", "constant")


@dataclass(frozen=True)
class Payoff:
    """Terminal payoff Phi with an almost-everywhere derivative when one exists."""

    kind: str
    strike: float | None = None

    def __post_init__(self):
        if self.kind not in PAYOFF_KINDS:
            raise ValueError(f"unknown payoff kind {self.kind!r}")
        if self.kind in ("call", "digital") and self.strike is None:
            raise ValueError(f"{self.kind} payoff requires a strike")

    @property
    def differentiable(self) -> bool:
        return self.kind in ("call", "identity", "constant")

    def evaluate(self, x):
        if self.kind == "call":
            return np.maximum(np.asarray(x) - self.strike, 0.0)
        if self.kind == "digital":
            return (np.asarray(x) >= self.strike).astype(float)
        if self.kind == "identity":
            return np.asarray(x, dtype=float)
        return np.ones_like(np.asarray(x, dtype=float))

    def derivative(self, x):
        """a.e. derivative; refuses the digital payoff, whose kink is the point."""
        if self.kind == "call":
            return (np.asarray(x) > self.strike).astype(float)
        if self.kind == "identity":
            return np.ones_like(np.asarray(x, dtype=float))
        if self.kind == "constant":
            return np.zeros_like(np.asarray(x, dtype=float))
        raise PayoffNotDifferentiable("digital payoff has no pathwise derivative")


def make_payoff(kind: str, strike: float | None = None) -> Payoff:
    return Payoff(kind=kind, strike=strike)


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Coefficient closures, their partials and the model's analytic wiring.

    The closures accept scalars or NumPy arrays in the state argument.  For
    state-linear models ``step_coeffs`` turns resolved mean curves into
    per-step coefficient tables consumed by the fast kernels; the closures
    remain the source of truth for the generic resolver and the derivative
    validator.
    """

    name: str
    b: Callable
    sigma: Callable
    d1_b: Callable
    d2_b: Callable
    d1_sigma: Callable
    d2_sigma: Callable
    phi: Callable
    psi: Callable
    dphi: Callable
    dpsi: Callable
    params: Mapping[str, float]
    analytic_curves: Callable | None = None
    step_coeffs: Callable | None = None
    weight_method: str | None = None
    geometric: bool = False
    ellipticity_floor: float = ELLIPTICITY_FLOOR


def _require(params: Mapping[str, float], keys: tuple[str, ...], model_id: str) -> None:
    for key in keys:
        if key not in params:
            raise MissingParameter(f"model {model_id!r} requires parameter {key!r}")


_identity = lambda v: np.asarray(v, dtype=float)
_one = lambda v: np.ones_like(np.asarray(v, dtype=float))


def _geometric_table(drift_of_rho, ddrift_of_rho, vol_of_pi, dvol_of_pi):
    """StepCoeffs builder for b = g(rho) x, sigma = h(pi) x models."""

    def build(curves: MeanFieldCurves, grid: TimeGrid) -> StepCoeffs:
        rho = curves.rho[:-1]
        pi = curves.pi[:-1]
        return StepCoeffs.build(
            drift=drift_of_rho(rho),
            vol=vol_of_pi(pi),
            alpha=ddrift_of_rho(rho) * curves.drho_dx[:-1],
            beta=dvol_of_pi(pi) * curves.dpi_dx[:-1],
        )

    return build


def _drift_shape(params: Mapping[str, float], model_id: str):
    """(f, f') for the mean-drift model; affine by default, tanh as stress case."""
    mu = params["mu"]
    q = params.get("q", 0.0)
    kind = params.get("f_kind", "affine")
    if kind == "affine":
        return (lambda r: mu - q * r), (lambda r: -q + 0.0 * r)
    if kind == "tanh":
        return (lambda r: mu * np.tanh(r)), (lambda r: mu / np.cosh(r) ** 2)
    raise MissingParameter(f"model {model_id!r}: unknown f_kind {kind!r}")


def build_model(model_id: str, params: Mapping[str, float]) -> ModelSpec:
    """Instantiate a catalog model from its parameter map."""
    if model_id not in MODEL_IDS:
        raise UnknownModel(f"unknown model id {model_id!r}; expected one of {MODEL_IDS}")
    _require(params, ("mu", "sigma"), model_id)
    if params["sigma"] <= 0.0:
        raise ValueError("sigma must be positive")
    mu = float(params["mu"])
    sig = float(params["sigma"])
    common = dict(
        phi=_identity,
        psi=_identity,
        dphi=_one,
        dpsi=_one,
        params=dict(params),
        geometric=True,
    )

    if model_id == "classical_gbm":
        return ModelSpec(
            name=model_id,
            b=lambda t, x, rho: mu * x,
            sigma=lambda t, x, pi: sig * x,
            d1_b=lambda t, x, rho: mu + 0.0 * x,
            d2_b=lambda t, x, rho: 0.0 * x,
            d1_sigma=lambda t, x, pi: sig + 0.0 * x,
            d2_sigma=lambda t, x, pi: 0.0 * x,
            analytic_curves=lambda x, grid: exponential_curves(mu, x, grid),
            step_coeffs=_geometric_table(
                lambda r: mu + 0.0 * r,
                lambda r: 0.0 * r,
                lambda p: sig + 0.0 * p,
                lambda p: 0.0 * p,
            ),
            weight_method="mean_drift",  # constant drift shape: classical weight
            **common,
        )

    if model_id == "bs_dividend":
        q = float(params.get("q", 0.0))
        if mu == 0.0:
            raise MissingParameter("bs_dividend requires mu != 0 for its mean curve")
        return ModelSpec(
            name=model_id,
            b=lambda t, x, rho: (mu - q * rho) * x,
            sigma=lambda t, x, pi: sig * x,
            d1_b=lambda t, x, rho: (mu - q * rho) + 0.0 * x,
            d2_b=lambda t, x, rho: -q * x,
            d1_sigma=lambda t, x, pi: sig + 0.0 * x,
            d2_sigma=lambda t, x, pi: 0.0 * x,
            analytic_curves=lambda x, grid: riccati_curves(mu, q, x, grid),
            step_coeffs=_geometric_table(
                lambda r: mu - q * r,
                lambda r: -q + 0.0 * r,
                lambda p: sig + 0.0 * p,
                lambda p: 0.0 * p,
            ),
            weight_method="bs_dividend",
            **common,
        )

    if model_id == "mean_drift":
        f, fp = _drift_shape(params, model_id)
        return ModelSpec(
            name=model_id,
            b=lambda t, x, rho: f(rho) * x,
            sigma=lambda t, x, pi: sig * x,
            d1_b=lambda t, x, rho: f(rho) + 0.0 * x,
            d2_b=lambda t, x, rho: fp(rho) * x,
            d1_sigma=lambda t, x, pi: sig + 0.0 * x,
            d2_sigma=lambda t, x, pi: 0.0 * x,
            analytic_curves=lambda x, grid: ode_curves(f, fp, x, grid),
            step_coeffs=_geometric_table(
                f, fp, lambda p: sig + 0.0 * p, lambda p: 0.0 * p
            ),
            weight_method="mean_drift",
            **common,
        )

    # mean_vol: volatility proportional to the running mean.
    return ModelSpec(
        name=model_id,
        b=lambda t, x, rho: mu * x,
        sigma=lambda t, x, pi: (sig * pi) * x,
        d1_b=lambda t, x, rho: mu + 0.0 * x,
        d2_b=lambda t, x, rho: 0.0 * x,
        d1_sigma=lambda t, x, pi: (sig * pi) + 0.0 * x,
        d2_sigma=lambda t, x, pi: sig * x,
        analytic_curves=lambda x, grid: exponential_curves(mu, x, grid),
        step_coeffs=_geometric_table(
            lambda r: mu + 0.0 * r,
            lambda r: 0.0 * r,
            lambda p: sig * p,
            lambda p: sig + 0.0 * p,
        ),
        weight_method="mean_vol",
        **common,
    )


def drift_shape(model: ModelSpec):
    """(f, f') of a mean-drift style model, used by its deterministic weight."""
    if model.name == "classical_gbm":
        mu = float(model.params["mu"])
        return (lambda r: mu + 0.0 * r), (lambda r: 0.0 * r)
    if model.name == "mean_drift":
        return _drift_shape(model.params, model.name)
    raise UnknownModel(f"model {model.name!r} has no scalar drift shape")


def risk_neutral_simulation_spec(model: ModelSpec) -> ModelSpec:
    """Simulation dynamics of the dividend model under the pricing measure.

    Under the risk-neutral measure the dividend model's paths are plain GBM
    with drift r; the mean-field structure survives only in the weight,
    which is assembled from the physical-measure mean curve.
    """
    if model.name != "bs_dividend":
        return model
    r = float(model.params.get("r", DEFAULT_RATE))
    sig = float(model.params["sigma"])
    return replace(
        build_model("classical_gbm", {"mu": r, "sigma": sig}),
        name="bs_dividend_rn",
        params=dict(model.params),
        weight_method="bs_dividend",
    )


def discount_factor(model: ModelSpec, horizon: float) -> float:
    """e^{-rT} for the dividend model, 1 otherwise; prices and deltas of the
    dividend model are reported discounted."""
    if model.name.startswith("bs_dividend"):
        r = float(model.params.get("r", DEFAULT_RATE))
        return math.exp(-r * horizon)
    return 1.0


# ---------------------------------------------------------------------------
# Closed-form oracles
# ---------------------------------------------------------------------------


def _lognormal_call(forward: float, strike: float, total_sd: float):
    """(price, N(d1), pdf(d2)) of E[(S - K)^+] for lognormal S with mean
    ``forward`` and log standard deviation ``total_sd``."""
    d1 = (math.log(forward / strike) + 0.5 * total_sd * total_sd) / total_sd
    d2 = d1 - total_sd
    price = forward * norm_cdf(d1) - strike * norm_cdf(d2)
    return price, d1, d2


def mean_vol_log_variance(params: Mapping[str, float]) -> float:
    """V(x) = x^2 (e^{2 mu T} - 1) / (2 mu): integrated squared mean curve."""
    mu, x, horizon = params["mu"], params["x"], params["T"]
    return x * x * (math.exp(2.0 * mu * horizon) - 1.0) / (2.0 * mu)


def closed_form_price_and_delta(
    model_id: str, payoff: Payoff, params: Mapping[str, float]
) -> tuple[float, float]:
    """Analytic price and delta where a closed form exists.

    Raises Unavailable for pairs without one.  The dividend model is priced
    risk-neutrally with discounting; the others are plain expectations.
    """
    if model_id not in ("classical_gbm", "bs_dividend", "mean_vol"):
        raise Unavailable(f"no closed form for model {model_id!r}")
    if payoff.kind == "constant":
        raise Unavailable("constant payoff has price 1 and delta 0; nothing to solve")
    x = float(params["x"])
    horizon = float(params["T"])
    sig = float(params["sigma"])

    if model_id == "mean_vol":
        mu = float(params["mu"])
        v = mean_vol_log_variance(params)
        total_sd = sig * math.sqrt(v)
        growth = math.exp(mu * horizon)
        if payoff.kind == "identity":
            return x * growth, growth
        k = float(payoff.strike)
        if payoff.kind == "call":
            fwd = x * growth
            price, d1, d2 = _lognormal_call(fwd, k, total_sd)
            # dV/dx = 2V/x shifts both d1 and d2 by sigma*sqrt(V)/x.
            delta = growth * norm_cdf(d1) + k * norm_pdf(d2) * sig * math.sqrt(v) / x
            return price, delta
        # digital: {X_T >= K} = {F >= d(x)} with threshold d(x) below.
        d_x = (math.log(k / x) - mu * horizon + 0.5 * sig * sig * v) / sig
        z = d_x / math.sqrt(v)
        zp = (sig * sig * v - 1.0) / (x * sig * math.sqrt(v)) - z / x
        return norm_cdf(-z), -norm_pdf(z) * zp

    if model_id == "classical_gbm":
        mu = float(params["mu"])
        disc = 1.0
        rate = mu
    else:  # bs_dividend under the risk-neutral measure
        rate = float(params.get("r", DEFAULT_RATE))
        disc = math.exp(-rate * horizon)

    total_sd = sig * math.sqrt(horizon)
    growth = math.exp(rate * horizon)
    if payoff.kind == "identity":
        return disc * x * growth, disc * growth
    k = float(payoff.strike)
    if payoff.kind == "call":
        price, d1, d2 = _lognormal_call(x * growth, k, total_sd)
        return disc * price, disc * growth * norm_cdf(d1)
    d2 = (math.log(x / k) + (rate - 0.5 * sig * sig) * horizon) / total_sd
    return disc * norm_cdf(d2), disc * norm_pdf(d2) / (x * total_sd)


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CatalogEntry:
    model_id: str
    set_a: dict = field(default_factory=lambda: dict(PARAMETER_SET_A))
    set_b: dict = field(default_factory=lambda: dict(PARAMETER_SET_B))

    def build(self, params: Mapping[str, float] | None = None) -> ModelSpec:
        return build_model(self.model_id, dict(params or self.set_a))


CATALOG = {model_id: CatalogEntry(model_id) for model_id in MODEL_IDS}


def resolve_curves(
    model: ModelSpec,
    x: float,
    grid: TimeGrid,
    resolver: str = "analytic",
    n_particles: int = 100_000,
    max_iters: int = 50,
    tol: float = 1e-6,
    seed: int = 0,
) -> MeanFieldCurves:
    """Two-tier curve resolution: analytic provider if declared, else particles."""
    if resolver == "analytic" and model.analytic_curves is not None:
        curves = model.analytic_curves(x, grid)
        curves.validate(grid, x, model.phi, model.psi)
        return curves
    from .meanfield import particle_curves

    return particle_curves(
        model, x, grid, n_particles=n_particles, max_iters=max_iters, tol=tol, seed=seed
    )

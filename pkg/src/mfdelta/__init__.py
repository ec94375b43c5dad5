"""Monte Carlo deltas for mean-field SDEs via Malliavin weights.

The package estimates d/dx E[Phi(X_T^x)] for scalar SDEs whose drift and
diffusion depend on running expectations of the solution.  The main
entry points are the model catalog in :mod:`mfdelta.models`, the
estimators in :mod:`mfdelta.estimators` and the ``mfdelta`` command line.
"""

from .backend import active_backend
from .errors import (
    ConfigParse,
    DegenerateDenominator,
    DeltaEngineError,
    EllipticityFloor,
    MissingParameter,
    NoConvergence,
    NonFinite,
    PayoffNotDifferentiable,
    TangentDegenerate,
    Unavailable,
    UnknownModel,
)
from .estimators import (
    DeltaEstimate,
    RunSettings,
    compare_methods,
    estimate_delta_fd,
    estimate_delta_malliavin,
    estimate_delta_pathwise,
    estimate_price,
)
from .grid import TimeGrid
from .meanfield import MeanFieldCurves, particle_curves, riccati_curves
from .models import (
    CATALOG,
    PARAMETER_SET_A,
    PARAMETER_SET_B,
    ModelSpec,
    Payoff,
    build_model,
    closed_form_price_and_delta,
    make_payoff,
    resolve_curves,
)
from .rng import NoiseGrid, brownian_increments
from .sde import PathBundle, simulate_bundle, simulate_x

__version__ = "0.1.0"

__all__ = [
    "CATALOG",
    "ConfigParse",
    "DegenerateDenominator",
    "DeltaEngineError",
    "DeltaEstimate",
    "EllipticityFloor",
    "MeanFieldCurves",
    "MissingParameter",
    "ModelSpec",
    "NoConvergence",
    "NoiseGrid",
    "NonFinite",
    "PARAMETER_SET_A",
    "PARAMETER_SET_B",
    "PathBundle",
    "Payoff",
    "PayoffNotDifferentiable",
    "RunSettings",
    "TangentDegenerate",
    "TimeGrid",
    "Unavailable",
    "UnknownModel",
    "active_backend",
    "brownian_increments",
    "build_model",
    "closed_form_price_and_delta",
    "compare_methods",
    "estimate_delta_fd",
    "estimate_delta_malliavin",
    "estimate_delta_pathwise",
    "estimate_price",
    "make_payoff",
    "particle_curves",
    "resolve_curves",
    "riccati_curves",
    "simulate_bundle",
    "simulate_x",
]

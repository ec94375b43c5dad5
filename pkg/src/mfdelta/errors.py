"""Exception types raised by the simulation and estimation layers."""


class DeltaEngineError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateDenominator(DeltaEngineError):
    """The closed-form mean curve blows up inside the requested horizon."""


class NonFinite(DeltaEngineError):
    """A simulated quantity overflowed or became NaN."""


class NoConvergence(DeltaEngineError):
    """Fixed-point iteration stopped before reaching its tolerance.

    Carries the last sup-norm distance between successive curve iterates
    so callers can decide whether to accept the result anyway.
    """

    def __init__(self, message: str, last_distance: float):
        super().__init__(message)
        self.last_distance = last_distance


class TangentDegenerate(DeltaEngineError):
    """The first-variation path hit zero exactly and cannot be inverted."""


class EllipticityFloor(DeltaEngineError):
    """A diffusion coefficient evaluation fell below the configured floor."""


class PayoffNotDifferentiable(DeltaEngineError):
    """Pathwise differentiation was requested for a discontinuous payoff."""


class UnknownModel(DeltaEngineError):
    """Model identifier not present in the catalog."""


class MissingParameter(DeltaEngineError):
    """A required model parameter is absent from the parameter map."""


class Unavailable(DeltaEngineError):
    """No closed form exists for the requested model and payoff pair."""


class ConfigParse(DeltaEngineError):
    """A run configuration file could not be parsed or validated.

    ``line`` is the 1-based line number of the offending entry when the
    problem is attributable to a single line, otherwise None.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

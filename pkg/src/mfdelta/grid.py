"""Uniform time grid shared by ODE curves, path simulation and quadrature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition 0 = t_0 < t_1 < ... < t_M = horizon.

    The same grid is used for the deterministic mean curves, the Euler
    stepping of the state/tangent paths and all weight quadratures, so no
    interpolation between grids ever happens.
    """

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not self.horizon > 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    def nodes(self) -> np.ndarray:
        """All M+1 grid nodes including both endpoints."""
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def left_nodes(self) -> np.ndarray:
        """The M left endpoints t_0 .. t_{M-1} used by Ito quadrature."""
        return np.arange(self.n_steps) * self.dt

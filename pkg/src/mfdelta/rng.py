"""Counter-based Brownian increment generation.

Every path owns a dedicated Philox stream addressed by (seed, path_index):
the 256-bit Philox counter is offset by ``path_index * 2**128``, which gives
each path an astronomically large private block of the counter space.
Regenerating a path's increments is therefore a pure function of
(seed, path_index, step) no matter how work is scheduled across threads,
which is what makes common-random-number bumping and bitwise-reproducible
parallel reduction possible downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .grid import TimeGrid

# Counter blocks reserved per path stream. Philox counters are 256 bits, so
# offsetting by path_index << 128 leaves 2**128 blocks per path.
_STREAM_STRIDE_BITS = 128

# Stream offset used when deliberately decoupling a bumped finite-difference
# leg from its base run (the "independent streams" mode).
INDEPENDENT_LEG_OFFSET = 1 << 40


@dataclass(frozen=True)
class NoiseGrid:
    """Brownian increments of one path on one time grid."""

    seed: int
    path_index: int
    dt: float
    increments: np.ndarray  # shape (M,), each ~ N(0, dt)


def _path_generator(seed: int, path_index: int) -> Generator:
    return Generator(Philox(key=seed, counter=path_index << _STREAM_STRIDE_BITS))


def brownian_increments(seed: int, path_index: int, grid: TimeGrid) -> NoiseGrid:
    """Generate the increments of path ``path_index`` on ``grid``.

    Calling twice with the same arguments returns bitwise-identical arrays.
    """
    gen = _path_generator(seed, path_index)
    inc = gen.standard_normal(grid.n_steps) * math.sqrt(grid.dt)
    return NoiseGrid(seed=seed, path_index=path_index, dt=grid.dt, increments=inc)


def increment_block(seed: int, first_path: int, n_paths: int, grid: TimeGrid) -> np.ndarray:
    """Stack the increments of paths [first_path, first_path + n_paths).

    Row k equals ``brownian_increments(seed, first_path + k, grid).increments``
    bitwise; the block form just amortizes the per-path generator setup.
    """
    out = np.empty((n_paths, grid.n_steps))
    root = math.sqrt(grid.dt)
    for k in range(n_paths):
        gen = _path_generator(seed, first_path + k)
        out[k] = gen.standard_normal(grid.n_steps)
    out *= root
    return out

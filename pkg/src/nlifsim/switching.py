"""Transforms between macroscopic densities and microscopic voltage configurations.

Macro -> micro: draw i.i.d. voltages from the piecewise-uniform density built
on the interior cells (inverse CDF over the cells, then one uniform within the
chosen cell).  Micro -> macro: histogram the voltages on the interior cells,
dropping neurons outside [v_min + dv/2, v_fire - dv/2], and renormalize.  The
firing-rate handoff uses the spike-counter difference over the last step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import VoltageGrid

__all__ = [
    "EmptyDensityError",
    "PiecewiseUniformDensity",
    "density_to_samples",
    "samples_to_density",
    "rate_from_counter",
]

logger = logging.getLogger(__name__)

DROP_WARN_FRACTION = 1e-3


class EmptyDensityError(ValueError):
    """No usable probability mass (all-zero density or all samples out of domain)."""


@dataclass
class PiecewiseUniformDensity:
    """Piecewise-constant density on the interior cells of a voltage grid.

    Weights are renormalized at construction so that sum(weights)*dv == 1;
    cell i spans [v_{i-1/2}, v_{i+1/2}).
    """

    grid: VoltageGrid
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.grid.n_interior,):
            raise ValueError(
                f"expected {self.grid.n_interior} interior weights, got shape {w.shape}"
            )
        if w.min() < -1e-12:
            raise ValueError(f"negative density weight: {w.min():.3e}")
        w = np.maximum(w, 0.0)
        total = w.sum() * self.grid.dv
        if total <= 0:
            raise EmptyDensityError("density has no mass")
        self.weights = w / total

    def cell_probabilities(self) -> np.ndarray:
        return self.weights * self.grid.dv


def density_to_samples(density: PiecewiseUniformDensity, n: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Draw n i.i.d. voltages from the piecewise-uniform density.

    Cells are chosen by inverse CDF (prefix sums + binary search), then each
    sample is placed uniformly inside its cell, so every sample lies in
    [v_min + dv/2, v_fire - dv/2).
    """
    if n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    grid = density.grid
    cdf = np.cumsum(density.cell_probabilities())
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    np.minimum(idx, grid.n_interior - 1, out=idx)
    left = grid.interior_edges[idx]
    return left + grid.dv * rng.random(n)


def samples_to_density(voltages: np.ndarray, grid: VoltageGrid
                       ) -> tuple[PiecewiseUniformDensity, int]:
    """Histogram a voltage configuration onto the interior cells.

    Neurons outside [v_min + dv/2, v_fire - dv/2] are dropped and counted;
    bins are half-open with the topmost cell closed.  Returns the density
    (cell averages count_i / (dv * total)) and the dropped count; warns when
    more than 0.1% of the configuration is dropped.
    """
    voltages = np.asarray(voltages, dtype=float)
    counts, _ = np.histogram(voltages, bins=grid.interior_edges)
    total = int(counts.sum())
    if total == 0:
        raise EmptyDensityError(
            f"all {voltages.size} voltages fall outside "
            f"[{grid.interior_edges[0]}, {grid.interior_edges[-1]}]"
        )
    dropped = voltages.size - total
    if dropped > DROP_WARN_FRACTION * voltages.size:
        logger.warning(
            "dropped %d of %d voltages (%.2f%%) outside the density domain; "
            "consider a finer or wider grid",
            dropped, voltages.size, 100.0 * dropped / voltages.size,
        )
    weights = counts / (grid.dv * total)
    return PiecewiseUniformDensity(grid, weights), dropped


def rate_from_counter(count_now: int, count_prev: int, n_neurons: int, dt: float) -> float:
    """Firing rate over one step from the cumulative spike counter."""
    if count_now < count_prev:
        raise ValueError(f"spike counter decreased: {count_prev} -> {count_now}")
    return (count_now - count_prev) / (n_neurons * dt)

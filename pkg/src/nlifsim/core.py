"""Shared domain types: network parameters, input currents, voltage grid, RNG streams.

Voltage conventions follow the usual integrate-and-fire setup: a neuron's
membrane potential relaxes toward the leak potential, receives external
current plus white noise, and is reset from the firing threshold ``v_fire``
to ``v_reset`` when it spikes.  The macroscopic density lives on a truncated
domain ``[v_min, v_fire]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridAlignmentError",
    "NetworkParams",
    "Constant",
    "GaussianPulse",
    "PulseTrain",
    "InputCurrent",
    "eval_current",
    "VoltageGrid",
    "make_grid",
    "aligned_mesh_size",
    "GaussianInit",
    "sample_gaussian_init",
    "RandomSource",
]


class GridAlignmentError(ValueError):
    """Raised when a requested cell width does not land on the domain endpoints."""


@dataclass(frozen=True)
class NetworkParams:
    """Physical constants of one network.

    ``connectivity`` is the mean-field coupling b (positive = excitatory);
    ``kick`` is the per-spike voltage increment J received by every other
    neuron.  When ``kick`` is omitted it defaults to the mean-field scaling
    b / n_neurons.  ``noise_std`` (microscopic Brownian amplitude) and
    ``diffusion`` (macroscopic diffusion coefficient) are independent knobs;
    whichever is omitted is derived from the other via diffusion = noise_std²/2
    so that the two solvers integrate the same dynamics by default.
    """

    v_fire: float = 2.0
    v_reset: float = 1.0
    v_leak: float = 0.0
    v_min: float = -4.0
    connectivity: float = 0.0
    n_neurons: int = 1
    kick: float | None = None
    noise_std: float | None = None
    diffusion: float | None = None

    def __post_init__(self):
        if not self.v_min < self.v_reset < self.v_fire:
            raise ValueError(
                f"require v_min < v_reset < v_fire, got "
                f"{self.v_min}, {self.v_reset}, {self.v_fire}"
            )
        if self.n_neurons < 1:
            raise ValueError(f"n_neurons must be >= 1, got {self.n_neurons}")
        if self.kick is None:
            object.__setattr__(self, "kick", self.connectivity / self.n_neurons)
        if self.noise_std is None and self.diffusion is None:
            object.__setattr__(self, "diffusion", 1.0)
        if self.noise_std is None:
            object.__setattr__(self, "noise_std", math.sqrt(2.0 * self.diffusion))
        if self.diffusion is None:
            # diffusion must stay positive, so a noiseless network keeps the
            # stock macroscopic coefficient instead of deriving zero
            derived = 0.5 * self.noise_std**2
            object.__setattr__(self, "diffusion", derived if derived > 0 else 1.0)
        if self.diffusion <= 0:
            raise ValueError(f"diffusion must be > 0, got {self.diffusion}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")


@dataclass(frozen=True)
class Constant:
    """Time-independent external current."""

    value: float = 0.0


@dataclass(frozen=True)
class GaussianPulse:
    """Bell-shaped input pulse: amplitude * exp(-concentration * (t - center)²)."""

    amplitude: float
    concentration: float
    center: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError(f"pulse amplitude must be >= 0, got {self.amplitude}")
        if self.concentration <= 0:
            raise ValueError(f"pulse concentration must be > 0, got {self.concentration}")


@dataclass(frozen=True)
class PulseTrain:
    """Sum of several Gaussian pulses."""

    pulses: tuple[GaussianPulse, ...]

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))


InputCurrent = Constant | GaussianPulse | PulseTrain


def eval_current(current: InputCurrent, t):
    """Evaluate an external current at time t (scalar or ndarray).

    Pure and deterministic: equal arguments give bit-identical results.
    """
    if isinstance(current, Constant):
        return current.value if np.isscalar(t) else np.full_like(np.asarray(t, float), current.value)
    if isinstance(current, GaussianPulse):
        dt = np.asarray(t, float) - current.center
        out = current.amplitude * np.exp(-current.concentration * dt * dt)
        return float(out) if np.isscalar(t) else out
    if isinstance(current, PulseTrain):
        out = sum(eval_current(p, np.asarray(t, float)) for p in current.pulses)
        return float(out) if np.isscalar(t) else out
    raise TypeError(f"not an input current: {current!r}")


@dataclass(frozen=True)
class VoltageGrid:
    """Uniform mesh of [v_min, v_fire] with a node sitting exactly on v_reset.

    Nodes are v_i = v_min + i*dv for i = 0..n_cells; the reset potential is
    v_reset = v_{reset_index}.  Cell i is centered on v_i with half-node edges
    v_{i±1/2}; the solver unknowns are the interior cells i = 1..n_cells-1.
    """

    v_min: float
    v_fire: float
    n_cells: int
    dv: float
    reset_index: int

    @property
    def centers(self) -> np.ndarray:
        """All node positions v_0..v_{n_cells}."""
        return self.v_min + self.dv * np.arange(self.n_cells + 1)

    @property
    def interior_centers(self) -> np.ndarray:
        """Node positions of the interior cells, v_1..v_{n_cells-1}."""
        return self.v_min + self.dv * np.arange(1, self.n_cells)

    @property
    def interior_edges(self) -> np.ndarray:
        """Half-node edges bounding the interior cells: v_{1/2}..v_{n_cells-1/2}."""
        return self.v_min + self.dv * (np.arange(self.n_cells) + 0.5)

    @property
    def n_interior(self) -> int:
        return self.n_cells - 1


def make_grid(v_min: float, v_fire: float, v_reset: float, dv: float) -> VoltageGrid:
    """Build a VoltageGrid, failing loudly if dv misses either endpoint.

    dv must divide both (v_fire - v_min) and (v_reset - v_min) to within
    1e-12 relative tolerance; the stored dv is then snapped to the exact
    divisor (v_fire - v_min)/n_cells so reported node positions satisfy
    v_min + n_cells*dv = v_fire and v_min + reset_index*dv = v_reset.
    """
    if dv <= 0:
        raise GridAlignmentError(f"dv must be > 0, got {dv}")
    span = v_fire - v_min
    ratio = span / dv
    n_cells = round(ratio)
    if n_cells < 2 or abs(ratio - n_cells) > 1e-12 * max(abs(ratio), 1.0):
        raise GridAlignmentError(
            f"dv={dv} does not divide the domain [{v_min}, {v_fire}]: "
            f"(v_fire - v_min)/dv = {ratio} (remainder {ratio - n_cells:+.3e})"
        )
    reset_ratio = (v_reset - v_min) / dv
    reset_index = round(reset_ratio)
    if abs(reset_ratio - reset_index) > 1e-12 * max(abs(reset_ratio), 1.0):
        raise GridAlignmentError(
            f"v_reset={v_reset} falls between grid nodes for dv={dv}: "
            f"(v_reset - v_min)/dv = {reset_ratio} (remainder {reset_ratio - reset_index:+.3e})"
        )
    if not 0 < reset_index < n_cells:
        raise GridAlignmentError(
            f"v_reset={v_reset} must lie strictly inside ({v_min}, {v_fire})"
        )
    return VoltageGrid(v_min, v_fire, n_cells, span / n_cells, reset_index)


def aligned_mesh_size(n_neurons: int, v_min: float = -4.0, v_fire: float = 2.0,
                      v_reset: float = 1.0) -> float:
    """Cell width of order n_neurons^(-1/4), rounded so the grid aligns.

    Returns 1/m with m an integer near n_neurons^(1/4) such that make_grid
    accepts it; this is the mesh the error balance prescribes for a network
    of the given size.
    """
    m0 = max(1, round(n_neurons ** 0.25))
    for m in sorted(range(max(1, m0 - 3), m0 + 4), key=lambda m: (abs(m - m0), m)):
        try:
            make_grid(v_min, v_fire, v_reset, 1.0 / m)
            return 1.0 / m
        except GridAlignmentError:
            continue
    raise GridAlignmentError(
        f"no aligned mesh of size ~{n_neurons ** -0.25:.4g} found for "
        f"[{v_min}, {v_fire}] with reset {v_reset}"
    )


@dataclass(frozen=True)
class GaussianInit:
    """Gaussian initial voltage profile with mean and variance."""

    mean: float = -1.0
    variance: float = 0.5

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError(f"variance must be > 0, got {self.variance}")

    def pdf(self, v) -> np.ndarray:
        v = np.asarray(v, float)
        return np.exp(-((v - self.mean) ** 2) / (2.0 * self.variance)) / math.sqrt(
            2.0 * math.pi * self.variance
        )


def sample_gaussian_init(init: GaussianInit, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n i.i.d. voltages from the Gaussian initial profile."""
    if n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    return rng.normal(init.mean, math.sqrt(init.variance), size=n)


@dataclass(frozen=True)
class RandomSource:
    """Seedable, stream-splittable randomness.

    The same (seed, stream) always reproduces the same number sequence;
    distinct streams are statistically independent.  Each consumer owns its
    stream: share a RandomSource across threads only by giving each worker
    a different stream id.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, stream: int) -> "RandomSource":
        return RandomSource(self.seed, stream)

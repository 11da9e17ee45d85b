"""Hybrid driver: density solver while firing is low, particle solver through
synchronous bursts.

While the macroscopic solver runs, crossing the switch-up threshold at step k1
rewinds the run to step k1 - k_back (states buffered in a ring), draws a fresh
voltage configuration from the buffered density, and re-simulates forward
microscopically.  The particle solver hands back to the density solver once
the per-step rate has stayed below the switch-down threshold for k_back + 1
consecutive steps; by default the handoff happens at the current step (the
quiet window already certifies low activity), optionally rewinding k_back
steps to mirror the switch-up treatment.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .core import (GaussianInit, InputCurrent, NetworkParams, RandomSource,
                   VoltageGrid, eval_current, sample_gaussian_init)
from .macro import MacroState, initial_macro_state, macro_step_semi_implicit
from .micro import MicroState, UpdateRule, micro_step
from .switching import (PiecewiseUniformDensity, density_to_samples,
                        rate_from_counter, samples_to_density)

__all__ = [
    "SolverMode",
    "SwitchThrashError",
    "HybridConfig",
    "SwitchEvent",
    "HybridTrajectory",
    "run_pure",
    "run_switch_once",
    "run_hybrid",
]


class SolverMode(IntEnum):
    MACRO = 0
    MICRO = 1


class SwitchThrashError(RuntimeError):
    """The driver switched solvers more often than max_switches allows."""


@dataclass(frozen=True)
class HybridConfig:
    """Everything one run needs: physics, grids, thresholds, and strides."""

    params: NetworkParams
    current: InputCurrent
    grid: VoltageGrid
    init: GaussianInit
    t_max: float
    dt: float
    rule: UpdateRule = UpdateRule.REFRACTORY
    n_on: float = np.inf
    n_off: float = np.inf
    k_back: int = 10
    k_rec: int = 10
    rewind_on_switch_down: bool = False
    max_switches: int = 100
    strict_mfe: bool = True

    def __post_init__(self):
        if self.dt <= 0 or self.t_max <= 0:
            raise ValueError(f"need dt > 0 and t_max > 0, got {self.dt}, {self.t_max}")
        n = round(self.t_max / self.dt)
        if n < 1 or abs(n * self.dt - self.t_max) > 1e-9 * self.t_max:
            raise ValueError(f"t_max={self.t_max} is not an integer number of steps dt={self.dt}")
        if not (self.n_on > 0 and self.n_off > 0):
            raise ValueError(f"thresholds must be > 0, got n_on={self.n_on}, n_off={self.n_off}")
        if self.k_back < 0:
            raise ValueError(f"k_back must be >= 0, got {self.k_back}")
        if self.k_rec < 1:
            raise ValueError(f"k_rec must be >= 1, got {self.k_rec}")

    @property
    def n_steps(self) -> int:
        return round(self.t_max / self.dt)


@dataclass(frozen=True)
class SwitchEvent:
    """One solver handoff: triggered at `step`, simulation resumed at `restart_step`."""

    step: int
    time: float
    direction: str  # "macro_to_micro" | "micro_to_macro"
    restart_step: int


@dataclass
class HybridTrajectory:
    """Per-step record of one run plus the switch log and terminal state.

    ``rate[k]`` is the firing rate produced by the step ending at t_k (the
    initial boundary rate at k=0); ``mode[k]`` identifies the solver that
    produced the state at step k; ``mfe_size[k]`` is the firing-event size
    of micro steps (0 elsewhere), so cumulative spikes are its prefix sums.
    """

    dt: float
    rate: np.ndarray
    mode: np.ndarray
    mfe_size: np.ndarray
    events: list[SwitchEvent]
    terminal: MacroState | MicroState
    grid: VoltageGrid
    n_neurons: int
    k_rec: int
    wall_time: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.rate.size)

    def windowed_rates(self, k_rec: int | None = None) -> np.ndarray:
        """Rolling mean of the per-step rates over windows ending at each step.

        Full k_rec-step windows once available; shorter leading windows use
        the steps seen so far (entry 0 is the initial rate itself).
        """
        k_rec = self.k_rec if k_rec is None else k_rec
        r = self.rate
        out = np.empty_like(r)
        out[0] = r[0]
        csum = np.concatenate(([0.0], np.cumsum(r[1:])))
        k = np.arange(1, r.size)
        width = np.minimum(k, k_rec)
        out[1:] = (csum[k] - csum[k - width]) / width
        return out

    def mode_runs(self) -> list[tuple[SolverMode, int, int]]:
        """Contiguous (mode, first_step, last_step) runs of the mode log."""
        runs = []
        start = 0
        for k in range(1, self.mode.size):
            if self.mode[k] != self.mode[start]:
                runs.append((SolverMode(int(self.mode[start])), start, k - 1))
                start = k
        runs.append((SolverMode(int(self.mode[start])), start, self.mode.size - 1))
        return runs

    def micro_windows(self) -> list[tuple[int, int]]:
        return [(a, b) for m, a, b in self.mode_runs() if m is SolverMode.MICRO]

    def terminal_density(self) -> PiecewiseUniformDensity:
        """Terminal state as a density (micro configurations are histogrammed)."""
        if isinstance(self.terminal, MacroState):
            return PiecewiseUniformDensity(self.grid, self.terminal.p.copy())
        density, _ = samples_to_density(self.terminal.voltages, self.grid)
        return density


def _new_trajectory(config: HybridConfig) -> HybridTrajectory:
    n = config.n_steps
    return HybridTrajectory(
        dt=config.dt,
        rate=np.zeros(n + 1),
        mode=np.zeros(n + 1, dtype=np.int8),
        mfe_size=np.zeros(n + 1, dtype=np.int64),
        events=[],
        terminal=None,
        grid=config.grid,
        n_neurons=config.params.n_neurons,
        k_rec=config.k_rec,
    )


def _copy_macro(state: MacroState) -> MacroState:
    return MacroState(state.p.copy(), state.rate, state.step)


def _initial_voltages(config: HybridConfig, gen: np.random.Generator) -> np.ndarray:
    """Initial configuration: Gaussian samples conditioned below threshold.

    The density solver's initial profile lives on the truncated domain with
    p(v_fire) = 0, so the matching particle initialization redraws the (tail
    probability ~1e-5) samples at or above threshold rather than firing them
    at t=0.
    """
    v = sample_gaussian_init(config.init, config.params.n_neurons, gen)
    while True:
        high = np.flatnonzero(v >= config.params.v_fire)
        if high.size == 0:
            return v
        v[high] = sample_gaussian_init(config.init, high.size, gen)


def _record_macro(traj: HybridTrajectory, k: int, state: MacroState):
    traj.rate[k] = state.rate
    traj.mode[k] = SolverMode.MACRO
    traj.mfe_size[k] = 0


def _record_micro(traj: HybridTrajectory, k: int, rate: float, mfe_size: int):
    traj.rate[k] = rate
    traj.mode[k] = SolverMode.MICRO
    traj.mfe_size[k] = mfe_size


def run_pure(mode: SolverMode, config: HybridConfig, source: RandomSource) -> HybridTrajectory:
    """Run a single solver over the whole horizon (baseline driver).

    Macro mode starts from the Gaussian profile sampled on the grid; micro
    mode starts from i.i.d. Gaussian voltage samples.
    """
    gen = source.generator()
    traj = _new_trajectory(config)
    n, dt = config.n_steps, config.dt
    t0 = time.perf_counter()
    if mode is SolverMode.MACRO:
        state = initial_macro_state(config.grid, config.init, config.params)
        _record_macro(traj, 0, state)
        for k in range(n):
            i0 = eval_current(config.current, k * dt)
            state = macro_step_semi_implicit(state, config.grid, config.params, i0, dt)
            _record_macro(traj, k + 1, state)
        traj.terminal = state
    else:
        volts = _initial_voltages(config, gen)
        state = MicroState(volts, 0, 0)
        _record_micro(traj, 0, 0.0, 0)
        for k in range(n):
            state, rate, report = micro_step(
                state, config.params, config.current, dt, config.rule, gen,
                strict=config.strict_mfe)
            _record_micro(traj, k + 1, rate, report.size)
        traj.terminal = state
    traj.wall_time = time.perf_counter() - t0
    return traj


def run_switch_once(direction: str, config: HybridConfig, source: RandomSource) -> HybridTrajectory:
    """Force exactly one solver handoff at t_max/2, thresholds ignored."""
    if direction not in ("micro_then_macro", "macro_then_micro"):
        raise ValueError(f"unknown direction {direction!r}")
    gen = source.generator()
    traj = _new_trajectory(config)
    n, dt = config.n_steps, config.dt
    half = n // 2
    params, grid = config.params, config.grid
    t0 = time.perf_counter()
    if direction == "micro_then_macro":
        volts = _initial_voltages(config, gen)
        micro = MicroState(volts, 0, 0)
        _record_micro(traj, 0, 0.0, 0)
        prev_count = 0
        for k in range(half):
            prev_count = micro.spike_count
            micro, rate, report = micro_step(
                micro, params, config.current, dt, config.rule, gen,
                strict=config.strict_mfe)
            _record_micro(traj, k + 1, rate, report.size)
        density, _ = samples_to_density(micro.voltages, grid)
        handoff = rate_from_counter(micro.spike_count, prev_count, params.n_neurons, dt)
        macro = MacroState(density.weights, handoff, step=half)
        traj.events.append(SwitchEvent(half, half * dt, "micro_to_macro", half))
        for k in range(half, n):
            i0 = eval_current(config.current, k * dt)
            macro = macro_step_semi_implicit(macro, grid, params, i0, dt)
            _record_macro(traj, k + 1, macro)
        traj.terminal = macro
    else:
        macro = initial_macro_state(grid, config.init, params)
        _record_macro(traj, 0, macro)
        for k in range(half):
            i0 = eval_current(config.current, k * dt)
            macro = macro_step_semi_implicit(macro, grid, params, i0, dt)
            _record_macro(traj, k + 1, macro)
        volts = density_to_samples(
            PiecewiseUniformDensity(grid, macro.p.copy()), params.n_neurons, gen)
        micro = MicroState(volts, 0, half)
        traj.events.append(SwitchEvent(half, half * dt, "macro_to_micro", half))
        for k in range(half, n):
            micro, rate, report = micro_step(
                micro, params, config.current, dt, config.rule, gen,
                strict=config.strict_mfe)
            _record_micro(traj, k + 1, rate, report.size)
        traj.terminal = micro
    traj.wall_time = time.perf_counter() - t0
    return traj


def run_hybrid(config: HybridConfig, source: RandomSource) -> HybridTrajectory:
    """Threshold-driven hybrid run over [0, t_max].

    Starts macroscopically when the initial boundary rate is below n_on.
    Macro segments buffer the last k_back+1 states; when the rate exceeds
    n_on at step k1 the run rewinds to k1 - k_back (clamped to the segment
    start), converts the buffered density to samples with the spike counter
    reset, and continues microscopically.  Micro segments hand back once
    k_back+1 consecutive per-step rates stay below n_off.
    """
    gen = source.generator()
    traj = _new_trajectory(config)
    n, dt = config.n_steps, config.dt
    params, grid = config.params, config.grid
    n_switches = 0
    t0 = time.perf_counter()

    macro = initial_macro_state(grid, config.init, params)
    micro = None
    if macro.rate < config.n_on:
        cur = SolverMode.MACRO
        _record_macro(traj, 0, macro)
    else:
        cur = SolverMode.MICRO
        volts = density_to_samples(
            PiecewiseUniformDensity(grid, macro.p.copy()), params.n_neurons, gen)
        micro = MicroState(volts, 0, 0)
        traj.rate[0] = macro.rate
        traj.mode[0] = SolverMode.MICRO
    k = 0

    def check_thrash():
        nonlocal n_switches
        n_switches += 1
        if n_switches > config.max_switches:
            raise SwitchThrashError(
                f"exceeded max_switches={config.max_switches} at step {k} "
                f"(t={k * dt:.4g}); thresholds n_on={config.n_on}, "
                f"n_off={config.n_off} may be too close to the ambient rate"
            )

    while k < n:
        if cur is SolverMode.MACRO:
            ring = deque([_copy_macro(macro)], maxlen=config.k_back + 1)
            while k < n:
                i0 = eval_current(config.current, k * dt)
                macro = macro_step_semi_implicit(macro, grid, params, i0, dt)
                k += 1
                _record_macro(traj, k, macro)
                ring.append(_copy_macro(macro))
                if macro.rate > config.n_on:
                    check_thrash()
                    back = ring[0]
                    traj.events.append(
                        SwitchEvent(k, k * dt, "macro_to_micro", back.step))
                    volts = density_to_samples(
                        PiecewiseUniformDensity(grid, back.p.copy()),
                        params.n_neurons, gen)
                    micro = MicroState(volts, 0, back.step)
                    k = back.step
                    cur = SolverMode.MICRO
                    break
        else:
            quiet = 0
            ring = deque(maxlen=config.k_back + 1) if config.rewind_on_switch_down else None
            while k < n:
                prev_count = micro.spike_count
                micro, rate, report = micro_step(
                    micro, params, config.current, dt, config.rule, gen,
                    strict=config.strict_mfe)
                k += 1
                _record_micro(traj, k, rate, report.size)
                if ring is not None:
                    ring.append((k, micro.voltages.copy(), micro.spike_count, prev_count))
                quiet = quiet + 1 if rate < config.n_off else 0
                if quiet >= config.k_back + 1:
                    check_thrash()
                    if ring is not None and len(ring) == config.k_back + 1:
                        back_step, back_volts, back_count, back_prev = ring[0]
                    else:
                        back_step, back_volts, back_count, back_prev = (
                            k, micro.voltages, micro.spike_count, prev_count)
                    density, _ = samples_to_density(back_volts, grid)
                    handoff = rate_from_counter(
                        back_count, back_prev, params.n_neurons, dt)
                    macro = MacroState(density.weights, handoff, step=back_step)
                    traj.events.append(
                        SwitchEvent(k, k * dt, "micro_to_macro", back_step))
                    k = back_step
                    cur = SolverMode.MACRO
                    break

    traj.terminal = macro if cur is SolverMode.MACRO else micro
    traj.wall_time = time.perf_counter() - t0
    return traj

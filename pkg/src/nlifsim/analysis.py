"""Observables and the experiment harness: bias tables, pulse-amplitude
threshold search, refractory-rule divergence, Monte-Carlo scaling, the
Poisson diffusion-approximation check, and wall-time benchmarks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate

from .core import (Constant, GaussianInit, GaussianPulse, NetworkParams,
                   RandomSource, aligned_mesh_size, make_grid)
from .macro import MacroState, density_moments
from .micro import UpdateRule
from .multiscale import (HybridConfig, HybridTrajectory, SolverMode,
                         run_hybrid, run_pure, run_switch_once)
from .switching import PiecewiseUniformDensity, density_to_samples

__all__ = [
    "Observable",
    "FIRST_MOMENT",
    "CENTERED_SECOND",
    "CENTERED_THIRD",
    "custom_observable",
    "observable_on_config",
    "observable_on_density",
    "density_l1_distance",
    "baseline_config",
    "pulse_config",
    "BiasEntry",
    "BiasReport",
    "bias_study",
    "AmplitudeSearchResult",
    "amplitude_threshold_search",
    "RefractoryDivergence",
    "refractory_divergence",
    "ScalingReport",
    "mc_scaling_test",
    "DiffusionReport",
    "validate_diffusion_approximation",
    "BenchmarkRow",
    "benchmark",
    "ErrorBudget",
    "peak_rate",
]


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observable:
    """Voltage observable; centered kinds subtract the mean of the same
    configuration or density they are evaluated on."""

    kind: str
    coeffs: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("first_moment", "centered_second", "centered_third", "custom"):
            raise ValueError(f"unknown observable kind {self.kind!r}")
        if self.kind == "custom" and not self.coeffs:
            raise ValueError("custom observable needs polynomial coefficients")


FIRST_MOMENT = Observable("first_moment")
CENTERED_SECOND = Observable("centered_second")
CENTERED_THIRD = Observable("centered_third")


def custom_observable(coeffs) -> Observable:
    """Polynomial observable with ascending coefficients (c0 + c1 v + ...)."""
    return Observable("custom", tuple(float(c) for c in coeffs))


def observable_on_config(voltages: np.ndarray, obs: Observable = FIRST_MOMENT) -> float:
    """Ensemble mean (1/L) sum F(V_j) over a voltage configuration."""
    v = np.asarray(voltages, dtype=float)
    if v.size < 1:
        raise ValueError("empty voltage configuration")
    if obs.kind == "first_moment":
        return float(v.mean())
    if obs.kind == "centered_second":
        d = v - v.mean()
        return float(np.mean(d * d))
    if obs.kind == "centered_third":
        d = v - v.mean()
        return float(np.mean(d * d * d))
    return float(np.polynomial.polynomial.polyval(v, obs.coeffs).mean())


def _centered_poly(vbar: float, order: int) -> tuple[float, ...]:
    # ascending coefficients of (v - vbar)^order
    if order == 2:
        return (vbar * vbar, -2.0 * vbar, 1.0)
    return (-vbar**3, 3.0 * vbar * vbar, -3.0 * vbar, 1.0)


def observable_on_density(state, grid, obs: Observable = FIRST_MOMENT) -> float:
    """Observable mean against a discrete density via exact cell integrals.

    For centered observables the reference mean is the density's own first
    moment.
    """
    p = state.p if isinstance(state, MacroState) else np.asarray(state, dtype=float)
    if obs.kind == "first_moment":
        return density_moments(p, grid, (0.0, 1.0))
    if obs.kind in ("centered_second", "centered_third"):
        vbar = density_moments(p, grid, (0.0, 1.0))
        order = 2 if obs.kind == "centered_second" else 3
        return density_moments(p, grid, _centered_poly(vbar, order))
    return density_moments(p, grid, obs.coeffs)


def density_l1_distance(weights_a: np.ndarray, weights_b: np.ndarray, dv: float) -> float:
    return float(np.abs(np.asarray(weights_a) - np.asarray(weights_b)).sum() * dv)


def peak_rate(traj: HybridTrajectory, k_rec: int | None = None) -> tuple[float, float]:
    """(value, time) of the maximum window-averaged firing rate."""
    w = traj.windowed_rates(k_rec)
    k = int(np.argmax(w))
    return float(w[k]), float(traj.times[k])


# ---------------------------------------------------------------------------
# run configuration helpers


def baseline_config(connectivity: float, n_neurons: int, *, t_max: float = 3.0,
                    dt: float = 5e-5, rule: UpdateRule = UpdateRule.NO_REFRACTORY,
                    k_rec: int = 100, dv: float | None = None,
                    init: GaussianInit = GaussianInit(-1.0, 0.5),
                    diffusion: float = 1.0) -> HybridConfig:
    """Quiet-network configuration: no external current, mesh ~ L^(-1/4)."""
    params = NetworkParams(connectivity=connectivity, n_neurons=n_neurons,
                           diffusion=diffusion)
    dv = aligned_mesh_size(n_neurons) if dv is None else dv
    grid = make_grid(params.v_min, params.v_fire, params.v_reset, dv)
    return HybridConfig(params=params, current=Constant(0.0), grid=grid, init=init,
                        t_max=t_max, dt=dt, rule=rule, k_rec=k_rec)


def pulse_config(connectivity: float, amplitude: float, n_neurons: int, *,
                 concentration: float = 100.0, center: float = 0.5,
                 t_max: float = 1.0, dt: float = 1e-4,
                 rule: UpdateRule = UpdateRule.REFRACTORY, k_rec: int = 10,
                 dv: float | None = None, n_on: float = 10.0, n_off: float = 10.0,
                 k_back: int = 10, strict_mfe: bool = True,
                 init: GaussianInit = GaussianInit(-1.0, 0.5)) -> HybridConfig:
    """Single-pulse configuration used by the synchronous-network studies."""
    params = NetworkParams(connectivity=connectivity, n_neurons=n_neurons)
    dv = aligned_mesh_size(n_neurons) if dv is None else dv
    grid = make_grid(params.v_min, params.v_fire, params.v_reset, dv)
    current = GaussianPulse(amplitude, concentration, center)
    return HybridConfig(params=params, current=current, grid=grid, init=init,
                        t_max=t_max, dt=dt, rule=rule, n_on=n_on, n_off=n_off,
                        k_back=k_back, k_rec=k_rec, strict_mfe=strict_mfe)


def _map_indexed(fn, count: int, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


# ---------------------------------------------------------------------------
# bias study (four solver/switching combinations against the pure particle run)

OBSERVABLES = (FIRST_MOMENT, CENTERED_SECOND, CENTERED_THIRD)
_OBS_NAMES = {FIRST_MOMENT: "first", CENTERED_SECOND: "second", CENTERED_THIRD: "third"}


@dataclass(frozen=True)
class BiasEntry:
    n_neurons: int
    observable: str
    pair: str
    bias: float


@dataclass
class BiasReport:
    """Mean absolute observable biases between the pure particle run (test 1)
    and the density / switched runs (tests 2-4), per network size."""

    entries: list[BiasEntry]
    n_rep: int
    description: str = ""

    def get(self, n_neurons: int, observable: str, pair: str) -> float:
        for e in self.entries:
            if (e.n_neurons, e.observable, e.pair) == (n_neurons, observable, pair):
                return e.bias
        raise KeyError((n_neurons, observable, pair))


def _config_observables(voltages) -> np.ndarray:
    return np.array([observable_on_config(voltages, o) for o in OBSERVABLES])


def _density_observables(state, grid) -> np.ndarray:
    return np.array([observable_on_density(state, grid, o) for o in OBSERVABLES])


def bias_study(connectivity: float, sizes, n_rep: int, source: RandomSource, *,
               t_max: float = 3.0, dt: float = 5e-5,
               rule: UpdateRule = UpdateRule.NO_REFRACTORY,
               threads: int = 1) -> BiasReport:
    """Repeat tests 1-4 n_rep times per network size and average |F1 - Fm|.

    Test 1: particle solver throughout.  Test 2: density solver throughout
    (deterministic, computed once per size).  Test 3: particle then density,
    switched at t_max/2.  Test 4: density then particle.  Replicas use
    independent random streams; test 2's observables are evaluated on the
    terminal density, tests 1 and 4 on the terminal configuration.
    """
    if n_rep < 2:
        raise ValueError(f"need n_rep >= 2, got {n_rep}")
    entries = []
    for size_idx, n_neurons in enumerate(sizes):
        cfg = baseline_config(connectivity, n_neurons, t_max=t_max, dt=dt, rule=rule)
        macro_traj = run_pure(SolverMode.MACRO, cfg, source.substream(0))
        f2 = _density_observables(macro_traj.terminal, cfg.grid)

        base = 1 + size_idx * 3 * n_rep

        def one_rep(rep, cfg=cfg, base=base):
            s = lambda j: source.substream(base + 3 * rep + j)
            t1 = run_pure(SolverMode.MICRO, cfg, s(0))
            t3 = run_switch_once("micro_then_macro", cfg, s(1))
            t4 = run_switch_once("macro_then_micro", cfg, s(2))
            return (_config_observables(t1.terminal.voltages),
                    _density_observables(t3.terminal, cfg.grid),
                    _config_observables(t4.terminal.voltages))

        results = _map_indexed(one_rep, n_rep, threads)
        f1 = np.array([r[0] for r in results])
        f3 = np.array([r[1] for r in results])
        f4 = np.array([r[2] for r in results])
        bias = {
            "test1-test2": np.mean(np.abs(f1 - f2[None, :]), axis=0),
            "test1-test3": np.mean(np.abs(f1 - f3), axis=0),
            "test1-test4": np.mean(np.abs(f1 - f4), axis=0),
        }
        for pair, values in bias.items():
            for obs, value in zip(OBSERVABLES, values):
                entries.append(BiasEntry(n_neurons, _OBS_NAMES[obs], pair, float(value)))
    return BiasReport(entries, n_rep,
                      description=f"b={connectivity}, t_max={t_max}, dt={dt}")


# ---------------------------------------------------------------------------
# pulse amplitude threshold search (minimal amplitude reaching a target rate)


@dataclass
class AmplitudeSearchResult:
    connectivity: float
    rate_threshold: float
    minimal_amplitude: float | None
    lattice_step: float
    resolution: float
    peak_rates: dict[float, float] = field(default_factory=dict)


def amplitude_threshold_search(connectivity: float, rate_threshold: float,
                               source: RandomSource, *, n_neurons: int = 10_000,
                               t_max: float = 1.0, dt: float = 1e-4,
                               concentration: float = 100.0, center: float = 0.2,
                               k_rec: int = 10,
                               rule: UpdateRule = UpdateRule.REFRACTORY,
                               lattice_step: float = 0.5, amplitude_max: float = 40.0,
                               ) -> AmplitudeSearchResult:
    """Smallest pulse amplitude whose peak windowed rate reaches the threshold.

    Scans the lattice {0, lattice_step, 2*lattice_step, ...} for the first
    amplitude whose particle run peaks at or above the threshold, then
    refines the bracket once by bisection (final resolution lattice_step/2).
    Each amplitude is evaluated with its own fixed random stream keyed by the
    amplitude value, so repeated searches reuse identical peak estimates and
    the returned amplitude is monotone in the threshold.
    """
    resolution = lattice_step / 2.0
    peaks: dict[float, float] = {}

    def peak_for(amplitude: float) -> float:
        if amplitude not in peaks:
            cfg = pulse_config(connectivity, amplitude, n_neurons,
                               concentration=concentration, center=center,
                               t_max=t_max, dt=dt, rule=rule, k_rec=k_rec,
                               strict_mfe=False)
            stream = round(amplitude / resolution)
            traj = run_pure(SolverMode.MICRO, cfg, source.substream(stream))
            peaks[amplitude] = peak_rate(traj)[0]
        return peaks[amplitude]

    result = AmplitudeSearchResult(connectivity, rate_threshold, None,
                                   lattice_step, resolution, peaks)
    found = None
    n_lattice = int(np.floor(amplitude_max / lattice_step)) + 1
    for i in range(n_lattice):
        amplitude = i * lattice_step
        if peak_for(amplitude) >= rate_threshold:
            found = amplitude
            break
    if found is None:
        return result
    if found > 0:
        mid = found - resolution
        if peak_for(mid) >= rate_threshold:
            found = mid
    result.minimal_amplitude = found
    return result


# ---------------------------------------------------------------------------
# refractory vs no-refractory divergence


@dataclass
class RefractoryDivergence:
    """Sup distance between windowed rate curves of the two update rules."""

    connectivity: float
    amplitude: float
    sup_distance: float
    times: np.ndarray
    windowed_refractory: np.ndarray
    windowed_no_refractory: np.ndarray


def refractory_divergence(connectivity: float, amplitude: float,
                          source: RandomSource, *, n_neurons: int = 10_000,
                          t_max: float = 1.0, dt: float = 1e-4,
                          concentration: float = 100.0, center: float = 0.2,
                          k_rec: int = 10) -> RefractoryDivergence:
    """Run both update rules with identical noise and compare rate curves.

    The no-refractory run executes in diagnostic mode (update-rule violations
    are logged, not raised), since large n_neurons*kick makes re-firing
    unavoidable there.
    """
    trajs = {}
    for rule in (UpdateRule.REFRACTORY, UpdateRule.NO_REFRACTORY):
        cfg = pulse_config(connectivity, amplitude, n_neurons,
                           concentration=concentration, center=center,
                           t_max=t_max, dt=dt, rule=rule, k_rec=k_rec,
                           strict_mfe=False)
        trajs[rule] = run_pure(SolverMode.MICRO, cfg, source)
    w_ref = trajs[UpdateRule.REFRACTORY].windowed_rates()
    w_plain = trajs[UpdateRule.NO_REFRACTORY].windowed_rates()
    sup = float(np.max(np.abs(w_ref - w_plain)))
    return RefractoryDivergence(connectivity, amplitude, sup,
                                trajs[UpdateRule.REFRACTORY].times, w_ref, w_plain)


# ---------------------------------------------------------------------------
# Monte-Carlo scaling of the resampling error


@dataclass
class ScalingReport:
    sizes: np.ndarray
    rms_errors: np.ndarray
    slope: float


def mc_scaling_test(density: PiecewiseUniformDensity, sizes, n_rep: int,
                    source: RandomSource, observable: Observable = FIRST_MOMENT,
                    threads: int = 1) -> ScalingReport:
    """RMS observable error of i.i.d. resampling vs sample count, with the
    fitted log-log slope (CLT predicts -1/2)."""
    sizes = np.asarray(sorted(sizes), dtype=int)
    reference = observable_on_density(density.weights, density.grid, observable)
    rms = np.empty(sizes.size)
    for i, n in enumerate(sizes):
        def one(rep, n=n, i=i):
            gen = source.substream(1 + i * n_rep + rep).generator()
            draws = density_to_samples(density, int(n), gen)
            return observable_on_config(draws, observable) - reference
        errs = np.array(_map_indexed(one, n_rep, threads))
        rms[i] = np.sqrt(np.mean(errs**2))
    if sizes.size >= 2:
        slope = float(np.polyfit(np.log10(sizes), np.log10(rms), 1)[0])
    else:
        slope = float("nan")
    return ScalingReport(sizes, rms, slope)


# ---------------------------------------------------------------------------
# diffusion approximation of the aggregate synaptic current


@dataclass
class DiffusionReport:
    """Empirical vs closed-form moments of the aggregated kick process.

    The aggregate of n_neurons independent Poisson spike trains with rate
    N(t), each spike contributing one kick, has mean kick*L*int(N) and
    variance kick^2*L*int(N) at time t_max.
    """

    mean_empirical: float
    mean_expected: float
    mean_band: float
    var_empirical: float
    var_expected: float
    var_band: float
    n_rep: int

    @property
    def mean_ok(self) -> bool:
        return abs(self.mean_empirical - self.mean_expected) <= self.mean_band

    @property
    def var_ok(self) -> bool:
        return abs(self.var_empirical - self.var_expected) <= self.var_band


def validate_diffusion_approximation(rate, kick: float, n_neurons: int,
                                     t_max: float, n_rep: int,
                                     source: RandomSource,
                                     rate_bound: float | None = None) -> DiffusionReport:
    """Simulate the aggregate synaptic current by Poisson thinning and compare
    its moments across replicas against the closed forms.

    ``rate`` is a constant or a callable of time; ``rate_bound`` must dominate
    a callable rate on [0, t_max] (defaults to the constant's value).
    Bands are 4-sigma: CLT for the mean, chi-square concentration for the
    sample variance.
    """
    if callable(rate):
        if rate_bound is None:
            raise ValueError("rate_bound is required for a time-dependent rate")
        integral = scipy.integrate.quad(rate, 0.0, t_max)[0]
        rate_fn = rate
    else:
        rate_bound = float(rate) if rate_bound is None else rate_bound
        integral = float(rate) * t_max
        rate_fn = None
    if integral < 0 or rate_bound < 0:
        raise ValueError("rate must be nonnegative")

    gen = source.generator()
    totals = np.empty(n_rep)
    lam = n_neurons * rate_bound * t_max
    for rep in range(n_rep):
        n_cand = gen.poisson(lam)
        if n_cand == 0:
            totals[rep] = 0.0
            continue
        times = gen.uniform(0.0, t_max, n_cand)
        if rate_fn is None:
            accept = gen.random(n_cand) * rate_bound < float(rate)
        else:
            accept = gen.random(n_cand) * rate_bound < rate_fn(times)
        totals[rep] = kick * int(np.count_nonzero(accept))

    mean_expected = kick * n_neurons * integral
    var_expected = kick * kick * n_neurons * integral
    mean_band = 4.0 * np.sqrt(var_expected / n_rep)
    var_band = 4.0 * var_expected * np.sqrt(2.0 / max(n_rep - 1, 1))
    return DiffusionReport(float(totals.mean()), mean_expected, float(mean_band),
                           float(totals.var(ddof=1)) if n_rep > 1 else 0.0,
                           var_expected, float(var_band), n_rep)


# ---------------------------------------------------------------------------
# wall-time benchmark


@dataclass(frozen=True)
class BenchmarkRow:
    label: str
    n_neurons: int
    micro_seconds: float
    multiscale_seconds: float

    @property
    def speedup(self) -> float:
        return self.micro_seconds / self.multiscale_seconds


def benchmark(cases, source: RandomSource, warmup: bool = True) -> list[BenchmarkRow]:
    """Wall-clock comparison of the pure particle solver vs the hybrid driver.

    ``cases`` is an iterable of (label, HybridConfig).  A small throwaway run
    warms caches before timing.
    """
    if warmup:
        cfg = pulse_config(0.5, 4.0, 256, t_max=0.02, dt=1e-4, dv=0.5)
        run_pure(SolverMode.MICRO, cfg, source.substream(10_000))
        run_hybrid(cfg, source.substream(10_001))
    rows = []
    for i, (label, cfg) in enumerate(cases):
        micro = run_pure(SolverMode.MICRO, cfg, source.substream(2 * i))
        hybrid = run_hybrid(cfg, source.substream(2 * i + 1))
        rows.append(BenchmarkRow(label, cfg.params.n_neurons,
                                 micro.wall_time, hybrid.wall_time))
    return rows


# ---------------------------------------------------------------------------
# error budget decomposition


@dataclass(frozen=True)
class ErrorBudget:
    """Sampling / discretization / resampling contributions to the observable
    error between a particle run and the density pipeline."""

    e_sampling: float
    e_discretization: float
    e_resampling: float
    measured_total: float | None = None

    @property
    def bound(self) -> float:
        return self.e_sampling + self.e_discretization + self.e_resampling

    def consistent(self, slack: float = 1.0) -> bool:
        """Whether the measured total respects the triangle-inequality bound.

        ``slack`` scales the bound to absorb replica noise in the estimates.
        """
        if self.measured_total is None:
            return True
        return self.measured_total <= slack * self.bound

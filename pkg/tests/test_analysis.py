import math

import numpy as np
import pytest

from nlifsim import (CENTERED_SECOND, CENTERED_THIRD, FIRST_MOMENT,
                     ErrorBudget, GaussianInit, PiecewiseUniformDensity,
                     SolverMode, make_grid, run_pure)
from nlifsim.analysis import (amplitude_threshold_search, baseline_config,
                              benchmark, bias_study, custom_observable,
                              density_l1_distance, mc_scaling_test,
                              observable_on_config, observable_on_density,
                              peak_rate, pulse_config, refractory_divergence,
                              validate_diffusion_approximation)


class TestObservables:
    def test_degenerate_configuration(self):
        v = np.full(17, 0.73)
        assert observable_on_config(v, FIRST_MOMENT) == pytest.approx(0.73)
        assert observable_on_config(v, CENTERED_SECOND) == 0.0
        assert observable_on_config(v, CENTERED_THIRD) == 0.0

    def test_two_point_variance(self):
        assert observable_on_config(np.array([0.0, 2.0]), CENTERED_SECOND) == 1.0

    def test_gaussian_sample_mean_band(self, source):
        draws = source.generator().normal(-1.0, math.sqrt(0.5), 10_000)
        got = observable_on_config(draws, FIRST_MOMENT)
        assert abs(got + 1.0) <= 4.0 * math.sqrt(0.5 / 10_000)

    def test_custom_polynomial(self):
        v = np.array([1.0, 2.0, 3.0])
        obs = custom_observable((1.0, 0.0, 1.0))  # 1 + v^2
        assert observable_on_config(v, obs) == pytest.approx(1.0 + 14.0 / 3.0)

    def test_density_centered_moments_match_quadrature(self, grid, rng):
        from nlifsim import density_moments
        w = rng.random(grid.n_interior)
        d = PiecewiseUniformDensity(grid, w)
        vbar = density_moments(d.weights, grid, (0.0, 1.0))
        for obs, order in ((CENTERED_SECOND, 2), (CENTERED_THIRD, 3)):
            got = observable_on_density(d.weights, grid, obs)
            oracle = density_moments(d.weights, grid, lambda v: (v - vbar) ** order)
            assert got == pytest.approx(oracle, rel=1e-12)


class TestBiasStudy:
    def test_identical_streams_give_zero_bias(self, source):
        cfg = baseline_config(0.5, 256, t_max=0.1, dt=1e-3, dv=0.25)
        a = run_pure(SolverMode.MICRO, cfg, source)
        b = run_pure(SolverMode.MICRO, cfg, source)
        fa = observable_on_config(a.terminal.voltages, FIRST_MOMENT)
        fb = observable_on_config(b.terminal.voltages, FIRST_MOMENT)
        assert fa == fb

    def test_small_study_shape_and_signs(self, source):
        report = bias_study(0.5, [256], 2, source, t_max=0.1, dt=1e-3)
        assert len(report.entries) == 9
        assert all(e.bias >= 0 for e in report.entries)
        assert report.get(256, "first", "test1-test2") >= 0
        with pytest.raises(KeyError):
            report.get(256, "first", "test1-test9")

    def test_threads_do_not_change_results(self, source):
        a = bias_study(0.5, [256], 3, source, t_max=0.1, dt=1e-3, threads=1)
        b = bias_study(0.5, [256], 3, source, t_max=0.1, dt=1e-3, threads=3)
        for ea, eb in zip(a.entries, b.entries):
            assert ea == eb


class TestMcScaling:
    def test_sampling_slope_is_minus_half(self, grid, source):
        init = GaussianInit(-1.0, 0.5)
        density = PiecewiseUniformDensity(grid, init.pdf(grid.interior_centers))
        report = mc_scaling_test(density, [1000, 10_000, 100_000], 200, source)
        assert report.slope == pytest.approx(-0.5, abs=0.1)

    def test_rms_is_stable_in_replica_count(self, grid, source):
        init = GaussianInit(-1.0, 0.5)
        density = PiecewiseUniformDensity(grid, init.pdf(grid.interior_centers))
        a = mc_scaling_test(density, [5000], 150, source)
        b = mc_scaling_test(density, [5000], 300, source.substream(9))
        assert a.rms_errors[0] / b.rms_errors[0] == pytest.approx(1.0, abs=0.35)


class TestDiffusionApproximation:
    def test_constant_rate_moments(self, source):
        report = validate_diffusion_approximation(5.0, 1e-3, 1000, 1.0, 200, source)
        assert report.mean_expected == pytest.approx(5.0)
        assert report.var_expected == pytest.approx(5e-3)
        assert report.mean_ok and report.var_ok

    def test_zero_rate_is_exactly_zero(self, source):
        report = validate_diffusion_approximation(0.0, 1e-3, 1000, 1.0, 50, source)
        assert report.mean_empirical == 0.0
        assert report.var_empirical == 0.0
        assert report.mean_ok and report.var_ok

    def test_time_dependent_rate(self, source):
        rate = lambda t: 3.0 * (1.0 + np.sin(2 * np.pi * np.asarray(t)))
        report = validate_diffusion_approximation(rate, 1e-3, 2000, 1.0, 300,
                                                  source, rate_bound=6.0)
        assert report.mean_expected == pytest.approx(2000 * 1e-3 * 3.0, rel=1e-6)
        assert report.mean_ok and report.var_ok

    def test_callable_needs_bound(self, source):
        with pytest.raises(ValueError):
            validate_diffusion_approximation(lambda t: 1.0, 1e-3, 10, 1.0, 5, source)


class TestAmplitudeSearch:
    def test_zero_threshold_returns_lattice_origin(self, source):
        result = amplitude_threshold_search(
            0.5, 0.0, source, n_neurons=200, t_max=0.05, dt=1e-3,
            lattice_step=1.0, amplitude_max=4.0)
        assert result.minimal_amplitude == 0.0

    def test_threshold_monotonicity(self, source):
        kwargs = dict(n_neurons=400, t_max=0.3, dt=1e-3, concentration=100.0,
                      center=0.15, lattice_step=1.0, amplitude_max=30.0)
        low = amplitude_threshold_search(1.0, 2.0, source, **kwargs)
        high = amplitude_threshold_search(1.0, 4.0, source, **kwargs)
        assert low.minimal_amplitude is not None
        assert high.minimal_amplitude is not None
        assert high.minimal_amplitude >= low.minimal_amplitude

    def test_unreachable_threshold_reports_not_found(self, source):
        result = amplitude_threshold_search(
            0.1, 1e9, source, n_neurons=100, t_max=0.05, dt=1e-3,
            lattice_step=2.0, amplitude_max=4.0)
        assert result.minimal_amplitude is None
        assert result.peak_rates  # evaluations are reported back


class TestAmplitudeSearchProductionScale:
    @pytest.mark.slow
    def test_minimal_amplitude_at_unit_connectivity(self, source):
        # the synchronization-onset amplitude at b=1 is around 16 (+-25%)
        result = amplitude_threshold_search(1.0, 15.0, source, n_neurons=10_000,
                                            lattice_step=1.0, amplitude_max=24.0)
        assert result.minimal_amplitude is not None
        assert 12.0 <= result.minimal_amplitude <= 20.0


class TestRefractoryDivergence:
    def test_no_pulse_no_divergence(self, source):
        result = refractory_divergence(0.1, 0.0, source, n_neurons=500,
                                       t_max=0.2, dt=1e-3)
        assert result.sup_distance == 0.0

    def test_identical_noise_shared_prefix(self, source):
        # before any firing event the two rate curves are identical
        result = refractory_divergence(1.0, 6.0, source, n_neurons=500,
                                       t_max=0.3, dt=1e-3, center=0.15)
        w1, w2 = result.windowed_refractory, result.windowed_no_refractory
        first_spike = np.flatnonzero((w1 > 0) | (w2 > 0))
        assert first_spike.size > 0
        k = first_spike[0]
        np.testing.assert_array_equal(w1[:k], w2[:k])


class TestBenchmark:
    def test_smoke_rows(self, source):
        cfg = pulse_config(0.5, 6.0, 256, t_max=0.05, dt=1e-3, dv=0.25,
                           n_on=5.0, n_off=5.0, k_back=3, k_rec=3)
        rows = benchmark([("tiny", cfg)], source, warmup=False)
        assert len(rows) == 1
        row = rows[0]
        assert row.micro_seconds > 0 and row.multiscale_seconds > 0
        assert row.speedup == pytest.approx(row.micro_seconds / row.multiscale_seconds)


class TestErrorBudget:
    def test_triangle_bound(self, grid, source):
        init = GaussianInit(-1.0, 0.5)
        density = PiecewiseUniformDensity(grid, init.pdf(grid.interior_centers))
        scaling = mc_scaling_test(density, [2000], 200, source)
        e_sample = float(scaling.rms_errors[0])
        fine = make_grid(grid.v_min, grid.v_fire, 1.0, grid.dv / 2)
        fine_density = PiecewiseUniformDensity(fine, init.pdf(fine.interior_centers))
        e_disc = abs(observable_on_density(density.weights, grid, FIRST_MOMENT)
                     - observable_on_density(fine_density.weights, fine, FIRST_MOMENT))
        budget = ErrorBudget(e_sample, e_disc, e_sample)
        assert budget.bound == pytest.approx(2 * e_sample + e_disc)
        # a measured total drawn from the same pipeline respects the bound
        gen = source.substream(77).generator()
        from nlifsim import density_to_samples
        draws = density_to_samples(density, 2000, gen)
        measured = abs(observable_on_config(draws, FIRST_MOMENT)
                       - observable_on_density(density.weights, grid, FIRST_MOMENT))
        report = ErrorBudget(e_sample, e_disc, e_sample, measured_total=measured)
        assert report.consistent(slack=4.0)


class TestHelpers:
    def test_peak_rate(self, source):
        cfg = pulse_config(1.0, 12.0, 800, t_max=0.4, dt=5e-4, dv=0.25,
                           init=GaussianInit(0.5, 0.25))
        traj = run_pure(SolverMode.MICRO, cfg, source)
        value, t = peak_rate(traj)
        assert value == traj.windowed_rates().max()
        assert 0.0 <= t <= cfg.t_max

    def test_density_l1(self):
        assert density_l1_distance([1.0, 2.0], [2.0, 0.5], 0.1) == pytest.approx(0.25)

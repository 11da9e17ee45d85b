import math

import numpy as np
import pytest

from nlifsim import (EmptyDensityError, PiecewiseUniformDensity, RandomSource,
                     density_moments, density_to_samples, make_grid,
                     rate_from_counter, samples_to_density)


def peaked_density(grid, hot_cells):
    w = np.zeros(grid.n_interior)
    for i, v in hot_cells.items():
        w[i] = v
    return PiecewiseUniformDensity(grid, w)


def smooth_density(grid):
    centers = grid.interior_centers
    w = np.exp(-((centers + 1.0) ** 2))
    return PiecewiseUniformDensity(grid, w)


class TestPiecewiseUniformDensity:
    def test_renormalized_at_construction(self, grid, rng):
        w = rng.random(grid.n_interior)
        d = PiecewiseUniformDensity(grid, w)
        assert d.weights.sum() * grid.dv == pytest.approx(1.0, abs=1e-12)

    def test_all_zero_rejected(self, grid):
        with pytest.raises(EmptyDensityError):
            PiecewiseUniformDensity(grid, np.zeros(grid.n_interior))

    def test_negative_weight_rejected(self, grid):
        w = np.ones(grid.n_interior)
        w[3] = -0.5
        with pytest.raises(ValueError):
            PiecewiseUniformDensity(grid, w)


class TestDensityToSamples:
    def test_single_cell_support(self, source):
        grid = make_grid(-4.0, 2.0, 1.0, 0.5)
        d = peaked_density(grid, {4: 1.0})
        draws = density_to_samples(d, 500, source.generator())
        lo = grid.interior_edges[4]
        assert (draws >= lo).all() and (draws < lo + grid.dv).all()

    def test_mean_within_clt_band(self, grid, source):
        d = smooth_density(grid)
        mean = density_moments(d.weights, grid, (0.0, 1.0))
        second = density_moments(d.weights, grid, (0.0, 0.0, 1.0))
        std = math.sqrt(second - mean**2)
        n = 10_000
        draws = density_to_samples(d, n, source.generator())
        assert abs(draws.mean() - mean) <= 4.0 * std / math.sqrt(n)

    def test_replicated_expectation_identity(self, grid, source):
        # E[(1/L) sum F(V_j)] equals the density observable for i.i.d. samples
        d = smooth_density(grid)
        expected = density_moments(d.weights, grid, (0.0, 0.0, 1.0))
        gen = source.generator()
        n, reps = 1000, 1000
        means = np.empty(reps)
        for r in range(reps):
            draws = density_to_samples(d, n, gen)
            means[r] = np.mean(draws**2)
        mean4 = density_moments(d.weights, grid, (0.0,) * 4 + (1.0,))
        std_f = math.sqrt(max(mean4 - expected**2, 0.0))
        assert abs(means.mean() - expected) <= 4.0 * std_f / math.sqrt(n * reps)

    def test_support_never_leaves_domain(self, grid, source):
        d = smooth_density(grid)
        draws = density_to_samples(d, 50_000, source.generator())
        assert draws.min() >= grid.v_min
        assert draws.max() < grid.v_fire

    def test_deterministic_under_fixed_stream(self, grid):
        d = smooth_density(grid)
        a = density_to_samples(d, 256, RandomSource(5).generator())
        b = density_to_samples(d, 256, RandomSource(5).generator())
        np.testing.assert_array_equal(a, b)


class TestSamplesToDensity:
    def test_single_bin_histogram(self):
        grid = make_grid(-4.0, 2.0, 1.0, 0.5)
        volts = np.array([0.3, 0.4, 0.3, 0.45])  # all inside one cell
        density, dropped = samples_to_density(volts, grid)
        assert dropped == 0
        hot = np.flatnonzero(density.weights)
        assert hot.size == 1
        assert density.weights[hot[0]] == pytest.approx(1.0 / grid.dv)

    def test_round_trip_multinomial_band(self, grid, source):
        d = smooth_density(grid)
        n = 1_000_000
        draws = density_to_samples(d, n, source.generator())
        back, dropped = samples_to_density(draws, grid)
        assert dropped == 0
        band = 5.0 * math.sqrt(d.weights.max() / (n * grid.dv))
        assert np.abs(back.weights - d.weights).max() <= band

    def test_out_of_domain_neurons_are_dropped(self):
        grid = make_grid(-4.0, 2.0, 1.0, 0.5)
        volts = np.array([-4.0, -3.9, 0.5, 1.5])  # two below v_min + dv/2
        density, dropped = samples_to_density(volts, grid)
        assert dropped == 2
        assert density.weights.sum() * grid.dv == pytest.approx(1.0, abs=1e-12)

    def test_all_out_of_domain_raises(self, grid):
        with pytest.raises(EmptyDensityError):
            samples_to_density(np.array([-5.0, 1.999]), grid)

    def test_drop_warning_above_threshold(self, grid, source, caplog):
        volts = np.concatenate([np.full(10, -5.0), source.generator().normal(0, 0.3, 100)])
        with caplog.at_level("WARNING", logger="nlifsim.switching"):
            samples_to_density(volts, grid)
        assert "dropped" in caplog.text

    def test_normalization_invariant(self, grid, source):
        draws = source.generator().normal(-1.0, 0.7, 5000)
        density, _ = samples_to_density(draws, grid)
        assert density.weights.sum() * grid.dv == pytest.approx(1.0, abs=1e-12)


class TestRateFromCounter:
    def test_no_change_is_zero(self):
        assert rate_from_counter(7, 7, 100, 0.1) == 0.0

    def test_arithmetic(self):
        assert rate_from_counter(1016, 1000, 160_000, 1e-4) == pytest.approx(1.0)

    def test_rate_quantum_for_single_spike(self):
        assert rate_from_counter(1, 0, 160_000, 1e-4) == pytest.approx(0.0625)

    def test_decreasing_counter_rejected(self):
        with pytest.raises(ValueError):
            rate_from_counter(3, 5, 10, 0.1)

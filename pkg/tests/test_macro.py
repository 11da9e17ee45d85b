import math

import numpy as np
import pytest
import scipy.stats

from nlifsim import (GaussianInit, MacroState, NetworkParams,
                     StabilityError, boundary_rate,
                     compute_weights, density_moments, initial_macro_state,
                     macro_step_explicit, macro_step_semi_implicit, make_grid,
                     samples_to_density, total_mass)


@pytest.fixture
def macro_params():
    return NetworkParams(connectivity=1.0, n_neurons=10_000, diffusion=1.0)


def random_state(grid, params, rng, rate=None):
    p = rng.random(grid.n_interior) + 1e-3
    p /= p.sum() * grid.dv
    rate = boundary_rate(p, grid, params) if rate is None else rate
    return MacroState(p, rate)


class TestWeights:
    def test_peak_at_drift_center(self, macro_params):
        grid = make_grid(-4.0, 2.0, 1.0, 0.5)
        # drift center v_leak + I0 + b*N = 0 sits exactly on a node
        w = compute_weights(grid, macro_params, 0.0, 0.0)
        i0 = np.argmin(np.abs(grid.centers))
        assert grid.centers[i0] == 0.0
        assert w.node[i0] == 1.0
        assert w.node.max() == 1.0

    def test_direct_value(self, macro_params):
        grid = make_grid(-4.0, 2.0, 1.0, 0.5)
        w = compute_weights(grid, macro_params, 0.0, 0.0)
        assert w.node[-1] == pytest.approx(math.exp(-2.0), rel=1e-14)

    def test_harmonic_mean_of_equal_neighbors(self, macro_params):
        # drift center at a half-node makes the adjacent node weights equal
        grid = make_grid(-4.0, 2.0, 1.0, 1.0)
        w = compute_weights(grid, macro_params, -1.5, 0.0)
        i = np.argmin(np.abs(grid.centers - (-2.0)))
        assert w.node[i] == pytest.approx(w.node[i + 1], rel=1e-14)
        assert w.half[i] == pytest.approx(w.node[i], rel=1e-14)

    def test_bounds_and_betweenness(self, macro_params, grid):
        w = compute_weights(grid, macro_params, 3.0, 2.0)
        assert (w.node > 0).all() and (w.node <= 1.0).all()
        lo = np.minimum(w.node[:-1], w.node[1:])
        hi = np.maximum(w.node[:-1], w.node[1:])
        assert (w.half >= lo * (1 - 1e-15)).all()
        assert (w.half <= hi * (1 + 1e-15)).all()

    def test_far_center_underflow_guarded(self, macro_params, grid):
        w = compute_weights(grid, macro_params, 60.0, 0.0)
        assert (w.node > 0).all()
        assert np.isfinite(w.half).all()


class TestSemiImplicit:
    def test_zero_is_fixed_point(self, macro_params, grid):
        state = MacroState(np.zeros(grid.n_interior), 0.0)
        out = macro_step_semi_implicit(state, grid, macro_params, 0.0, 5e-5)
        assert (out.p == 0).all()
        assert out.rate == 0.0

    def test_one_step_mass_conservation_random_states(self, macro_params, grid, rng):
        for _ in range(50):
            state = random_state(grid, macro_params, rng, rate=float(rng.random() * 5))
            out = macro_step_semi_implicit(state, grid, macro_params,
                                           float(rng.normal()), 5e-5)
            assert abs(total_mass(out.p, grid) - total_mass(state.p, grid)) <= 1e-10

    def test_positivity_on_rough_states(self, macro_params, grid, rng):
        for _ in range(20):
            p = np.zeros(grid.n_interior)
            hot = rng.integers(0, grid.n_interior, 5)
            p[hot] = rng.random(5) * 10
            p /= p.sum() * grid.dv
            state = MacroState(p, boundary_rate(p, grid, macro_params))
            out = macro_step_semi_implicit(state, grid, macro_params, 0.0, 1e-3)
            assert out.p.min() >= 0.0

    def test_rate_identity_bit_exact(self, macro_params, grid, rng):
        state = random_state(grid, macro_params, rng)
        for _ in range(5):
            state = macro_step_semi_implicit(state, grid, macro_params, 0.3, 1e-4)
            assert state.rate == boundary_rate(state.p, grid, macro_params)

    def test_short_run_mass_and_positivity(self, macro_params, grid):
        state = initial_macro_state(grid, GaussianInit(-1.0, 0.5), macro_params)
        for k in range(2000):
            state = macro_step_semi_implicit(state, grid, macro_params, 0.0, 5e-5)
            assert state.p.min() >= 0.0
        assert abs(total_mass(state.p, grid) - 1.0) <= 1e-10

    def test_reset_reinjection_builds_at_reset_cell(self, macro_params):
        # all mass near threshold: firing must reappear around v_reset
        grid = make_grid(-4.0, 2.0, 1.0, 0.1)
        p = np.zeros(grid.n_interior)
        p[-2] = 1.0
        p /= p.sum() * grid.dv
        state = MacroState(p, boundary_rate(p, grid, macro_params))
        for _ in range(200):
            state = macro_step_semi_implicit(state, grid, macro_params, 0.0, 1e-4)
        reset_cell = grid.reset_index - 1
        assert state.p[reset_cell] > 0.0
        assert abs(total_mass(state.p, grid) - 1.0) <= 1e-10


class TestExplicit:
    def test_zero_is_fixed_point(self, macro_params, grid):
        state = MacroState(np.zeros(grid.n_interior), 0.0)
        out = macro_step_explicit(state, grid, macro_params, 0.0, 5e-5)
        assert (out.p == 0).all()

    def test_boundary_rate_arithmetic(self, macro_params):
        grid = make_grid(-4.0, 2.0, 1.0, 0.05)
        p = np.zeros(grid.n_interior)
        p[-1] = 0.5
        assert boundary_rate(p, grid, macro_params) == pytest.approx(10.0)

    def test_single_step_agreement_is_second_order_in_dt(self, macro_params, grid):
        # explicit and semi-implicit one-step results differ at O(dt^2):
        # halving dt shrinks the difference by about 4
        state = initial_macro_state(grid, GaussianInit(-0.5, 0.8), macro_params)

        def gap(dt):
            a = macro_step_explicit(state, grid, macro_params, 0.5, dt)
            b = macro_step_semi_implicit(state, grid, macro_params, 0.5, dt)
            return np.linalg.norm(a.p - b.p)

        ratio = gap(2e-4) / gap(1e-4)
        assert 3.0 <= ratio <= 5.0

    def test_instability_raises_with_advice(self, macro_params, grid):
        state = initial_macro_state(grid, GaussianInit(-1.0, 0.5), macro_params)
        with pytest.raises(StabilityError, match="semi_implicit"):
            for _ in range(50):
                state = macro_step_explicit(state, grid, macro_params, 0.0, 5e-3)

    def test_matches_semi_implicit_over_short_run(self, macro_params, grid):
        a = initial_macro_state(grid, GaussianInit(-1.0, 0.5), macro_params)
        b = MacroState(a.p.copy(), a.rate)
        for _ in range(400):
            a = macro_step_explicit(a, grid, macro_params, 0.0, 5e-5)
            b = macro_step_semi_implicit(b, grid, macro_params, 0.0, 5e-5)
        assert np.abs(a.p - b.p).sum() * grid.dv < 1e-4


class TestDensityMoments:
    def test_total_mass_is_one(self, macro_params, grid, rng):
        state = random_state(grid, macro_params, rng)
        assert density_moments(state, grid, (1.0,)) == pytest.approx(1.0, abs=1e-12)

    def test_single_cell_mean_is_midpoint(self, macro_params):
        grid = make_grid(-4.0, 2.0, 1.0, 0.5)
        p = np.zeros(grid.n_interior)
        i = 3
        p[i] = 1.0 / grid.dv
        center = grid.interior_centers[i]
        assert density_moments(p, grid, (0.0, 1.0)) == pytest.approx(center)

    def test_gaussian_histogram_mean_matches_truncated_gaussian(self, grid, source):
        mean, var = -1.0, 0.5
        draws = source.generator().normal(mean, math.sqrt(var), 1_000_000)
        density, _ = samples_to_density(draws, grid)
        got = density_moments(density.weights, grid, (0.0, 1.0))
        lo, hi = grid.interior_edges[0], grid.interior_edges[-1]
        sd = math.sqrt(var)
        oracle = scipy.stats.truncnorm.mean((lo - mean) / sd, (hi - mean) / sd,
                                            loc=mean, scale=sd)
        assert got == pytest.approx(oracle, abs=5e-3)

    def test_callable_route_matches_polynomial_route(self, macro_params, grid, rng):
        state = random_state(grid, macro_params, rng)
        coeffs = (0.3, -1.2, 0.5, 2.0)
        exact = density_moments(state, grid, coeffs)
        via_quad = density_moments(
            state, grid,
            lambda v: coeffs[0] + coeffs[1] * v + coeffs[2] * v**2 + coeffs[3] * v**3)
        assert via_quad == pytest.approx(exact, rel=1e-12)


class TestLinearRelaxation:
    def test_l1_contraction_in_the_tail(self):
        params = NetworkParams(connectivity=0.0, n_neurons=10_000, diffusion=1.0)
        grid = make_grid(-4.0, 2.0, 1.0, 0.1)
        state = initial_macro_state(grid, GaussianInit(-1.0, 0.5), params)
        dt = 5e-4
        snapshots = {}
        for k in range(1, 6001):
            state = macro_step_semi_implicit(state, grid, params, 0.0, dt)
            if k * dt in (1.5, 2.0, 2.5, 3.0):
                snapshots[k * dt] = state.p.copy()
        d1 = np.abs(snapshots[2.0] - snapshots[1.5]).sum() * grid.dv
        d2 = np.abs(snapshots[2.5] - snapshots[2.0]).sum() * grid.dv
        d3 = np.abs(snapshots[3.0] - snapshots[2.5]).sum() * grid.dv
        assert d3 <= d2 <= d1

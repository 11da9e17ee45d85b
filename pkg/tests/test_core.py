import math

import numpy as np
import pytest

from nlifsim import (Constant, GaussianInit, GaussianPulse, GridAlignmentError,
                     NetworkParams, PulseTrain, RandomSource,
                     aligned_mesh_size, eval_current, make_grid,
                     sample_gaussian_init)


class TestInputCurrent:
    def test_pulse_peak_attains_amplitude(self):
        pulse = GaussianPulse(16.0, 100.0, 0.5)
        assert eval_current(pulse, 0.5) == 16.0

    def test_pulse_far_tail_vanishes(self):
        pulse = GaussianPulse(16.0, 100.0, 0.5)
        assert eval_current(pulse, 0.5 + 10.0) < 1e-300
        assert eval_current(pulse, 0.5 - 10.0) < 1e-300

    def test_pulse_train_direct_summation(self):
        # six pulses at centers k/2 + 1/4; at t = 1/4 the k=0 pulse peaks and
        # the others contribute exp(-500 (k/2)^2) each
        train = PulseTrain(tuple(
            GaussianPulse(10.0, 500.0, 0.5 * k + 0.25) for k in range(6)))
        expected = 10.0 + sum(10.0 * math.exp(-500.0 * (0.5 * k) ** 2)
                              for k in range(1, 6))
        got = eval_current(train, 0.25)
        assert got == pytest.approx(expected, rel=1e-14)
        assert abs(got - 10.0) < 1e-53

    def test_pulse_train_additivity_pointwise(self):
        pulses = (GaussianPulse(3.0, 40.0, 0.2), GaussianPulse(1.5, 500.0, 0.9))
        train = PulseTrain(pulses)
        for t in np.linspace(-1.0, 2.0, 47):
            assert eval_current(train, float(t)) == sum(
                eval_current(p, float(t)) for p in pulses)

    def test_purity_bit_identical(self):
        pulse = GaussianPulse(2.0, 123.0, 0.37)
        assert eval_current(pulse, 0.401) == eval_current(pulse, 0.401)

    def test_constant(self):
        assert eval_current(Constant(3.5), 12.0) == 3.5

    def test_array_evaluation_matches_scalar(self):
        pulse = GaussianPulse(5.0, 10.0, 1.0)
        t = np.array([0.0, 1.0, 2.0])
        np.testing.assert_array_equal(
            eval_current(pulse, t), [eval_current(pulse, ti) for ti in t])

    def test_pulse_validation(self):
        with pytest.raises(ValueError):
            GaussianPulse(-1.0, 100.0, 0.5)
        with pytest.raises(ValueError):
            GaussianPulse(1.0, 0.0, 0.5)


class TestMakeGrid:
    def test_stock_grid(self):
        g = make_grid(-4.0, 2.0, 1.0, 1.0 / 20.0)
        assert g.n_cells == 120
        assert g.reset_index == 100

    def test_mesh_rule_for_paper_size(self):
        # dv = L^(-1/4) at L = 20^4 aligns at 1/20
        dv = aligned_mesh_size(20**4)
        assert dv == pytest.approx(0.05, rel=1e-12)
        g = make_grid(-4.0, 2.0, 1.0, dv)
        assert g.n_cells == 120

    def test_misaligned_reset_raises(self):
        with pytest.raises(GridAlignmentError, match="remainder"):
            make_grid(-4.0, 2.0, 1.0, 0.7)

    def test_endpoint_identities(self):
        g = make_grid(-4.0, 2.0, 1.0, 0.05)
        assert g.v_min + g.n_cells * g.dv == pytest.approx(2.0, rel=1e-12)
        assert g.v_min + g.reset_index * g.dv == pytest.approx(1.0, rel=1e-12)
        centers = g.centers
        assert centers[0] == -4.0
        assert centers[-1] == pytest.approx(2.0, abs=1e-14)
        assert centers[g.reset_index] == pytest.approx(1.0, abs=1e-14)

    def test_interior_shapes(self, grid):
        assert grid.interior_centers.size == grid.n_interior == grid.n_cells - 1
        assert grid.interior_edges.size == grid.n_cells

    def test_aligned_mesh_for_awkward_size(self):
        dv = aligned_mesh_size(2000)  # 2000^(1/4) ~ 6.7
        make_grid(-4.0, 2.0, 1.0, dv)  # must not raise


class TestGaussianSampling:
    def test_mean_within_clt_band(self, source):
        init = GaussianInit(-1.0, 0.5)
        draws = sample_gaussian_init(init, 10_000, source.generator())
        assert abs(draws.mean() + 1.0) <= 4.0 * math.sqrt(0.5 / 10_000)

    def test_variance_within_band(self, source):
        init = GaussianInit(0.0, 0.5)
        draws = sample_gaussian_init(init, 100_000, source.substream(1).generator())
        assert abs(draws.var() - 0.5) <= 0.05 * 0.5

    def test_determinism(self, source):
        a = sample_gaussian_init(GaussianInit(), 1, source.generator())
        b = sample_gaussian_init(GaussianInit(), 1, source.generator())
        np.testing.assert_array_equal(a, b)

    def test_invalid_variance(self):
        with pytest.raises(ValueError):
            GaussianInit(0.0, 0.0)


class TestRandomSource:
    def test_reproducible(self):
        a = RandomSource(42, 3).generator().standard_normal(16)
        b = RandomSource(42, 3).generator().standard_normal(16)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = RandomSource(42, 0).generator().standard_normal(16)
        b = RandomSource(42, 1).generator().standard_normal(16)
        assert not np.array_equal(a, b)

    def test_substream(self):
        s = RandomSource(7)
        assert s.substream(5) == RandomSource(7, 5)


class TestNetworkParams:
    def test_mean_field_kick_default(self):
        p = NetworkParams(connectivity=1.0, n_neurons=10_000)
        assert p.kick == 1.0 / 10_000

    def test_explicit_kick_kept(self):
        p = NetworkParams(connectivity=1.0, n_neurons=10, kick=0.3)
        assert p.kick == 0.3

    def test_noise_derived_from_diffusion(self):
        p = NetworkParams(n_neurons=1, diffusion=1.0)
        assert p.noise_std == pytest.approx(math.sqrt(2.0))

    def test_diffusion_derived_from_noise(self):
        p = NetworkParams(n_neurons=1, noise_std=math.sqrt(0.5))
        assert p.diffusion == pytest.approx(0.25)

    def test_ordering_invariant(self):
        with pytest.raises(ValueError):
            NetworkParams(v_fire=1.0, v_reset=2.0, n_neurons=1)

    def test_positive_size(self):
        with pytest.raises(ValueError):
            NetworkParams(n_neurons=0)

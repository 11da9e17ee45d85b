"""Multi-scale simulation of noisy leaky integrate-and-fire neuron networks.

A particle (Euler-Maruyama + firing-cascade) solver, a structure-preserving
finite-volume solver for the mean-field voltage density, bidirectional
transforms between the two representations, and a hybrid driver that runs the
cheap density solver while firing is low and hands synchronous bursts to the
particle solver.
"""

from .core import (Constant, GaussianInit, GaussianPulse, GridAlignmentError,
                   NetworkParams, PulseTrain, RandomSource, VoltageGrid,
                   aligned_mesh_size, eval_current, make_grid,
                   sample_gaussian_init)
from .micro import (MfeOverflowError, MfeReport, MicroState, UpdateRule,
                    apply_mfe, cascade_fast, cascade_naive, em_substep,
                    micro_step, windowed_rate)
from .macro import (MacroState, PositivityError, SgWeights, StabilityError,
                    boundary_rate, compute_weights, density_moments,
                    initial_macro_state, macro_step_explicit,
                    macro_step_semi_implicit, total_mass)
from .switching import (EmptyDensityError, PiecewiseUniformDensity,
                        density_to_samples, rate_from_counter,
                        samples_to_density)
from .multiscale import (HybridConfig, HybridTrajectory, SolverMode,
                         SwitchEvent, SwitchThrashError, run_hybrid, run_pure,
                         run_switch_once)
from .analysis import (CENTERED_SECOND, CENTERED_THIRD, FIRST_MOMENT,
                       AmplitudeSearchResult, BenchmarkRow, BiasReport,
                       DiffusionReport, ErrorBudget, Observable,
                       RefractoryDivergence, ScalingReport,
                       amplitude_threshold_search, baseline_config, benchmark,
                       bias_study, custom_observable, density_l1_distance,
                       mc_scaling_test, observable_on_config,
                       observable_on_density, peak_rate, pulse_config,
                       refractory_divergence, validate_diffusion_approximation)

__version__ = "0.1.0"

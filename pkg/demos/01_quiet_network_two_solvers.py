"""Quiet network, two solvers.

A mildly excitatory network relaxes from a Gaussian voltage profile with no
external drive.  We integrate the same physics twice: once per neuron with
the stochastic particle solver, once as a voltage density with the
finite-volume solver, and overlay the terminal densities and firing-rate
histories.  At this firing level the mean-field description is excellent and
the two solutions are close to indistinguishable.

Run:  python3 demos/01_quiet_network_two_solvers.py
"""

import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from nlifsim import RandomSource, SolverMode, run_pure
from nlifsim.analysis import baseline_config, density_l1_distance

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# Desk scale: 10^4 neurons, mesh ~ L^(-1/4).  Bump n_neurons for smoother
# histograms (the full-fidelity runs use 20^4).
n_neurons = 10_000

fig, axes = plt.subplots(2, 2, figsize=(11, 6), sharex="col")
for row, b in enumerate((1.0, -1.0)):
    print(f"connectivity b = {b:+.0f}: running both solvers to t = 3 ...")
    config = baseline_config(b, n_neurons)
    macro = run_pure(SolverMode.MACRO, config, RandomSource(1, 0))
    micro = run_pure(SolverMode.MICRO, config, RandomSource(1, 1))

    micro_density = micro.terminal_density()
    l1 = density_l1_distance(micro_density.weights, macro.terminal.p,
                             config.grid.dv)
    print(f"  terminal density L1 distance: {l1:.4f}")

    ax = axes[row, 0]
    centers = config.grid.interior_centers
    ax.step(centers, micro_density.weights, where="mid", lw=1.0,
            label="particle (histogram)")
    ax.plot(centers, macro.terminal.p, lw=1.2, label="density solver")
    ax.set_ylabel(f"p(v, t=3),  b = {b:+.0f}")
    ax.legend(frameon=False, fontsize=8)

    ax = axes[row, 1]
    ax.plot(micro.times, micro.windowed_rates(), lw=0.8, label="particle")
    ax.plot(macro.times, macro.windowed_rates(), lw=1.2, label="density solver")
    ax.set_ylabel("firing rate")
    ax.legend(frameon=False, fontsize=8)

axes[1, 0].set_xlabel("v")
axes[1, 1].set_xlabel("t")
fig.tight_layout()
fig.savefig(OUT / "quiet_network_two_solvers.png", dpi=150)
print(f"wrote {OUT / 'quiet_network_two_solvers.png'}")

"""Periodic pulse train: repeated synchronization episodes.

Six sharp pulses arrive every half time unit.  Depending on the amplitude
the episodes either stay below the switch-up threshold (the hybrid driver
never leaves the density solver) or repeatedly hand the burst to the
particle solver and come back.

Run:  python3 demos/03_periodic_pulses.py
"""

import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from nlifsim import (GaussianInit, GaussianPulse, HybridConfig, NetworkParams,
                     PulseTrain, RandomSource, SolverMode, UpdateRule,
                     aligned_mesh_size, make_grid, run_hybrid, run_pure)

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)


def periodic_config(amplitude, n_neurons=10_000):
    params = NetworkParams(connectivity=0.8, n_neurons=n_neurons)
    grid = make_grid(params.v_min, params.v_fire, params.v_reset,
                     aligned_mesh_size(n_neurons))
    train = PulseTrain(tuple(
        GaussianPulse(amplitude, 500.0, 0.25 + 0.5 * k) for k in range(6)))
    return HybridConfig(params=params, current=train, grid=grid,
                        init=GaussianInit(-1.0, 0.5), t_max=3.0, dt=1e-4,
                        rule=UpdateRule.REFRACTORY, n_on=10.0, n_off=10.0,
                        k_back=10, k_rec=10)


fig, axes = plt.subplots(2, 1, figsize=(10, 6), sharex=True)
for ax, amplitude in zip(axes, (10.0, 20.0)):
    config = periodic_config(amplitude)
    print(f"amplitude {amplitude}: hybrid ...")
    hybrid = run_hybrid(config, RandomSource(11, 0))
    print(f"amplitude {amplitude}: pure particle ...")
    micro = run_pure(SolverMode.MICRO, config, RandomSource(11, 1))
    n_windows = len(hybrid.micro_windows())
    print(f"  {len(hybrid.events)} switch events, {n_windows} particle windows, "
          f"wall {hybrid.wall_time:.1f}s vs {micro.wall_time:.1f}s")

    ax.plot(micro.times, micro.windowed_rates(), lw=0.7, label="particle")
    ax.plot(hybrid.times, hybrid.windowed_rates(), lw=0.7, label="hybrid")
    for a, b in hybrid.micro_windows():
        ax.axvspan(a * config.dt, b * config.dt, color="0.85", zorder=0)
    ax.set_yscale("symlog", linthresh=1.0)
    ax.set_ylabel(f"rate, amplitude {amplitude:.0f}")
    ax.legend(frameon=False, fontsize=8)

axes[1].set_xlabel("t")
fig.tight_layout()
fig.savefig(OUT / "periodic_pulses.png", dpi=150)
print(f"wrote {OUT / 'periodic_pulses.png'}")

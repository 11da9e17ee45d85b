"""Single input pulse: the hybrid driver against the pure particle solver.

A strong bell-shaped current pulse arrives at t = 0.5 and synchronizes the
network into a burst of multiple-firing events.  The hybrid driver evolves
the cheap density solver while firing is low, rewinds and hands over to the
particle solver when the boundary firing rate crosses the switch-up
threshold, and returns to the density solver once the burst has been quiet
for a full buffer window.  The shaded band marks where the particle solver
was in charge.

Run:  python3 demos/02_single_pulse_multiscale.py
"""

import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from nlifsim import RandomSource, SolverMode, run_hybrid, run_pure
from nlifsim.analysis import density_l1_distance, peak_rate, pulse_config

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# b = 1 with amplitude 16 sits just above the synchronization threshold
# (see demo 04); dv = 1/20 is the stock production mesh.
config = pulse_config(1.0, 16.0, 10_000, dv=0.05)

print("hybrid run ...")
hybrid = run_hybrid(config, RandomSource(7, 0))
print("pure particle run ...")
micro = run_pure(SolverMode.MICRO, config, RandomSource(7, 1))

for event in hybrid.events:
    print(f"  switch {event.direction:>15s} triggered at t={event.time:.4f}, "
          f"resumed at step {event.restart_step}")
peak_h, t_h = peak_rate(hybrid)
peak_m, t_m = peak_rate(micro)
print(f"peak windowed rate: hybrid {peak_h:.1f} @ t={t_h:.4f}, "
      f"particle {peak_m:.1f} @ t={t_m:.4f}")
l1 = density_l1_distance(hybrid.terminal_density().weights,
                         micro.terminal_density().weights, config.grid.dv)
print(f"terminal density L1 distance: {l1:.4f}")
print(f"wall time: hybrid {hybrid.wall_time:.2f}s vs particle {micro.wall_time:.2f}s")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 3.6))
ax1.plot(micro.times, micro.windowed_rates(), lw=0.9, label="particle")
ax1.plot(hybrid.times, hybrid.windowed_rates(), lw=0.9, label="hybrid")
for a, b in hybrid.micro_windows():
    ax1.axvspan(a * config.dt, b * config.dt, color="0.85", zorder=0)
ax1.set_xlabel("t")
ax1.set_ylabel("firing rate (windowed)")
ax1.set_yscale("symlog", linthresh=1.0)
ax1.legend(frameon=False, fontsize=8)
ax1.set_title("rates; shaded = particle solver in charge")

centers = config.grid.interior_centers
ax2.step(centers, micro.terminal_density().weights, where="mid", lw=0.9,
         label="particle")
ax2.plot(centers, hybrid.terminal_density().weights, lw=1.1, label="hybrid")
ax2.set_xlabel("v")
ax2.set_ylabel("p(v, t=1)")
ax2.legend(frameon=False, fontsize=8)
fig.tight_layout()
fig.savefig(OUT / "single_pulse_multiscale.png", dpi=150)
print(f"wrote {OUT / 'single_pulse_multiscale.png'}")

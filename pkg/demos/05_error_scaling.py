"""Error anatomy of the multi-scale pipeline.

Three quick numerical studies:

1. Resampling error: drawing L voltages from a fixed density and comparing
   observables decays like L^(-1/2) (a log-log fit over two decades).
2. Mesh refinement: halving the density solver's cell width shrinks the
   terminal-density error by about 4x (second-order accuracy), which is why
   a mesh of order L^(-1/4) balances the two error sources.
3. Aggregate synaptic current: the Poisson spike-train aggregate matches the
   closed-form mean and variance used by the diffusion approximation.

Run:  python3 demos/05_error_scaling.py
"""

import math
import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from nlifsim import (GaussianInit, NetworkParams, PiecewiseUniformDensity,
                     RandomSource, initial_macro_state,
                     macro_step_semi_implicit, make_grid,
                     validate_diffusion_approximation)
from nlifsim.analysis import mc_scaling_test

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)
source = RandomSource(17)

# 1 -- resampling error vs sample count
grid = make_grid(-4.0, 2.0, 1.0, 0.1)
init = GaussianInit(-1.0, 0.5)
density = PiecewiseUniformDensity(grid, init.pdf(grid.interior_centers))
scaling = mc_scaling_test(density, [1000, 10_000, 100_000], 200, source)
print(f"resampling slope: {scaling.slope:.3f} (CLT predicts -0.5)")

# 2 -- terminal-density error vs mesh width (quiet linear network)
params = NetworkParams(connectivity=0.0, n_neurons=10_000)
terminal = {}
for dv in (0.1, 0.05, 0.025):
    g = make_grid(-4.0, 2.0, 1.0, dv)
    state = initial_macro_state(g, init, params)
    for _ in range(round(0.5 / 5e-5)):
        state = macro_step_semi_implicit(state, g, params, 0.0, 5e-5)
    terminal[dv] = (g, state.p)
g_ref, p_ref = terminal[0.025]
ref_full = np.concatenate(([0.0], p_ref, [0.0]))
errors = {}
for dv in (0.1, 0.05):
    g, p = terminal[dv]
    s = round(dv / 0.025)
    restricted = np.empty(g.n_interior)
    for i in range(1, g.n_cells):
        idx = np.arange(i * s - s // 2, i * s + s // 2 + 1)
        w = np.ones(idx.size)
        w[0] = w[-1] = 0.5
        restricted[i - 1] = np.dot(w, ref_full[idx]) / s
    errors[dv] = math.sqrt(np.sum((p - restricted) ** 2) * dv)
print(f"mesh halving error ratio: {errors[0.1] / errors[0.05]:.2f} "
      f"(second order predicts ~4)")

# 3 -- diffusion approximation of the aggregate synaptic current
report = validate_diffusion_approximation(5.0, 1e-4, 10_000, 1.0, 200,
                                          source.substream(1))
print(f"aggregate current: mean {report.mean_empirical:.4f} vs "
      f"{report.mean_expected:.4f}, variance {report.var_empirical:.2e} vs "
      f"{report.var_expected:.2e} (both within 4-sigma: "
      f"{report.mean_ok and report.var_ok})")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.4))
ax1.loglog(scaling.sizes, scaling.rms_errors, "o-", label="measured RMS")
ax1.loglog(scaling.sizes,
           scaling.rms_errors[0] * (scaling.sizes / scaling.sizes[0]) ** -0.5,
           "--", label="slope -1/2")
ax1.set_xlabel("samples L")
ax1.set_ylabel("RMS observable error")
ax1.legend(frameon=False, fontsize=8)

dvs = np.array([0.1, 0.05])
errs = np.array([errors[0.1], errors[0.05]])
ax2.loglog(dvs, errs, "o-", label="measured L2 error")
ax2.loglog(dvs, errs[0] * (dvs / dvs[0]) ** 2, "--", label="slope 2")
ax2.set_xlabel("cell width dv")
ax2.set_ylabel("terminal density error")
ax2.legend(frameon=False, fontsize=8)
fig.tight_layout()
fig.savefig(OUT / "error_scaling.png", dpi=150)
print(f"wrote {OUT / 'error_scaling.png'}")

#!/usr/bin/env python3
"""Integrator cross-checks: fourth-order convergence and an exact oracle.

Sweeps the fixed-step integrator against the matrix-exponential kernel on
a deliberately stiff parameter set (the reference converter's time
constants are far too gentle to show integration error), and reproduces
the textbook RL exponential through the full switched pipeline.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import fourport as fp

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# microhenry / microfarad tank: ~1e6 rad/s natural frequency
params = fp.ConverterParams(
    port1=fp.CapacitorOnly(1e-9, 10.0), port2=fp.CapacitorOnly(1e-9, 5.0),
    port3=fp.CapacitorOnly(1e-9, -3.0), port4=fp.CapacitorOnly(1e-9, 8.0),
    l1=1e-6, l2=1e-6, l3=1e-6, c1=1e-6, c2=1e-6, c3=1e-6, c4=1e-6,
)
duties = fp.DutyCommand(0.2, 0.3, 0.5, 0.25, 0.375, 0.375)
x0 = fp.StateVector(1.0, -2.0, 0.5, 10.0, 5.0, -3.0, 8.0)


def end_state(spp, integrator):
    settings = fp.SimulationSettings(duration=params.period,
                                     steps_per_period=spp,
                                     integrator=integrator,
                                     record_decimation=10**9)
    return fp.simulate(params, duties, settings, initial=x0).states[-1]


print("=== RK4 error vs the exact piecewise solution over one period ===")
spps = [100, 200, 400, 800, 1600]
errs = []
for spp in spps:
    ref = end_state(spp, fp.Integrator.EXACT_PIECEWISE)
    err = np.max(np.abs(end_state(spp, fp.Integrator.FIXED_STEP_RK4) - ref))
    errs.append(err)
    print(f"  steps/period {spp:5d}: max error {err:.3e}")
orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
print(f"  observed orders between refinements: {np.round(orders, 2)}")

fig, ax = plt.subplots(figsize=(6, 4))
ax.loglog(spps, errs, "o-", label="RK4 vs exact")
ax.loglog(spps, errs[0] * (spps[0] / np.array(spps)) ** 4.0, "--",
          label="slope -4 reference")
ax.set_xlabel("steps per period")
ax.set_ylabel("max end-of-period error")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "integrator_convergence.png", dpi=120)
print(f"wrote {OUT / 'integrator_convergence.png'}")

print("\n=== switched pipeline vs the closed-form RL exponential ===")
rl = fp.ConverterParams(
    port1=fp.VoltageSource(100.0), port2=fp.VoltageSource(0.0),
    port3=fp.VoltageSource(0.0), port4=fp.VoltageSource(100.0),
    switch_on_resistance=5.0,
)
rl_duties = fp.DutyCommand(0.0, 0.0, 1.0, 0.0, 0.0, 1.0)
settings = fp.SimulationSettings(duration=40 * rl.period,
                                 steps_per_period=2000, record_decimation=20)
w = fp.simulate(rl, rl_duties, settings)
expected = 10.0 * (1 - np.exp(-10.0 * w.times / rl.l1))
err = np.max(np.abs(w.states[:, 0] - expected)) / 10.0
print(f"  relative error against (V/R)(1 - exp(-Rt/L)): {err:.2e}")

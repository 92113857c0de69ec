#!/usr/bin/env python3
"""Open-loop buck and boost transients between the two rail ports.

Starts the converter cold (dc link discharged) and shows the inter-port
stage reaching the duty-predicted voltage, then verifies volt-second
balance on the settled tail. Saves plots next to this script.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import fourport as fp

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

CASES = {
    # boost: 75 V in, d4 = 0.25 -> 100 V out
    "boost": dict(
        params=fp.ConverterParams(
            port1=fp.VoltageSource(75.0),
            port2=fp.CapacitorOnly(470e-6, 0.0),
            port3=fp.CapacitorOnly(470e-6, 0.0),
            port4=fp.ResistiveLoad(100.0),
        ),
        duties=fp.DutyCommand(0.0, 1.0, 0.0, 0.25, 0.75, 0.0),
        predicted=75.0 / (1 - 0.25),
    ),
    # buck: 150 V in, d1 = 1/3 -> 100 V out
    "buck": dict(
        params=fp.ConverterParams(
            port1=fp.VoltageSource(150.0),
            port2=fp.CapacitorOnly(470e-6, 0.0),
            port3=fp.CapacitorOnly(470e-6, 0.0),
            port4=fp.ResistiveLoad(100.0),
        ),
        duties=fp.DutyCommand(1 / 3, 2 / 3, 0.0, 0.0, 1.0, 0.0),
        predicted=150.0 * (1 - 1 / 3),
    ),
}

fig, axes = plt.subplots(2, 2, figsize=(11, 6), sharex="col")
for col, (name, case) in enumerate(CASES.items()):
    params, duties = case["params"], case["duties"]
    # cold start: watch the (lightly damped) transient...
    settings = fp.SimulationSettings(duration=0.02, steps_per_period=500,
                                     record_decimation=25)
    cold = fp.simulate(params, duties, settings)
    # ...and a warm start from the exact periodic orbit for the ripple view
    x0 = fp.periodic_steady_state(params, duties)
    zoom = fp.simulate(
        params, duties,
        fp.SimulationSettings(duration=4 / 50e3, steps_per_period=500,
                              record_decimation=1),
        initial=x0,
    )
    rep = fp.measure_steady_state(zoom, params.f_sw, 2)
    res = fp.flux_balance_residuals(zoom, params)
    print(f"{name}: predicted v4 = {case['predicted']:.1f} V, settled mean "
          f"= {rep.mean_state.v_c4:.2f} V, "
          f"flux residuals [V*s] = {np.array2string(res, precision=2)}")

    axes[0, col].plot(cold.times * 1e3, cold.states[:, 6])
    axes[0, col].axhline(case["predicted"], ls="--", c="gray", lw=0.8)
    axes[0, col].set_title(f"{name}: dc-link voltage from cold start")
    axes[0, col].set_ylabel("v_c4 [V]")
    axes[1, col].plot(zoom.times * 1e6, zoom.states[:, 1])
    axes[1, col].set_title(f"{name}: transfer inductor ripple (steady state)")
    axes[1, col].set_ylabel("i_l2 [A]")
    axes[1, col].set_xlabel("time [us]" if col == 0 else "time [us]")
axes[0, 0].set_xlabel("time [ms]")
axes[0, 1].set_xlabel("time [ms]")
fig.tight_layout()
fig.savefig(OUT / "open_loop_buck_boost.png", dpi=120)
print(f"wrote {OUT / 'open_loop_buck_boost.png'}")

#!/usr/bin/env python3
"""The four HEV operating modes, closed loop, with power ledgers.

Runs the built-in presets and prints each mode's steady-state power
ledger; then demonstrates a demand-step event inside a single run.
"""

from dataclasses import replace
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

import fourport as fp

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

PORT_NAMES = ("ultracap", "battery", "fuel cell", "dc link")

print("=== operating-mode ledgers (positive = sources into converter) ===")
for name in ("fig6a", "fig6b", "fig7a", "fig7b", "fig8a", "fig8b",
             "fig9a", "fig9b"):
    scenario = fp.preset_scenario(name)
    scenario = replace(scenario,
                       settings=replace(scenario.settings, duration=0.012))
    waveform = fp.run_scenario(scenario)
    report = fp.build_report(waveform, scenario, allow_unsettled=True)
    ledger = report["power_ledger"]
    cells = "  ".join(
        f"{n}: {p:8.1f} W" for n, p in zip(PORT_NAMES, ledger["port_power_w"])
    )
    print(f"  {name}  {cells}   residual {ledger['balance_residual_w']:+6.2f} W")

print("\n=== demand step inside one run (high power, 2 kW -> 1.4 kW) ===")
scenario = fp.preset_scenario("fig7a")
scenario = replace(
    scenario,
    name="fig7a-step",
    settings=replace(scenario.settings, duration=0.02, record_decimation=25),
    events=(fp.Event(t=0.01, set_port=(4, fp.ResistiveLoad(100.0 / 14.0))),),
)
waveform = fp.run_scenario(scenario)

fig, axes = plt.subplots(3, 1, figsize=(9, 7), sharex=True)
t_ms = waveform.times * 1e3
axes[0].plot(t_ms, waveform.states[:, 6])
axes[0].set_ylabel("dc link [V]")
axes[1].plot(t_ms, -waveform.states[:, 0], label="battery")
axes[1].plot(t_ms, -waveform.states[:, 2], label="fuel cell")
axes[1].legend(loc="best")
axes[1].set_ylabel("current [A]")
axes[2].plot(t_ms, waveform.states[:, 1])
axes[2].set_ylabel("i_l2 [A]")
axes[2].set_xlabel("time [ms]")
for ax in axes:
    ax.axvline(10.0, color="gray", ls="--", lw=0.8)
fig.suptitle("high-power mode with a dc-link load step at 10 ms")
fig.tight_layout()
fig.savefig(OUT / "hev_demand_step.png", dpi=120)
print(f"wrote {OUT / 'hev_demand_step.png'}")

rep = fp.measure_steady_state(waveform, scenario.params.f_sw, 5)
print(f"after the step: battery {-rep.mean_state.i_l1:.1f} A, "
      f"fuel cell {-rep.mean_state.i_l3:.1f} A, "
      f"dc link {rep.mean_state.v_c4:.1f} V")

#!/usr/bin/env python3
"""Three-switch leg basics: mode voltages, steady-state gains, duty solving.

Walks through the building blocks: what each leg mode does to the
inductor voltages, how the port voltages follow the duty ratios, and how
the duty solver inverts a set of voltage targets.
"""

import numpy as np

import fourport as fp

print("=== leg inductor voltages per mode (v_a=50, v_b=25, rail=100) ===")
for mode in fp.LegMode:
    v_la, v_lb = fp.leg_inductor_voltages(mode, 50.0, 25.0, 100.0)
    print(f"  mode {mode.value}:  v_La = {v_la:+7.1f} V   v_Lb = {v_lb:+7.1f} V")

print("\n=== steady-state port gains ===")
duties = fp.DutyCommand(d1=1 / 3, d2=0.5, d3=1 / 6, d4=0.0, d5=0.65, d6=0.35)
v2, v3 = fp.predict_port_voltages(duties, v1=150.0, v4=100.0)
print(f"  with d3 = 1/6 on a 150 V rail:  v2 = {v2:.1f} V")
print(f"  with d6 = 0.35 on a 100 V rail: v3 = {v3:.1f} V")
res = fp.check_transfer_balance(duties, 150.0, 100.0)
print(f"  transfer balance residual (1-d1)v1 - (1-d4)v4 = {res:.3f} V")

print("\n=== solving duties for voltage targets ===")
targets = fp.PortTargets(v1=150.0, v2=25.0, v3=35.0, v4=100.0)
for policy in (fp.Policy.BUCK_PREFERRED, fp.FixedD1(0.2)):
    try:
        d = fp.solve_duties(fp.PortTargets(100.0, 25.0, 35.0, 100.0)
                            if isinstance(policy, fp.FixedD1) else targets,
                            policy)
        print(f"  {policy}: d1={d.d1:.4f} d2={d.d2:.4f} d3={d.d3:.4f} "
              f"d4={d.d4:.4f} d5={d.d5:.4f} d6={d.d6:.4f}")
    except fp.Infeasible as e:
        print(f"  {policy}: infeasible ({e})")

print("\n=== infeasible targets are rejected ===")
try:
    fp.solve_duties(fp.PortTargets(v1=100.0, v2=150.0, v3=0.0, v4=100.0))
except fp.Infeasible as e:
    print(f"  v2 = 150 V from a 100 V rail: {e}")

print("\n=== the gain relation holds in simulation ===")
params = fp.ConverterParams(
    port1=fp.VoltageSource(150.0),
    port2=fp.ResistiveLoad(2.5),
    port3=fp.CapacitorOnly(470e-6, 0.0),
    port4=fp.VoltageSource(150.0),
)
rows = []
for d3 in np.linspace(0.1, 0.6, 6):
    duties = fp.DutyCommand(0.0, 1 - d3, d3, 0.0, 1.0, 0.0)
    x0 = fp.periodic_steady_state(params, duties)
    settings = fp.SimulationSettings(duration=20 / 50e3, steps_per_period=500)
    w = fp.simulate(params, duties, settings, initial=x0)
    rep = fp.measure_steady_state(w, params.f_sw, 5)
    rows.append((d3, 150.0 * d3, rep.mean_state.v_c2))
print(f"  {'d3':>6s} {'predicted':>10s} {'simulated':>10s}")
for d3, pred, meas in rows:
    print(f"  {d3:6.2f} {pred:10.3f} {meas:10.3f}")

"""Steady-state duty mathematics: gains, balance, solver, clamping."""

import numpy as np
import pytest

import fourport as fp


# --- DutyCommand invariants -----------------------------------------------


def test_duty_command_validates_range():
    with pytest.raises(ValueError):
        fp.DutyCommand(-0.1, 0.6, 0.5, 0.2, 0.5, 0.3)


def test_duty_command_validates_leg_sums():
    with pytest.raises(ValueError, match="leg-1"):
        fp.DutyCommand(0.2, 0.2, 0.5, 0.2, 0.5, 0.3)
    with pytest.raises(ValueError, match="leg-2"):
        fp.DutyCommand(0.2, 0.3, 0.5, 0.2, 0.5, 0.4)


# --- predict_port_voltages ---------------------------------------------------


def test_predict_battery_rail():
    d = fp.DutyCommand(0.0, 1 - 25 / 150, 25 / 150, 0.0, 0.65, 0.35)
    v2, v3 = fp.predict_port_voltages(d, 150.0, 100.0)
    assert v2 == pytest.approx(25.0, rel=1e-12)
    assert v3 == pytest.approx(35.0, rel=1e-12)


def test_predict_full_duty_ties_port_to_rail():
    d = fp.DutyCommand(0.0, 0.0, 1.0, 0.0, 1.0, 0.0)
    for v in (12.5, 80.0, 300.0):
        assert fp.predict_port_voltages(d, v, 100.0)[0] == v


def test_predict_homogeneous_in_rails():
    rng = np.random.default_rng(11)
    for _ in range(50):
        d3, d6 = rng.uniform(0, 1, 2)
        d1 = rng.uniform(0, 1 - d3)
        d4 = rng.uniform(0, 1 - d6)
        d = fp.DutyCommand(d1, 1 - d1 - d3, d3, d4, 1 - d4 - d6, d6)
        v1, v4, k = rng.uniform(1, 200, 3)
        v2a, v3a = fp.predict_port_voltages(d, v1, v4)
        v2b, v3b = fp.predict_port_voltages(d, k * v1, k * v4)
        assert v2b == pytest.approx(k * v2a, rel=1e-12)
        assert v3b == pytest.approx(k * v3a, rel=1e-12)


def test_predict_monotone_in_d3():
    vals = []
    for d3 in np.linspace(0.05, 0.95, 19):
        d = fp.DutyCommand(0.0, 1 - d3, d3, 0.0, 1.0, 0.0)
        vals.append(fp.predict_port_voltages(d, 120.0, 100.0)[0])
    assert np.all(np.diff(vals) > 0)


def test_generic_leg_consistency():
    # the generic-leg solution with leg-1 duties reproduces the port gain
    d1, d2, d3 = 0.2, 0.3, 0.5
    leg = fp.leg_steady_state(d1, d2, d3, v_c=150.0)
    d = fp.DutyCommand(d1, d2, d3, 0.0, 1.0, 0.0)
    assert leg.v_b == fp.predict_port_voltages(d, 150.0, 0.0)[0]
    assert leg.v_a == (d2 + d3) * 150.0


# --- check_transfer_balance ---------------------------------------------------


def test_balance_identity_case():
    d = fp.DutyCommand(0.0, 1.0, 0.0, 0.0, 1.0, 0.0)
    assert fp.check_transfer_balance(d, 100.0, 100.0) == 0.0


def test_balance_boost_case():
    d = fp.DutyCommand(0.0, 1.0, 0.0, 0.25, 0.75, 0.0)
    assert fp.check_transfer_balance(d, 75.0, 100.0) == 0.0


def test_balance_buck_case():
    d = fp.DutyCommand(1 / 3, 2 / 3, 0.0, 0.0, 1.0, 0.0)
    assert fp.check_transfer_balance(d, 150.0, 100.0) == pytest.approx(0.0, abs=1e-12)


# --- clamp_duty ----------------------------------------------------------------


def test_clamp_low():
    assert fp.clamp_duty(0.02) == 0.05


def test_clamp_interior():
    assert fp.clamp_duty(0.50) == 0.50


def test_clamp_high():
    assert fp.clamp_duty(0.99) == 0.95


def test_clamp_static_on_bypass():
    assert fp.clamp_duty(0.0, statically_on=True) == 0.0
    assert fp.clamp_duty(0.0, statically_on=False) == 0.05


def test_clamp_rejects_bad_window():
    with pytest.raises(ValueError):
        fp.clamp_duty(0.5, lo=0.6, hi=0.4)


# --- solve_duties -----------------------------------------------------------------


def test_solve_reference_targets():
    targets = fp.PortTargets(v1=150.0, v2=25.0, v3=35.0, v4=100.0)
    d = fp.solve_duties(targets, fp.Policy.BUCK_PREFERRED)
    assert d.d1 == pytest.approx(1 / 3, rel=1e-12)
    assert d.d3 == pytest.approx(1 / 6, rel=1e-12)
    assert d.d4 == 0.0
    assert d.d6 == pytest.approx(0.35, rel=1e-12)


def test_solve_fixed_d1_equal_rails():
    targets = fp.PortTargets(v1=100.0, v2=25.0, v3=35.0, v4=100.0)
    d = fp.solve_duties(targets, fp.FixedD1(0.2))
    assert d.d1 == pytest.approx(0.2)
    assert d.d4 == pytest.approx(0.2)


def test_solve_infeasible_target_above_rail():
    with pytest.raises(fp.Infeasible):
        fp.solve_duties(fp.PortTargets(100.0, 150.0, 0.0, 100.0))


def test_solve_infeasible_overcommitted_leg():
    # d3 = 0.9 and buck needs d1 = 0.5: leg 1 cannot fit both
    with pytest.raises(fp.Infeasible):
        fp.solve_duties(fp.PortTargets(200.0, 180.0, 0.0, 100.0),
                        fp.Policy.BUCK_PREFERRED)


def test_solve_infeasible_outside_window():
    # d3 = 0.02 is a real PWM duty below the realizable window
    with pytest.raises(fp.Infeasible):
        fp.solve_duties(fp.PortTargets(100.0, 2.0, 0.0, 100.0))


def test_solve_policy_tie_break():
    targets = fp.PortTargets(v1=100.0, v2=25.0, v3=35.0, v4=100.0)
    for policy in (fp.Policy.BOOST_PREFERRED, fp.Policy.BUCK_PREFERRED):
        d = fp.solve_duties(targets, policy)
        assert d.d1 == 0.0 and d.d4 == 0.0


def test_solve_round_trip_property():
    # feasible targets generated forward from duties; solve must reproduce
    rng = np.random.default_rng(42)
    for _ in range(300):
        v1 = rng.uniform(20, 300)
        boost = rng.random() < 0.5
        if boost:
            d4 = rng.uniform(0.06, 0.55)
            v4 = v1 / (1 - d4)
            policy = fp.Policy.BOOST_PREFERRED
        else:
            d1 = rng.uniform(0.06, 0.55)
            v4 = v1 * (1 - d1)
            policy = fp.Policy.BUCK_PREFERRED
        # keep each leg's slack duty realizable (>= 0.05) as well
        d3 = rng.uniform(0.06, 0.38)
        d6 = rng.uniform(0.06, 0.38)
        targets = fp.PortTargets(v1, d3 * v1, d6 * v4, v4)
        d = fp.solve_duties(targets, policy)
        v2, v3 = fp.predict_port_voltages(d, v1, v4)
        assert v2 == pytest.approx(targets.v2, rel=1e-12)
        assert v3 == pytest.approx(targets.v3, rel=1e-12)
        assert abs(fp.check_transfer_balance(d, v1, v4)) < 1e-9 * max(v1, v4)
        assert abs(d.d1 + d.d2 + d.d3 - 1) < 1e-9
        assert abs(d.d4 + d.d5 + d.d6 - 1) < 1e-9


# --- flux_balance_residuals ----------------------------------------------------


def _synthetic_waveform(params, i_funcs, duration, n=2000):
    t = np.linspace(0.0, duration, n)
    states = np.zeros((n, 7))
    for j, f in enumerate(i_funcs):
        states[:, j] = f(t)
    return fp.Waveform(
        times=t,
        states=states,
        config_codes=np.zeros(n, dtype=np.int8),
        port_power=np.zeros((n, 4)),
    )


def test_flux_residual_zero_for_periodic():
    params = fp.ConverterParams(
        port1=fp.CapacitorOnly(1e-6, 0.0), port2=fp.CapacitorOnly(1e-6, 0.0),
        port3=fp.CapacitorOnly(1e-6, 0.0), port4=fp.CapacitorOnly(1e-6, 0.0),
    )
    t_s = params.period
    w = _synthetic_waveform(
        params,
        [lambda t: np.sin(2 * np.pi * t / t_s)] * 3,
        duration=5 * t_s,
        n=5001,
    )
    res = fp.flux_balance_residuals(w, params)
    assert np.all(np.abs(res) < 1e-6 * params.l1)


def test_flux_residual_equals_l_delta_i_mid_transient():
    params = fp.ConverterParams(
        port1=fp.CapacitorOnly(1e-6, 0.0), port2=fp.CapacitorOnly(1e-6, 0.0),
        port3=fp.CapacitorOnly(1e-6, 0.0), port4=fp.CapacitorOnly(1e-6, 0.0),
    )
    t_s = params.period
    slope = 1000.0  # A/s ramp
    w = _synthetic_waveform(params, [lambda t: slope * t] * 3, duration=3 * t_s)
    res = fp.flux_balance_residuals(w, params)
    expected = np.array([params.l1, params.l2, params.l3]) * slope * t_s
    assert res == pytest.approx(expected, rel=1e-6)


def test_flux_residual_window_too_short():
    params = fp.ConverterParams(
        port1=fp.CapacitorOnly(1e-6, 0.0), port2=fp.CapacitorOnly(1e-6, 0.0),
        port3=fp.CapacitorOnly(1e-6, 0.0), port4=fp.CapacitorOnly(1e-6, 0.0),
    )
    w = _synthetic_waveform(params, [lambda t: t] * 3,
                            duration=0.5 * params.period)
    with pytest.raises(fp.WindowTooShort):
        fp.flux_balance_residuals(w, params)

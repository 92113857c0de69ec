"""Simulator engine: scheduling, segment solutions, integration, measurement."""

import numpy as np
import pytest

import fourport as fp
from fourport.simulate import apply_propagator, segment_propagator
from fourport.topology import IDX_I_L1, LinearDynamics, N_STATES


def idle_params(**kw):
    defaults = dict(
        port1=fp.CapacitorOnly(470e-6, 0.0),
        port2=fp.CapacitorOnly(470e-6, 0.0),
        port3=fp.CapacitorOnly(470e-6, 0.0),
        port4=fp.CapacitorOnly(470e-6, 0.0),
    )
    defaults.update(kw)
    return fp.ConverterParams(**defaults)


# --- build_schedule -----------------------------------------------------------


def test_schedule_partition_50khz():
    d = fp.DutyCommand(0.2, 0.3, 0.5, 0.2, 0.3, 0.5)
    s = fp.build_schedule(d, 50e3)
    offsets = [o for o, _ in s.leg1]
    modes = [m for _, m in s.leg1]
    assert offsets == pytest.approx([0.0, 4e-6, 10e-6], abs=1e-18)
    assert modes == [fp.LegMode.A, fp.LegMode.B, fp.LegMode.C]


def test_schedule_degenerate_single_segment():
    d = fp.DutyCommand(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
    s = fp.build_schedule(d, 50e3)
    assert s.leg1 == ((0.0, fp.LegMode.A),)


def test_schedule_durations_30khz():
    d = fp.DutyCommand(0.34, 0.33, 0.33, 0.34, 0.33, 0.33)
    s = fp.build_schedule(d, 30e3)
    t_s = 1 / 30e3
    offsets = [o for o, _ in s.leg1] + [t_s]
    durations = np.diff(offsets)
    assert durations == pytest.approx([0.34 * t_s, 0.33 * t_s, 0.33 * t_s],
                                      abs=1e-12 * t_s)
    assert sum(durations) == pytest.approx(t_s, rel=1e-12)


def test_merged_segments_cover_period():
    d = fp.DutyCommand(0.2, 0.3, 0.5, 0.1, 0.6, 0.3)
    s = fp.build_schedule(d, 50e3)
    segs = fp.merged_segments(s)
    assert segs[0][0] == 0.0
    assert segs[-1][1] == pytest.approx(s.period, rel=1e-15)
    for (a0, b0, _), (a1, b1, _) in zip(segs[:-1], segs[1:]):
        assert b0 == a1
        assert b0 > a0


# --- exact_segment_solution -----------------------------------------------------


def _dyn(a, b):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    b = np.asarray(b, dtype=float)
    b.setflags(write=False)
    return LinearDynamics(a_matrix=a, b_vector=b,
                          valid_for=fp.SwitchConfig(fp.LegMode.A, fp.LegMode.A))


def test_exact_identity_for_zero_dynamics():
    dyn = _dyn(np.zeros((7, 7)), np.zeros(7))
    x0 = fp.StateVector(1, 2, 3, 4, 5, 6, 7)
    assert fp.exact_segment_solution(dyn, x0, 1e-3) == x0


def test_exact_scalar_rl():
    r, l, v = 10.0, 0.72e-3, 100.0
    a = np.zeros((7, 7))
    a[0, 0] = -r / l
    b = np.zeros(7)
    b[0] = v / l
    dyn = _dyn(a, b)
    for dt in (1e-5, 1e-4, 5e-4):
        out = fp.exact_segment_solution(dyn, fp.StateVector(), dt)
        expected = (v / r) * (1 - np.exp(-r * dt / l))
        assert out.i_l1 == pytest.approx(expected, rel=1e-12)


def test_exact_matches_refined_rk4():
    # refinement oracle: 100 RK4 sub-steps vs one exact step
    rng = np.random.default_rng(5)
    g = rng.normal(size=(7, 7)) * 2e5
    a = g - g.T - 2e5 * np.eye(7)  # stable: skew part plus damping
    b = rng.normal(size=7) * 1e3
    dyn = _dyn(a, b)
    x0 = rng.normal(size=7)
    dt = 1e-6
    exact = fp.exact_segment_solution(dyn, fp.StateVector.from_array(x0), dt)
    p = segment_propagator(dyn, dt / 100, fp.Integrator.FIXED_STEP_RK4)
    x = x0.copy()
    for _ in range(100):
        x = apply_propagator(p, x)
    scale = max(np.max(np.abs(x)), 1e-12)
    assert np.max(np.abs(exact.to_array() - x)) / scale < 1e-8


def test_exact_rejects_nonpositive_dt():
    dyn = _dyn(np.zeros((7, 7)), np.zeros(7))
    with pytest.raises(fp.ConfigError):
        fp.exact_segment_solution(dyn, fp.StateVector(), 0.0)


# --- simulate -------------------------------------------------------------------


def rl_loop_params(ron=5.0):
    # both legs in mode C with pinned rails and 0 V far ports turn L1 into
    # a textbook RL loop with R = 2 * ron (two conducting switches)
    return fp.ConverterParams(
        port1=fp.VoltageSource(100.0),
        port2=fp.VoltageSource(0.0),
        port3=fp.VoltageSource(0.0),
        port4=fp.VoltageSource(100.0),
        switch_on_resistance=ron,
    )


def test_simulate_rl_matches_closed_form():
    params = rl_loop_params()
    duties = fp.DutyCommand(0.0, 0.0, 1.0, 0.0, 0.0, 1.0)
    settings = fp.SimulationSettings(
        duration=40 * params.period, steps_per_period=2000,
        record_decimation=1,
    )
    w = fp.simulate(params, duties, settings)
    r_total, l, v = 10.0, params.l1, 100.0
    expected = (v / r_total) * (1 - np.exp(-r_total * w.times / l))
    err = np.max(np.abs(w.states[:, IDX_I_L1] - expected)) / (v / r_total)
    assert err < 1e-5
    assert np.max(np.abs(w.states[:, 1])) < 1e-12  # transfer inductor stays idle


def test_simulate_zero_everything_stays_zero():
    params = idle_params()
    duties = fp.DutyCommand(0.2, 0.3, 0.5, 0.1, 0.4, 0.5)
    settings = fp.SimulationSettings(duration=5 * params.period,
                                     steps_per_period=200)
    w = fp.simulate(params, duties, settings)
    assert np.all(w.states == 0.0)
    assert np.all(w.port_power == 0.0)


def test_simulate_boost_settles_to_gain():
    params = fp.ConverterParams(
        port1=fp.VoltageSource(75.0),
        port2=fp.CapacitorOnly(470e-6, 0.0),
        port3=fp.CapacitorOnly(470e-6, 0.0),
        port4=fp.ResistiveLoad(100.0),
    )
    duties = fp.DutyCommand(0.0, 1.0, 0.0, 0.25, 0.75, 0.0)
    x0 = fp.periodic_steady_state(params, duties)
    settings = fp.SimulationSettings(duration=20 * params.period,
                                     steps_per_period=1000,
                                     integrator=fp.Integrator.EXACT_PIECEWISE)
    w = fp.simulate(params, duties, settings, initial=x0)
    rep = fp.measure_steady_state(w, params.f_sw, 5)
    assert rep.settled
    assert rep.mean_state.v_c4 == pytest.approx(100.0, rel=0.01)


def test_simulate_steps_align_with_mode_boundaries():
    params = idle_params()
    rng = np.random.default_rng(9)
    d1, d4 = rng.uniform(0.1, 0.4, 2)
    d3, d6 = rng.uniform(0.1, 0.4, 2)
    duties = fp.DutyCommand(d1, 1 - d1 - d3, d3, d4, 1 - d4 - d6, d6)
    settings = fp.SimulationSettings(duration=3 * params.period,
                                     steps_per_period=137,
                                     record_decimation=7)
    w = fp.simulate(params, duties, settings, collect_step_log=True)
    segs = fp.merged_segments(fp.build_schedule(duties, params.f_sw))
    t_s = params.period
    for t0, t1, code in w.step_log:
        tau0 = t0 - np.floor(t0 / t_s + 1e-9) * t_s
        tau1 = t1 - t0 + tau0
        hit = [s for s in segs
               if s[0] <= tau0 + 1e-15 and tau1 <= s[1] + 1e-15]
        assert hit, (t0, t1)
        assert hit[0][2].code == code


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_simulate_diverged_reports_time():
    # femtohenry inductors make RK4 violently unstable at 100 steps/period
    params = idle_params(l1=1e-12, l2=1e-12, l3=1e-12)
    duties = fp.DutyCommand(0.5, 0.3, 0.2, 0.5, 0.3, 0.2)
    settings = fp.SimulationSettings(duration=20 * params.period,
                                     steps_per_period=100)
    x0 = fp.StateVector(v_c1=10.0, v_c2=5.0, v_c3=5.0, v_c4=10.0)
    with pytest.raises(fp.Diverged) as exc:
        fp.simulate(params, duties, settings, initial=x0)
    assert 0 < exc.value.time <= 20 * params.period


def test_rk4_fourth_order_convergence():
    # halving the step through doubled steps_per_period cuts the error ~16x
    params = idle_params(l1=1e-6, l2=1e-6, l3=1e-6,
                         c1=1e-6, c2=1e-6, c3=1e-6, c4=1e-6)
    duties = fp.DutyCommand(0.2, 0.3, 0.5, 0.25, 0.375, 0.375)
    x0 = fp.StateVector(1.0, -2.0, 0.5, 10.0, 5.0, -3.0, 8.0)

    def end_state(spp, integrator):
        settings = fp.SimulationSettings(duration=params.period,
                                         steps_per_period=spp,
                                         integrator=integrator,
                                         record_decimation=10**9)
        w = fp.simulate(params, duties, settings, initial=x0)
        return w.states[-1]

    ref = end_state(100, fp.Integrator.EXACT_PIECEWISE)
    err1 = np.max(np.abs(end_state(100, fp.Integrator.FIXED_STEP_RK4) - ref))
    err2 = np.max(np.abs(end_state(200, fp.Integrator.FIXED_STEP_RK4) - ref))
    assert err1 > 1e-12  # errors are resolvable, not noise
    ratio = err1 / err2
    assert 10 < ratio < 24


def test_rk4_matches_exact_on_reference_scale():
    params = fp.ConverterParams(
        port1=fp.VoltageSource(150.0),
        port2=fp.VoltageSource(25.0),
        port3=fp.VoltageSource(35.0),
        port4=fp.ResistiveLoad(5.0),
    )
    duties = fp.solve_duties(fp.PortTargets(150.0, 25.0, 35.0, 100.0))
    x0 = fp.periodic_steady_state(params, duties)
    out = {}
    for integ in fp.Integrator:
        settings = fp.SimulationSettings(duration=10 * params.period,
                                         steps_per_period=1000,
                                         integrator=integ)
        out[integ] = fp.simulate(params, duties, settings, initial=x0)
    a, b = out[fp.Integrator.FIXED_STEP_RK4], out[fp.Integrator.EXACT_PIECEWISE]
    assert np.array_equal(a.times, b.times)
    scale = np.max(np.abs(b.states))
    assert np.max(np.abs(a.states - b.states)) / scale < 1e-5


# --- periodic_steady_state ------------------------------------------------------


def test_periodic_orbit_is_fixed_point():
    params = fp.ConverterParams(
        port1=fp.VoltageSource(150.0),
        port2=fp.CapacitorOnly(470e-6, 0.0),
        port3=fp.CapacitorOnly(470e-6, 0.0),
        port4=fp.ResistiveLoad(100.0),
    )
    duties = fp.DutyCommand(1 / 3, 2 / 3, 0.0, 0.0, 1.0, 0.0)
    x0 = fp.periodic_steady_state(params, duties)
    settings = fp.SimulationSettings(duration=params.period,
                                     steps_per_period=1000,
                                     integrator=fp.Integrator.EXACT_PIECEWISE)
    w = fp.simulate(params, duties, settings, initial=x0)
    assert np.max(np.abs(w.states[-1] - x0.to_array())) < 1e-9


# --- measure_steady_state --------------------------------------------------------


def _ripple_waveform(f_sw, n_periods, dc, ripple, drift=0.0):
    t_s = 1 / f_sw
    t = np.linspace(0, n_periods * t_s, n_periods * 100 + 1)
    states = np.zeros((len(t), 7))
    for j in range(7):
        states[:, j] = dc[j] + ripple * np.sin(2 * np.pi * t / t_s) + drift * t
    return fp.Waveform(times=t, states=states,
                       config_codes=np.zeros(len(t), dtype=np.int8),
                       port_power=np.zeros((len(t), 4)))


def test_measure_dc_plus_ripple():
    dc = np.array([1.0, 2.0, 3.0, 100.0, 50.0, 30.0, 80.0])
    w = _ripple_waveform(50e3, 20, dc, ripple=0.5)
    rep = fp.measure_steady_state(w, 50e3, 5)
    assert rep.settled
    assert rep.mean_state.to_array() == pytest.approx(dc, rel=1e-6, abs=1e-9)
    assert np.all(rep.periodicity_error < 1e-9)


def test_measure_mid_transient_not_settled():
    dc = np.zeros(7)
    w = _ripple_waveform(50e3, 20, dc, ripple=0.0, drift=1e4)
    rep = fp.measure_steady_state(w, 50e3, 5)
    assert not rep.settled


def test_measure_window_too_short():
    w = _ripple_waveform(50e3, 8, np.zeros(7), ripple=0.1)
    with pytest.raises(fp.WindowTooShort):
        fp.measure_steady_state(w, 50e3, 5)


def test_settings_validation():
    with pytest.raises(fp.ConfigError):
        fp.SimulationSettings(duration=0.0)
    with pytest.raises(fp.ConfigError):
        fp.SimulationSettings(duration=1e-3, steps_per_period=50)
    with pytest.raises(fp.ConfigError):
        fp.SimulationSettings(duration=1e-3, record_decimation=0)

"""Topology and per-configuration dynamics checks.

The KCL test rebuilds the circuit as a tiny netlist (nodes merged through
conducting switches with a union-find) and compares the capacitor-current
incidence against the assembled A matrix; the energy test evaluates the
lossless power-balance identity symbolically from A and b.
"""

import numpy as np
import pytest

import fourport as fp
from fourport.topology import (
    IDX_I_L1,
    IDX_I_L2,
    IDX_I_L3,
    IDX_V_C1,
    IDX_V_C2,
    IDX_V_C4,
    PORT_STATE_INDEX,
    rail_currents,
)


def cap_only_params(**kw):
    defaults = dict(
        port1=fp.CapacitorOnly(470e-6, 0.0),
        port2=fp.CapacitorOnly(470e-6, 0.0),
        port3=fp.CapacitorOnly(470e-6, 0.0),
        port4=fp.CapacitorOnly(470e-6, 0.0),
    )
    defaults.update(kw)
    return fp.ConverterParams(**defaults)


# --- leg_inductor_voltages ----------------------------------------------------


def test_leg_voltages_mode_a():
    assert fp.leg_inductor_voltages(fp.LegMode.A, 50.0, 25.0, 100.0) == (-50.0, -25.0)


def test_leg_voltages_mode_b():
    assert fp.leg_inductor_voltages(fp.LegMode.B, 50.0, 25.0, 100.0) == (50.0, -25.0)


def test_leg_voltages_mode_c_zero():
    assert fp.leg_inductor_voltages(fp.LegMode.C, 0.0, 0.0, 0.0) == (0.0, 0.0)


def test_leg_voltages_mode_c():
    v_la, v_lb = fp.leg_inductor_voltages(fp.LegMode.C, 50.0, 25.0, 100.0)
    assert v_la == 50.0 and v_lb == 75.0


# --- derive_dynamics ----------------------------------------------------------


def test_nine_configs_finite():
    params = cap_only_params()
    configs = fp.SwitchConfig.all()
    assert len(configs) == 9
    assert len(set(configs)) == 9
    for config in configs:
        dyn = fp.derive_dynamics(config, params)
        assert np.all(np.isfinite(dyn.a_matrix))
        assert np.all(np.isfinite(dyn.b_vector))
        assert dyn.valid_for == config


def test_pure_function():
    params = cap_only_params()
    config = fp.SwitchConfig(fp.LegMode.B, fp.LegMode.C)
    d1 = fp.derive_dynamics(config, params)
    d2 = fp.derive_dynamics(config, params)
    assert np.array_equal(d1.a_matrix, d2.a_matrix)
    assert np.array_equal(d1.b_vector, d2.b_vector)


def test_mode_aa_transfer_idle():
    # both inner transfer nodes grounded: the transfer inductor sees zero
    params = cap_only_params()
    dyn = fp.derive_dynamics(fp.SwitchConfig(fp.LegMode.A, fp.LegMode.A), params)
    x = np.array([1.0, 2.0, 3.0, 100.0, 50.0, 30.0, 80.0])
    assert dyn.derivative(x)[IDX_I_L2] == 0.0


def test_mode_c_port_inductor_row():
    # leg 1 bottom switch OFF ties B1 to the rail: L1 sees v_c1 - v_c2
    params = cap_only_params()
    for leg2 in fp.LegMode:
        dyn = fp.derive_dynamics(fp.SwitchConfig(fp.LegMode.C, leg2), params)
        x = np.zeros(7)
        x[IDX_V_C1] = 100.0
        x[IDX_V_C2] = 30.0
        assert dyn.derivative(x)[IDX_I_L1] == pytest.approx(
            (100.0 - 30.0) / params.l1, rel=1e-15
        )


def test_rejects_degenerate_parameters():
    with pytest.raises(fp.ConfigError):
        cap_only_params(l1=0.0)
    with pytest.raises(fp.ConfigError):
        cap_only_params(c2=-1e-6)
    with pytest.raises(fp.ConfigError):
        cap_only_params(f_sw=0.0)
    with pytest.raises(fp.ConfigError):
        cap_only_params(switch_on_resistance=-0.1)


def test_port_model_validation():
    with pytest.raises(fp.ConfigError):
        fp.ResistiveLoad(0.0)
    with pytest.raises(fp.ConfigError):
        fp.CapacitorOnly(-1e-6)
    with pytest.raises(fp.ConfigError):
        fp.VoltageSource(100.0, series_ohms=-1.0)
    with pytest.raises(fp.ConfigError):
        fp.CurrentSink(float("nan"))


# --- independent nodal-analysis oracle ----------------------------------------


class _UnionFind:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a, b):
        self.parent[self.find(a)] = self.find(b)


NODES = ("gnd", "p1", "p2", "p3", "p4", "a1", "b1", "a2", "b2")
INDUCTOR_BRANCHES = {  # state index -> (from node, to node), current from->to
    IDX_I_L1: ("b1", "p2"),
    IDX_I_L2: ("a1", "a2"),
    IDX_I_L3: ("b2", "p3"),
}
CONDUCTING = {  # leg mode -> connected node pairs (rail, a, b, gnd naming)
    fp.LegMode.A: (("a", "b"), ("b", "gnd")),
    fp.LegMode.B: (("rail", "a"), ("b", "gnd")),
    fp.LegMode.C: (("rail", "a"), ("a", "b")),
}


def _merged_nodes(config):
    uf = _UnionFind(NODES)
    names = {1: {"rail": "p1", "a": "a1", "b": "b1", "gnd": "gnd"},
             2: {"rail": "p4", "a": "a2", "b": "b2", "gnd": "gnd"}}
    for leg, mode in ((1, config.leg1), (2, config.leg2)):
        for u, v in CONDUCTING[mode]:
            uf.union(names[leg][u], names[leg][v])
    return uf


def test_capacitor_rows_match_nodal_incidence():
    # columns of the capacitor rows, scaled by C, equal the net inductor
    # current incidence on each port's merged node class
    params = cap_only_params()
    for config in fp.SwitchConfig.all():
        dyn = fp.derive_dynamics(config, params)
        uf = _merged_nodes(config)
        for port, port_node in ((1, "p1"), (2, "p2"), (3, "p3"), (4, "p4")):
            row = PORT_STATE_INDEX[port - 1]
            c_eff = params.effective_capacitance(port)
            port_class = uf.find(port_node)
            gnd_class = uf.find("gnd")
            for j, (n_from, n_to) in INDUCTOR_BRANCHES.items():
                incidence = 0.0
                if uf.find(n_to) == port_class:
                    incidence += 1.0
                if uf.find(n_from) == port_class:
                    incidence -= 1.0
                if port_class == gnd_class:
                    incidence = 0.0  # grounded port node sources no cap current
                assert c_eff * dyn.a_matrix[row, j] == pytest.approx(
                    incidence, abs=1e-12
                ), (config, port, j)


def test_inductor_rows_reproduce_leg_voltages():
    # inductor-voltage rows, multiplied by L, equal the generic-leg formulas
    rng = np.random.default_rng(7)
    params = cap_only_params()
    for config in fp.SwitchConfig.all():
        dyn = fp.derive_dynamics(config, params)
        for _ in range(5):
            x = rng.uniform(-100, 100, size=7)
            v_a2 = x[IDX_V_C4] if config.leg2.inner_node_on_rail[0] else 0.0
            v_a1 = x[IDX_V_C1] if config.leg1.inner_node_on_rail[0] else 0.0
            dx = dyn.derivative(x)
            v_l2_leg1, v_l1 = fp.leg_inductor_voltages(
                config.leg1, v_a2, x[IDX_V_C2], x[IDX_V_C1]
            )
            assert dx[IDX_I_L1] * params.l1 == pytest.approx(v_l1, abs=1e-12)
            assert dx[IDX_I_L2] * params.l2 == pytest.approx(v_l2_leg1, abs=1e-12)
            # the same transfer-inductor voltage from leg 2's frame
            v_l2_leg2, v_l3 = fp.leg_inductor_voltages(
                config.leg2, v_a1, x[5], x[IDX_V_C4]
            )
            assert dx[IDX_I_L3] * params.l3 == pytest.approx(v_l3, abs=1e-12)
            assert dx[IDX_I_L2] * params.l2 == pytest.approx(-v_l2_leg2, abs=1e-12)


def test_lossless_energy_identity():
    # d/dt stored energy == injected source power, symbolically from A, b
    rng = np.random.default_rng(21)
    params = fp.ConverterParams(
        port1=fp.VoltageSource(150.0),
        port2=fp.VoltageSource(25.0),
        port3=fp.CapacitorOnly(1.0, 35.0),
        port4=fp.CurrentSink(4.0),
    )
    weights = np.array([params.l1, params.l2, params.l3]
                       + [params.effective_capacitance(p) for p in (1, 2, 3, 4)])
    for config in fp.SwitchConfig.all():
        dyn = fp.derive_dynamics(config, params)
        sa1, sb1 = (1.0 if t else 0.0 for t in config.leg1.inner_node_on_rail)
        sa2, sb2 = (1.0 if t else 0.0 for t in config.leg2.inner_node_on_rail)
        for _ in range(10):
            x = rng.uniform(-50, 50, size=7)
            x[IDX_V_C1] = 150.0
            x[IDX_V_C2] = 25.0
            de = float(weights @ (x * dyn.derivative(x)))
            # independent source-power expression
            i_rail1 = sa1 * x[IDX_I_L2] + sb1 * x[IDX_I_L1]
            i_rail4 = -sa2 * x[IDX_I_L2] + sb2 * x[IDX_I_L3]
            p_src = 150.0 * i_rail1 + 25.0 * (-x[IDX_I_L1])
            p_sink = x[IDX_V_C4] * (-4.0)
            # pinned port 4 would be (v * i_rail4); here it is a sink on C4
            assert de == pytest.approx(p_src + p_sink, rel=1e-12, abs=1e-9)


def test_rail_currents_match_port_power_for_pinned_sources():
    params = fp.ConverterParams(
        port1=fp.VoltageSource(150.0),
        port2=fp.CapacitorOnly(470e-6, 25.0),
        port3=fp.CapacitorOnly(470e-6, 35.0),
        port4=fp.VoltageSource(100.0),
    )
    rng = np.random.default_rng(3)
    for config in fp.SwitchConfig.all():
        x = rng.uniform(-30, 30, size=7)
        x[IDX_V_C1], x[IDX_V_C4] = 150.0, 100.0
        rails = rail_currents(config, x)
        p = fp.port_powers(params, config, x)
        assert p[0] == pytest.approx(150.0 * rails[0], rel=1e-12)
        assert p[3] == pytest.approx(100.0 * rails[1], rel=1e-12)


def test_pinned_source_rows_are_zero():
    params = fp.ConverterParams(
        port1=fp.VoltageSource(150.0),
        port2=fp.CapacitorOnly(470e-6, 0.0),
        port3=fp.CapacitorOnly(470e-6, 0.0),
        port4=fp.ResistiveLoad(100.0),
    )
    for config in fp.SwitchConfig.all():
        dyn = fp.derive_dynamics(config, params)
        assert np.all(dyn.a_matrix[IDX_V_C1] == 0.0)
        assert dyn.b_vector[IDX_V_C1] == 0.0


def test_switch_resistance_makes_rl_loop():
    # bottom switch OFF on both legs, both rails pinned, far ports at 0 V:
    # L1 sees the rail through two conducting switches in series
    ron = 5.0
    params = fp.ConverterParams(
        port1=fp.VoltageSource(100.0),
        port2=fp.VoltageSource(0.0),
        port3=fp.VoltageSource(0.0),
        port4=fp.VoltageSource(100.0),
        switch_on_resistance=ron,
    )
    dyn = fp.derive_dynamics(fp.SwitchConfig(fp.LegMode.C, fp.LegMode.C), params)
    x = np.zeros(7)
    x[IDX_V_C1] = x[IDX_V_C4] = 100.0
    x[IDX_I_L1] = 2.0
    # v_B1 = v_c1 - ron*(i_l2 + 2*i_l1) with i_l2 = 0
    assert dyn.derivative(x)[IDX_I_L1] * params.l1 == pytest.approx(
        100.0 - 2 * ron * 2.0, rel=1e-12
    )


def test_state_vector_round_trip():
    x = fp.StateVector(1, 2, 3, 4, 5, 6, 7)
    assert fp.StateVector.from_array(x.to_array()) == x
    with pytest.raises(ValueError):
        fp.StateVector.from_array(np.zeros(6))

"""Circuit topology and per-configuration linear dynamics.

The converter is built from two three-switch legs sharing a ground:

* Leg 1 stacks S1 (rail to node A1), S2 (A1 to B1), S3 (B1 to ground)
  across the port-1 capacitor C1. Leg 2 mirrors it across C4 with
  S4, S5, S6 and inner nodes A2, B2.
* Inductor L1 ties B1 to the port-2 capacitor C2, inductor L3 ties B2
  to the port-3 capacitor C3, and the transfer inductor L2 ties A1 to A2.

Exactly one switch per leg is OFF at any instant; the other two conduct
bidirectionally. With ideal switches the inner nodes therefore sit at the
leg rail or at ground:

====== =========== ============ ============
mode   OFF switch  inner node A inner node B
====== =========== ============ ============
A      top         ground       ground
B      middle      rail         ground
C      bottom      rail         rail
====== =========== ============ ============

The state vector is ``[i_l1, i_l2, i_l3, v_c1, v_c2, v_c3, v_c4]``.
Sign conventions: ``i_l1`` flows from B1 into port 2, ``i_l2`` from A1
to A2, ``i_l3`` from B2 into port 3. Port powers are positive when the
external element sources power into the converter.

Inductor naming is fixed as above: L2 is always the leg-to-leg transfer
inductor, L1 and L3 are the port inductors. An idle converter (no
inter-leg transfer) therefore has ``i_l2 == 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import ConfigError

N_STATES = 7
STATE_NAMES = ("i_l1", "i_l2", "i_l3", "v_c1", "v_c2", "v_c3", "v_c4")
IDX_I_L1, IDX_I_L2, IDX_I_L3 = 0, 1, 2
IDX_V_C1, IDX_V_C2, IDX_V_C3, IDX_V_C4 = 3, 4, 5, 6

#: state index of each port's capacitor voltage, ports 1..4
PORT_STATE_INDEX = (IDX_V_C1, IDX_V_C2, IDX_V_C3, IDX_V_C4)


class LegMode(Enum):
    """Which of a leg's three switches is OFF (top, middle, bottom)."""

    A = "A"
    B = "B"
    C = "C"

    @property
    def inner_node_on_rail(self) -> tuple[bool, bool]:
        """(node A tied to rail, node B tied to rail) for ideal switches."""
        return _NODE_TIES[self]


_NODE_TIES = {
    LegMode.A: (False, False),
    LegMode.B: (True, False),
    LegMode.C: (True, True),
}


@dataclass(frozen=True)
class SwitchConfig:
    """Active mode of each leg; 9 distinct configurations exist."""

    leg1: LegMode
    leg2: LegMode

    @staticmethod
    def all() -> tuple["SwitchConfig", ...]:
        return tuple(SwitchConfig(m1, m2) for m1 in LegMode for m2 in LegMode)

    @property
    def code(self) -> int:
        """Dense index in 0..8 (row-major over leg1, leg2 modes)."""
        order = (LegMode.A, LegMode.B, LegMode.C)
        return order.index(self.leg1) * 3 + order.index(self.leg2)

    @staticmethod
    def from_code(code: int) -> "SwitchConfig":
        order = (LegMode.A, LegMode.B, LegMode.C)
        return SwitchConfig(order[code // 3], order[code % 3])


# --- port models -----------------------------------------------------------


@dataclass(frozen=True)
class VoltageSource:
    """Stiff or resistive voltage source behind the port node.

    ``series_ohms == 0`` pins the port voltage: the capacitor state is
    eliminated (zero derivative, fixed value).
    """

    volts: float
    series_ohms: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.volts):
            raise ConfigError("VoltageSource.volts must be finite")
        if self.series_ohms < 0:
            raise ConfigError("VoltageSource.series_ohms must be >= 0")


@dataclass(frozen=True)
class ResistiveLoad:
    ohms: float

    def __post_init__(self):
        if self.ohms <= 0:
            raise ConfigError("ResistiveLoad.ohms must be > 0")


@dataclass(frozen=True)
class CapacitorOnly:
    """Extra capacitance in parallel with the port filter capacitor.

    Used for the ultracapacitor port; ``initial_volts`` seeds the state.
    """

    farads: float
    initial_volts: float = 0.0

    def __post_init__(self):
        if self.farads <= 0:
            raise ConfigError("CapacitorOnly.farads must be > 0")


@dataclass(frozen=True)
class CurrentSink:
    """Constant current drawn from the port; negative `amps` injects."""

    amps: float

    def __post_init__(self):
        if not math.isfinite(self.amps):
            raise ConfigError("CurrentSink.amps must be finite")


PortModel = Union[VoltageSource, ResistiveLoad, CapacitorOnly, CurrentSink]


@dataclass(frozen=True)
class ConverterParams:
    """Component values, switching frequency, and the four port models."""

    port1: PortModel
    port2: PortModel
    port3: PortModel
    port4: PortModel
    l1: float = 0.72e-3
    l2: float = 0.72e-3
    l3: float = 0.72e-3
    c1: float = 470e-6
    c2: float = 470e-6
    c3: float = 470e-6
    c4: float = 470e-6
    f_sw: float = 50e3
    switch_on_resistance: float = 0.0

    def __post_init__(self):
        for name in ("l1", "l2", "l3", "c1", "c2", "c3", "c4", "f_sw"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"ConverterParams.{name} must be > 0")
        if self.switch_on_resistance < 0:
            raise ConfigError("ConverterParams.switch_on_resistance must be >= 0")

    @property
    def period(self) -> float:
        return 1.0 / self.f_sw

    @property
    def inductances(self) -> tuple[float, float, float]:
        return (self.l1, self.l2, self.l3)

    @property
    def ports(self) -> tuple[PortModel, PortModel, PortModel, PortModel]:
        return (self.port1, self.port2, self.port3, self.port4)

    def effective_capacitance(self, port: int) -> float:
        """Filter capacitance plus any CapacitorOnly port capacitance."""
        c = (self.c1, self.c2, self.c3, self.c4)[port - 1]
        model = self.ports[port - 1]
        if isinstance(model, CapacitorOnly):
            c += model.farads
        return c

    def pinned_voltages(self) -> dict[int, float]:
        """State index -> fixed voltage for ideally pinned ports."""
        out = {}
        for port, model in enumerate(self.ports, start=1):
            if isinstance(model, VoltageSource) and model.series_ohms == 0.0:
                out[PORT_STATE_INDEX[port - 1]] = model.volts
        return out


@dataclass
class StateVector:
    """Inductor currents (A) and capacitor voltages (V)."""

    i_l1: float = 0.0
    i_l2: float = 0.0
    i_l3: float = 0.0
    v_c1: float = 0.0
    v_c2: float = 0.0
    v_c3: float = 0.0
    v_c4: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.i_l1, self.i_l2, self.i_l3,
             self.v_c1, self.v_c2, self.v_c3, self.v_c4],
            dtype=float,
        )

    @staticmethod
    def from_array(x) -> "StateVector":
        x = np.asarray(x, dtype=float)
        if x.shape != (N_STATES,):
            raise ValueError(f"expected {N_STATES} states, got shape {x.shape}")
        return StateVector(*x.tolist())


@dataclass(frozen=True)
class LinearDynamics:
    """Constant-topology dynamics ``x' = A x + b`` for one SwitchConfig."""

    a_matrix: np.ndarray
    b_vector: np.ndarray
    valid_for: SwitchConfig

    def derivative(self, x: np.ndarray) -> np.ndarray:
        return self.a_matrix @ x + self.b_vector


# --- operations ------------------------------------------------------------


def leg_inductor_voltages(
    mode: LegMode, v_port_a: float, v_port_b: float, v_rail: float
) -> tuple[float, float]:
    """Voltages across a generic leg's two inductors for ideal switches.

    ``v_port_a`` / ``v_port_b`` are the voltages at the far ends of the
    inductors hanging off inner nodes A and B; ``v_rail`` is the leg rail.
    """
    on_a, on_b = mode.inner_node_on_rail
    v_node_a = v_rail if on_a else 0.0
    v_node_b = v_rail if on_b else 0.0
    return (v_node_a - v_port_a, v_node_b - v_port_b)


def _leg_node_coefficients(mode: LegMode, ron: float):
    """Inner node voltages as affine functions of rail voltage and currents.

    Returns ((ra, ka_ia, ka_ib), (rb, kb_ia, kb_ib)) such that

        v_A = ra * v_rail + ka_ia * i_a + ka_ib * i_b
        v_B = rb * v_rail + kb_ia * i_a + kb_ib * i_b

    where ``i_a`` / ``i_b`` are the currents leaving nodes A / B into
    their inductors. With ``ron == 0`` this reduces to the rail/ground
    table in the module docstring.
    """
    if mode is LegMode.A:
        # conduction chain: ground - bottom switch - B - middle switch - A
        return ((0.0, -2.0 * ron, -ron), (0.0, -ron, -ron))
    if mode is LegMode.B:
        # A to rail through the top switch, B to ground through the bottom
        return ((1.0, -ron, 0.0), (0.0, 0.0, -ron))
    # mode C, chain: rail - top switch - A - middle switch - B
    return ((1.0, -ron, -ron), (1.0, -ron, -2.0 * ron))


def _rail_current_indicators(mode: LegMode) -> tuple[float, float]:
    """(share of i_a, share of i_b) drawn from the leg rail."""
    on_a, on_b = mode.inner_node_on_rail
    return (1.0 if on_a else 0.0, 1.0 if on_b else 0.0)


@lru_cache(maxsize=None)
def derive_dynamics(config: SwitchConfig, params: ConverterParams) -> LinearDynamics:
    """Assemble ``x' = A x + b`` for one switch configuration.

    Node voltages follow the conduction rules of the two legs; port models
    contribute their Thevenin/Norton terms at the port nodes. States pinned
    by an ideal voltage source get a zero derivative row. Matrices are
    returned read-only (results are cached).
    """
    a = np.zeros((N_STATES, N_STATES))
    b = np.zeros(N_STATES)
    ron = params.switch_on_resistance

    # leg 1: node A1 feeds L2 (i_a = +i_l2), node B1 feeds L1 (i_b = i_l1)
    (ra1, ka1_ia, ka1_ib), (rb1, kb1_ia, kb1_ib) = _leg_node_coefficients(
        config.leg1, ron
    )
    # leg 2: i_l2 arrives at A2, so the current leaving A2 is -i_l2
    (ra2, ka2_ia, ka2_ib), (rb2, kb2_ia, kb2_ib) = _leg_node_coefficients(
        config.leg2, ron
    )

    # v_A1, v_B1, v_A2, v_B2 as affine rows over the state vector
    v_a1 = np.zeros(N_STATES)
    v_a1[IDX_V_C1] = ra1
    v_a1[IDX_I_L2] += ka1_ia
    v_a1[IDX_I_L1] += ka1_ib
    v_b1 = np.zeros(N_STATES)
    v_b1[IDX_V_C1] = rb1
    v_b1[IDX_I_L2] += kb1_ia
    v_b1[IDX_I_L1] += kb1_ib
    v_a2 = np.zeros(N_STATES)
    v_a2[IDX_V_C4] = ra2
    v_a2[IDX_I_L2] += -ka2_ia
    v_a2[IDX_I_L3] += ka2_ib
    v_b2 = np.zeros(N_STATES)
    v_b2[IDX_V_C4] = rb2
    v_b2[IDX_I_L2] += -kb2_ia
    v_b2[IDX_I_L3] += kb2_ib

    # inductor rows: L di/dt = voltage across the inductor
    a[IDX_I_L1] = v_b1 / params.l1
    a[IDX_I_L1, IDX_V_C2] += -1.0 / params.l1
    a[IDX_I_L2] = (v_a1 - v_a2) / params.l2
    a[IDX_I_L3] = v_b2 / params.l3
    a[IDX_I_L3, IDX_V_C3] += -1.0 / params.l3

    # rail currents drawn by each leg (linear in inductor currents)
    sa1, sb1 = _rail_current_indicators(config.leg1)
    sa2, sb2 = _rail_current_indicators(config.leg2)
    rail1 = np.zeros(N_STATES)
    rail1[IDX_I_L2] = sa1
    rail1[IDX_I_L1] = sb1
    rail4 = np.zeros(N_STATES)
    rail4[IDX_I_L2] = -sa2
    rail4[IDX_I_L3] = sb2

    # capacitor rows: C dv/dt = injected currents
    conv_currents = {
        1: -rail1,
        2: _unit(IDX_I_L1),
        3: _unit(IDX_I_L3),
        4: -rail4,
    }
    pinned = params.pinned_voltages()
    for port in range(1, 5):
        k = PORT_STATE_INDEX[port - 1]
        if k in pinned:
            continue
        c_eff = params.effective_capacitance(port)
        a[k] += conv_currents[port] / c_eff
        model = params.ports[port - 1]
        if isinstance(model, VoltageSource):
            # series_ohms > 0 here (pinned case handled above)
            a[k, k] += -1.0 / (model.series_ohms * c_eff)
            b[k] += model.volts / (model.series_ohms * c_eff)
        elif isinstance(model, ResistiveLoad):
            a[k, k] += -1.0 / (model.ohms * c_eff)
        elif isinstance(model, CurrentSink):
            b[k] += -model.amps / c_eff

    a.setflags(write=False)
    b.setflags(write=False)
    return LinearDynamics(a_matrix=a, b_vector=b, valid_for=config)


def _unit(i: int) -> np.ndarray:
    e = np.zeros(N_STATES)
    e[i] = 1.0
    return e


def rail_currents(config: SwitchConfig, states: np.ndarray) -> np.ndarray:
    """Currents drawn from the leg rails (ports 1 and 4), vectorized.

    ``states`` has shape (..., 7); returns shape (..., 2).
    """
    states = np.asarray(states, dtype=float)
    sa1, sb1 = _rail_current_indicators(config.leg1)
    sa2, sb2 = _rail_current_indicators(config.leg2)
    i1 = sa1 * states[..., IDX_I_L2] + sb1 * states[..., IDX_I_L1]
    i4 = -sa2 * states[..., IDX_I_L2] + sb2 * states[..., IDX_I_L3]
    return np.stack([i1, i4], axis=-1)


def port_currents(
    params: ConverterParams, config: SwitchConfig, states: np.ndarray
) -> np.ndarray:
    """Current injected into each port node by its external element.

    Positive current flows from the external element into the converter.
    Shape: states (..., 7) -> (..., 4).
    """
    states = np.asarray(states, dtype=float)
    rails = rail_currents(config, states)
    conv_in = np.stack(
        [
            -rails[..., 0],
            states[..., IDX_I_L1],
            states[..., IDX_I_L3],
            -rails[..., 1],
        ],
        axis=-1,
    )
    out = np.empty(states.shape[:-1] + (4,))
    dyn = derive_dynamics(config, params)
    for port in range(1, 5):
        k = PORT_STATE_INDEX[port - 1]
        model = params.ports[port - 1]
        v = states[..., k]
        if isinstance(model, VoltageSource):
            if model.series_ohms == 0.0:
                # pinned node: the source balances the converter current
                out[..., port - 1] = -conv_in[..., port - 1]
            else:
                out[..., port - 1] = (model.volts - v) / model.series_ohms
        elif isinstance(model, ResistiveLoad):
            out[..., port - 1] = -v / model.ohms
        elif isinstance(model, CurrentSink):
            out[..., port - 1] = -model.amps
        else:  # CapacitorOnly: external capacitor current = C_ext * dv/dt
            dvdt = states @ dyn.a_matrix[k] + dyn.b_vector[k]
            out[..., port - 1] = -model.farads * dvdt
    return out


def port_powers(
    params: ConverterParams, config: SwitchConfig, states: np.ndarray
) -> np.ndarray:
    """Instantaneous power each port element sources into the converter."""
    states = np.asarray(states, dtype=float)
    currents = port_currents(params, config, states)
    volts = states[..., list(PORT_STATE_INDEX)]
    return volts * currents


def stored_energy(params: ConverterParams, states: np.ndarray) -> np.ndarray:
    """Total energy in inductors and (effective) capacitors, shape (...,)."""
    states = np.asarray(states, dtype=float)
    weights = np.array(
        [params.l1, params.l2, params.l3]
        + [params.effective_capacitance(p) for p in range(1, 5)]
    )
    return 0.5 * np.sum(weights * states**2, axis=-1)


def initial_state(params: ConverterParams) -> StateVector:
    """Zero currents; capacitor voltages seeded from the port models."""
    x = np.zeros(N_STATES)
    for port, model in enumerate(params.ports, start=1):
        k = PORT_STATE_INDEX[port - 1]
        if isinstance(model, VoltageSource):
            x[k] = model.volts
        elif isinstance(model, CapacitorOnly):
            x[k] = model.initial_volts
    return StateVector.from_array(x)


def clamp_pinned(params: ConverterParams, x: np.ndarray) -> np.ndarray:
    """Force states pinned by ideal sources to their fixed values."""
    x = np.array(x, dtype=float)
    for k, v in params.pinned_voltages().items():
        x[k] = v
    return x

"""Built-in scenarios for the HEV operating modes and the bench tests.

The closed-loop presets (fig6a..fig9b) exercise the four operating modes
at the reference conditions: battery 25 V, fuel cell 35 V, dc link
regulated at 100 V, ultracapacitor bus at 150 V or 75 V, 0.72 mH
inductors, 50 kHz switching. Motoring presets load the dc link with a
resistor sized to the demanded power; the braking presets inject the
reverse dc-link current with a negative current sink.

The open-loop presets (fig10, fig11) mirror the 30 kHz bench tests with
a single 25 V or 100 V source and 100 ohm loads. The bench duty ratios
are not part of the reference conditions; the values here are derived
from the steady-state gain relations to hit 100 V rails, so these two
presets reproduce the tests qualitatively.
"""

from __future__ import annotations

import copy

from .errors import ValidationError

_HEV_PORTS_UC150 = {
    "port1": {"kind": "capacitor", "farads": 1.0, "initial_volts": 150.0},
    "port2": {"kind": "source", "volts": 25.0, "series_ohms": 0.0},
    "port3": {"kind": "source", "volts": 35.0, "series_ohms": 0.0},
}

_HEV_PARAMS = {
    "l1": 0.72e-3, "l2": 0.72e-3, "l3": 0.72e-3,
    "c1": 470e-6, "c2": 470e-6, "c3": 470e-6, "c4": 470e-6,
    "f_sw": 50e3,
    "switch_on_resistance": 0.0,
}


def _hev_preset(name, description, mode, demand_w, dc_port, uc_volts=150.0,
                duration=0.03):
    ports = copy.deepcopy(_HEV_PORTS_UC150)
    ports["port1"]["initial_volts"] = uc_volts
    ports["port4"] = dc_port
    return {
        "name": name,
        "description": description,
        "params": {**_HEV_PARAMS, "ports": ports},
        "control": {
            "type": "closed_loop",
            "mode": mode,
            "demand_w": demand_w,
            "v_dc_nominal": 100.0,
        },
        "settings": {
            "duration": duration,
            "steps_per_period": 1000,
            "integrator": "rk4",
            "record_decimation": 10,
        },
        "initial": "steady_state",
        "events": [],
    }


_PRESETS: dict[str, dict] = {
    "fig6a": _hev_preset(
        "fig6a",
        "medium power, 1 kW: fuel cell carries the load, battery idle, "
        "ultracapacitor held at 150 V",
        {"name": "medium_power", "charge_battery": False},
        1000.0,
        {"kind": "load", "ohms": 10.0},
    ),
    "fig6b": _hev_preset(
        "fig6b",
        "medium power, 1 kW: fuel cell also charges the battery at 10 A",
        {"name": "medium_power", "charge_battery": True},
        1000.0,
        {"kind": "load", "ohms": 10.0},
    ),
    "fig7a": _hev_preset(
        "fig7a",
        "high power, 2 kW: fuel cell at 40 A, battery supplies 24 A, "
        "ultracapacitor held at 150 V",
        {"name": "high_power", "uc_assist": False},
        2000.0,
        {"kind": "load", "ohms": 5.0},
    ),
    "fig7b": _hev_preset(
        "fig7b",
        "high power, 2 kW: battery relieved to 18 A, ultracapacitor "
        "(at 75 V) supplies the remainder",
        {"name": "high_power", "uc_assist": True},
        2000.0,
        {"kind": "load", "ohms": 5.0},
        uc_volts=75.0,
    ),
    "fig8a": _hev_preset(
        "fig8a",
        "low power, 500 W: fuel cell off, battery supplies 20 A",
        {"name": "low_power", "uc_assist": False},
        500.0,
        {"kind": "load", "ohms": 20.0},
    ),
    "fig8b": _hev_preset(
        "fig8b",
        "low power, 500 W: battery relieved to 15 A, ultracapacitor "
        "(at 75 V) supplies the remainder",
        {"name": "low_power", "uc_assist": True},
        500.0,
        {"kind": "load", "ohms": 20.0},
        uc_volts=75.0,
    ),
    "fig9a": _hev_preset(
        "fig9a",
        "regenerative braking, 375 W returned: battery charged at 15 A, "
        "ultracapacitor held at 150 V",
        {"name": "regenerative_braking", "charge_uc": False},
        -375.0,
        {"kind": "sink", "amps": -3.75},
    ),
    "fig9b": _hev_preset(
        "fig9b",
        "regenerative braking, 750 W returned: battery charged at 15 A, "
        "surplus stored in the ultracapacitor (at 75 V)",
        {"name": "regenerative_braking", "charge_uc": True},
        -750.0,
        {"kind": "sink", "amps": -7.5},
        uc_volts=75.0,
    ),
    "fig10": {
        "name": "fig10",
        "description": "bench test, 30 kHz: 25 V source on port 2 feeds "
        "100 ohm loads on ports 1 and 4 (both rails boost to 100 V)",
        "params": {
            **{**_HEV_PARAMS, "f_sw": 30e3},
            "ports": {
                "port1": {"kind": "load", "ohms": 100.0},
                "port2": {"kind": "source", "volts": 25.0, "series_ohms": 0.0},
                "port3": {"kind": "capacitor", "farads": 470e-6,
                          "initial_volts": 0.0},
                "port4": {"kind": "load", "ohms": 100.0},
            },
        },
        "control": {
            "type": "open_loop",
            "duties": {"d1": 0.2, "d2": 0.55, "d3": 0.25,
                       "d4": 0.2, "d5": 0.8, "d6": 0.0},
        },
        "settings": {
            "duration": 0.01,
            "steps_per_period": 1000,
            "integrator": "rk4",
            "record_decimation": 10,
        },
        "initial": "steady_state",
        "events": [],
    },
    "fig11": {
        "name": "fig11",
        "description": "bench test, 30 kHz: 100 V source on port 4 bucks "
        "to 75 V on port 1 and 25 V on port 2 into 100 ohm loads",
        "params": {
            **{**_HEV_PARAMS, "f_sw": 30e3},
            "ports": {
                "port1": {"kind": "load", "ohms": 100.0},
                "port2": {"kind": "load", "ohms": 100.0},
                "port3": {"kind": "capacitor", "farads": 470e-6,
                          "initial_volts": 0.0},
                "port4": {"kind": "source", "volts": 100.0, "series_ohms": 0.0},
            },
        },
        "control": {
            "type": "open_loop",
            "duties": {"d1": 0.0, "d2": 0.6666666666666667,
                       "d3": 0.3333333333333333,
                       "d4": 0.25, "d5": 0.75, "d6": 0.0},
        },
        "settings": {
            "duration": 0.01,
            "steps_per_period": 1000,
            "integrator": "rk4",
            "record_decimation": 10,
        },
        "initial": "steady_state",
        "events": [],
    },
}


def preset_names() -> tuple[str, ...]:
    return tuple(sorted(_PRESETS))


def preset_dict(name: str) -> dict:
    """Deep copy of a preset's mapping form (presets are immutable)."""
    if name not in _PRESETS:
        raise ValidationError(
            f"preset: unknown name {name!r} (available: {', '.join(preset_names())})"
        )
    return copy.deepcopy(_PRESETS[name])


def preset_scenario(name: str):
    from .scenario import scenario_from_dict

    return scenario_from_dict(preset_dict(name))


def preset_description(name: str) -> str:
    return preset_dict(name).get("description", "")

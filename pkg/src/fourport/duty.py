"""Steady-state duty-ratio mathematics.

Duty ratios follow the OFF-time convention: ``d_i`` is the fraction of a
switching period during which switch ``S_i`` is OFF. Each leg's three
duties sum to one. In periodic steady state the port gains are

    v2 = d3 * v1        v3 = d6 * v4

and the transfer inductor balances when

    (1 - d1) * v1 == (1 - d4) * v4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Union

import numpy as np

from .errors import Infeasible, WindowTooShort

if TYPE_CHECKING:  # pragma: no cover
    from .simulate import Waveform
    from .topology import ConverterParams

SUM_TOL = 1e-9

#: bootstrap gate drivers cannot produce PWM below/above these duty ratios
DEFAULT_CLAMP = (0.05, 0.95)


@dataclass(frozen=True)
class DutyCommand:
    """Six duty ratios with per-leg sum-to-one constraints."""

    d1: float
    d2: float
    d3: float
    d4: float
    d5: float
    d6: float

    def __post_init__(self):
        for name in ("d1", "d2", "d3", "d4", "d5", "d6"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"duty {name}={v} outside [0, 1]")
        if abs(self.d1 + self.d2 + self.d3 - 1.0) > SUM_TOL:
            raise ValueError("leg-1 duties d1+d2+d3 must sum to 1")
        if abs(self.d4 + self.d5 + self.d6 - 1.0) > SUM_TOL:
            raise ValueError("leg-2 duties d4+d5+d6 must sum to 1")

    @property
    def leg1(self) -> tuple[float, float, float]:
        return (self.d1, self.d2, self.d3)

    @property
    def leg2(self) -> tuple[float, float, float]:
        return (self.d4, self.d5, self.d6)


@dataclass(frozen=True)
class LegSteadyState:
    """Port voltages of a generic three-switch leg in steady state."""

    v_a: float
    v_b: float
    v_c: float


@dataclass(frozen=True)
class PortTargets:
    """Desired steady-state port voltages (non-negative)."""

    v1: float
    v2: float
    v3: float
    v4: float

    def __post_init__(self):
        for name in ("v1", "v2", "v3", "v4"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"target {name}={v} must be finite and >= 0")


class Policy(Enum):
    """How to split the transfer-balance equation between d1 and d4."""

    BOOST_PREFERRED = "boost"
    BUCK_PREFERRED = "buck"


@dataclass(frozen=True)
class FixedD1:
    """Pin d1 and solve d4; used when the rail voltages are nearly equal."""

    value: float = 0.2

    def __post_init__(self):
        if not (0.0 <= self.value < 1.0):
            raise ValueError(f"FixedD1 value {self.value} outside [0, 1)")


DutyPolicy = Union[Policy, FixedD1]


def leg_steady_state(d_a: float, d_b: float, d_c: float, v_c: float) -> LegSteadyState:
    """Steady-state port voltages of one leg from its duty partition."""
    return LegSteadyState(v_a=(d_b + d_c) * v_c, v_b=d_c * v_c, v_c=v_c)


def predict_port_voltages(
    duties: DutyCommand, v1: float, v4: float
) -> tuple[float, float]:
    """Steady-state (v2, v3) implied by the rail voltages and duties."""
    return (duties.d3 * v1, duties.d6 * v4)


def check_transfer_balance(duties: DutyCommand, v1: float, v4: float) -> float:
    """Volt balance residual of the transfer inductor; zero in steady state."""
    return (1.0 - duties.d1) * v1 - (1.0 - duties.d4) * v4


def clamp_duty(
    d: float,
    lo: float = DEFAULT_CLAMP[0],
    hi: float = DEFAULT_CLAMP[1],
    statically_on: bool = False,
) -> float:
    """Clamp a PWM duty ratio into the realizable window.

    A switch held permanently ON needs no PWM edges at all; passing
    ``statically_on=True`` lets ``d == 0`` through unclamped.
    """
    if not (0.0 <= lo < hi <= 1.0):
        raise ValueError(f"invalid clamp window [{lo}, {hi}]")
    if statically_on and d <= 0.0:
        return 0.0
    return min(hi, max(lo, d))


def _in_window(d: float, lo: float, hi: float) -> bool:
    """Realizable as PWM within the window, or static (no PWM needed)."""
    eps = 1e-12
    if d <= eps or d >= 1.0 - eps:
        return True
    return lo - eps <= d <= hi + eps


def _ratio_duty(num: float, den: float, what: str) -> float:
    if num == 0.0:
        return 0.0
    if den == 0.0 or num > den:
        raise Infeasible(f"{what}: target {num} exceeds rail {den}")
    return num / den


def solve_duties(
    targets: PortTargets,
    policy: DutyPolicy = Policy.BUCK_PREFERRED,
    clamp_lo: float = DEFAULT_CLAMP[0],
    clamp_hi: float = DEFAULT_CLAMP[1],
) -> DutyCommand:
    """Invert the steady-state gain relations to a feasible DutyCommand.

    d3 and d6 come from the port gains; d1 and d4 split the transfer
    balance according to the policy. The slack duties d2, d5 absorb the
    remainder of each period (they have no steady-state role).

    Raises:
        Infeasible: if a target exceeds its rail, a leg's duties would
            exceed one, or a PWM duty falls outside the clamp window.
    """
    v1, v2, v3, v4 = targets.v1, targets.v2, targets.v3, targets.v4
    d3 = _ratio_duty(v2, v1, "port-2 gain")
    d6 = _ratio_duty(v3, v4, "port-3 gain")

    if isinstance(policy, FixedD1):
        d1 = policy.value
        if v4 == 0.0:
            raise Infeasible("transfer balance: v4 = 0 with fixed d1 < 1")
        d4 = 1.0 - (1.0 - d1) * v1 / v4
        if d4 < 0.0:
            raise Infeasible(
                f"transfer balance: fixed d1={d1} needs d4={d4:.4f} < 0"
            )
    elif (policy is Policy.BOOST_PREFERRED and v1 <= v4) or (
        policy is Policy.BUCK_PREFERRED and v1 < v4
    ):
        if v4 == 0.0:
            raise Infeasible("transfer balance: both rails are zero")
        d1 = 0.0
        d4 = 1.0 - v1 / v4
    else:
        if v1 == 0.0:
            raise Infeasible("transfer balance: both rails are zero")
        d4 = 0.0
        d1 = 1.0 - v4 / v1
        if d1 < 0.0:
            raise Infeasible("transfer balance: v4 exceeds v1 in buck split")

    d2 = 1.0 - d1 - d3
    d5 = 1.0 - d4 - d6
    if d2 < -SUM_TOL:
        raise Infeasible(f"leg 1 over-committed: d1 + d3 = {d1 + d3:.6f} > 1")
    if d5 < -SUM_TOL:
        raise Infeasible(f"leg 2 over-committed: d4 + d6 = {d4 + d6:.6f} > 1")
    d2, d5 = max(d2, 0.0), max(d5, 0.0)

    for name, d in (("d1", d1), ("d2", d2), ("d3", d3),
                    ("d4", d4), ("d5", d5), ("d6", d6)):
        if not _in_window(d, clamp_lo, clamp_hi):
            raise Infeasible(
                f"{name}={d:.4f} outside the realizable window "
                f"[{clamp_lo}, {clamp_hi}]"
            )
    return DutyCommand(d1, d2, d3, d4, d5, d6)


def flux_balance_residuals(waveform: "Waveform", params: "ConverterParams") -> np.ndarray:
    """Volt-seconds accumulated by each inductor over the final whole period.

    Computed as ``L * (i(t_end) - i(t_end - T))``, which is exact for any
    integrator and immune to sampling phase. Zero in periodic steady state.
    """
    t = waveform.times
    t_s = params.period
    if t[-1] - t[0] < t_s * (1.0 - 1e-9):
        raise WindowTooShort(
            f"waveform spans {t[-1] - t[0]:.3e} s < one period {t_s:.3e} s"
        )
    t_end = t[-1]
    res = np.empty(3)
    for j, l in enumerate(params.inductances):
        i_end = waveform.states[-1, j]
        i_start = float(np.interp(t_end - t_s, t, waveform.states[:, j]))
        res[j] = l * (i_end - i_start)
    return res

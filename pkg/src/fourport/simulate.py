"""Time-domain engine for the switched converter.

Each switching period is partitioned per leg into mode A, then B, then C
segments sized by the duty command (zero-length segments omitted). The two
legs are phase-aligned at the period start; merging their boundaries gives
a short list of constant-topology intervals, each governed by one
``LinearDynamics``.

Within a constant-topology interval both integrators reduce to an affine
update ``x <- P x + p`` with a precomputed propagator:

* ``EXACT_PIECEWISE`` uses the matrix exponential of the augmented
  ``[[A, b], [0, 0]]`` system, which is exact and needs no inversion of A.
* ``FIXED_STEP_RK4`` uses the classic fourth-order one-step map, which for
  a linear constant-coefficient system equals the degree-4 Taylor
  polynomial of the same augmented matrix.

Integration steps never straddle a segment boundary: each segment is cut
into an integer number of sub-steps no longer than the nominal step
``T_s / steps_per_period``. Duty commands latch at period boundaries.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg

from .duty import DutyCommand
from .errors import ConfigError, Diverged, NumericalFailure, WindowTooShort
from .topology import (
    N_STATES,
    ConverterParams,
    LegMode,
    LinearDynamics,
    StateVector,
    SwitchConfig,
    clamp_pinned,
    derive_dynamics,
    initial_state,
    port_powers,
)

#: segments shorter than this fraction of a period are dropped
MIN_SEGMENT_FRACTION = 1e-12


class Integrator(Enum):
    FIXED_STEP_RK4 = "rk4"
    EXACT_PIECEWISE = "exact"


@dataclass(frozen=True)
class SimulationSettings:
    duration: float
    steps_per_period: int = 1000
    integrator: Integrator = Integrator.FIXED_STEP_RK4
    record_decimation: int = 10

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("SimulationSettings.duration must be > 0")
        if self.steps_per_period < 100:
            raise ConfigError("SimulationSettings.steps_per_period must be >= 100")
        if self.record_decimation < 1:
            raise ConfigError("SimulationSettings.record_decimation must be >= 1")


@dataclass(frozen=True)
class ModeSchedule:
    """Per-leg ordered (time offset, mode) boundaries within one period."""

    leg1: tuple[tuple[float, LegMode], ...]
    leg2: tuple[tuple[float, LegMode], ...]
    period: float


def build_schedule(duties: DutyCommand, f_sw: float) -> ModeSchedule:
    """Partition one switching period into leg-mode segments (A, B, C order)."""
    if f_sw <= 0:
        raise ConfigError("f_sw must be > 0")
    t_s = 1.0 / f_sw
    legs = []
    for trio in (duties.leg1, duties.leg2):
        bounds = []
        offset = 0.0
        for frac, mode in zip(trio, (LegMode.A, LegMode.B, LegMode.C)):
            if frac > MIN_SEGMENT_FRACTION:
                bounds.append((offset, mode))
                offset += frac * t_s
        legs.append(tuple(bounds))
    return ModeSchedule(leg1=legs[0], leg2=legs[1], period=t_s)


def merged_segments(
    schedule: ModeSchedule,
) -> tuple[tuple[float, float, SwitchConfig], ...]:
    """Constant-configuration intervals (start, end, config) over one period."""
    t_s = schedule.period
    cuts = sorted({0.0, t_s}
                  | {o for o, _ in schedule.leg1}
                  | {o for o, _ in schedule.leg2})
    # drop cuts closer than the minimum segment width
    deduped = [cuts[0]]
    for c in cuts[1:]:
        if c - deduped[-1] > MIN_SEGMENT_FRACTION * t_s:
            deduped.append(c)
    deduped[-1] = t_s

    def active(leg: tuple[tuple[float, LegMode], ...], tau: float) -> LegMode:
        offsets = [o for o, _ in leg]
        return leg[bisect.bisect_right(offsets, tau) - 1][1]

    out = []
    for a, b in zip(deduped[:-1], deduped[1:]):
        mid = 0.5 * (a + b)
        out.append((a, b, SwitchConfig(active(schedule.leg1, mid),
                                       active(schedule.leg2, mid))))
    return tuple(out)


# --- propagators ------------------------------------------------------------


def _augmented(dyn: LinearDynamics, dt: float) -> np.ndarray:
    m = np.zeros((N_STATES + 1, N_STATES + 1))
    m[:N_STATES, :N_STATES] = dyn.a_matrix * dt
    m[:N_STATES, N_STATES] = dyn.b_vector * dt
    return m


def segment_propagator(
    dyn: LinearDynamics, dt: float, integrator: Integrator
) -> np.ndarray:
    """(N+1)x(N+1) affine map over one sub-step of a constant segment."""
    m = _augmented(dyn, dt)
    if integrator is Integrator.EXACT_PIECEWISE:
        p = scipy.linalg.expm(m)
        if not np.all(np.isfinite(p)):
            raise NumericalFailure(
                f"matrix exponential produced non-finite entries at dt={dt:.3e}"
            )
        return p
    # classic RK4 one-step map of the augmented linear system
    eye = np.eye(N_STATES + 1)
    p = eye + m @ (eye + m @ (eye + m @ (eye + m / 4.0) / 3.0) / 2.0)
    return p


def apply_propagator(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    return p[:N_STATES, :N_STATES] @ x + p[:N_STATES, N_STATES]


def exact_segment_solution(
    dyn: LinearDynamics, x0: StateVector, dt: float
) -> StateVector:
    """Exact state after ``dt`` seconds of one constant configuration.

    Evaluates the matrix exponential of the augmented system, so a
    singular A needs no special casing.
    """
    if dt <= 0:
        raise ConfigError("dt must be > 0")
    p = segment_propagator(dyn, dt, Integrator.EXACT_PIECEWISE)
    return StateVector.from_array(apply_propagator(p, x0.to_array()))


# --- waveform ---------------------------------------------------------------

_MODE_ORDER = (LegMode.A, LegMode.B, LegMode.C)


@dataclass
class Waveform:
    """Recorded simulation output.

    ``config_codes`` holds the dense SwitchConfig index active over the
    interval ending at each sample (the first sample carries the first
    segment's configuration). ``port_power`` is the instantaneous power
    each port element sources into the converter.
    """

    times: np.ndarray
    states: np.ndarray
    config_codes: np.ndarray
    port_power: np.ndarray
    duty_log: list = field(default_factory=list)
    step_log: Optional[list] = None

    def __post_init__(self):
        if len(self.times) < 2:
            raise ValueError("waveform needs at least two samples")
        if not np.all(np.diff(self.times) > 0):
            raise ValueError("waveform timestamps must be strictly increasing")
        if not (np.all(np.isfinite(self.states))
                and np.all(np.isfinite(self.port_power))):
            raise ValueError("waveform contains non-finite entries")

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])

    def leg_modes(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample leg mode letters ('A'/'B'/'C') for both legs."""
        letters = np.array([m.value for m in _MODE_ORDER])
        return letters[self.config_codes // 3], letters[self.config_codes % 3]

    def config_at(self, i: int) -> SwitchConfig:
        return SwitchConfig.from_code(int(self.config_codes[i]))


DutySource = Union[DutyCommand, Callable[[float, StateVector], DutyCommand]]


def simulate(
    params: ConverterParams,
    duties_source: DutySource,
    settings: SimulationSettings,
    initial: Optional[StateVector] = None,
    initial_measured: Optional[StateVector] = None,
    collect_step_log: bool = False,
) -> Waveform:
    """Integrate the switched dynamics and record the waveform.

    ``duties_source`` is either a constant DutyCommand or a callback
    ``f(t, measured) -> DutyCommand`` queried once per switching period;
    ``measured`` is the previous period's average state, which models the
    averaging in a sampled controller's acquisition chain. The first
    period sees ``initial_measured`` (defaulting to the initial state,
    whose ripple-phase offset a real controller would not mistake for a
    mean; warm starts should pass the operating-point average).

    Raises:
        Diverged: on the first non-finite state entry, with its time.
    """
    t_s = params.period
    n_periods = max(1, math.ceil(settings.duration / t_s - 1e-9))
    h_nominal = t_s / settings.steps_per_period
    decim = settings.record_decimation

    if initial is None:
        initial = initial_state(params)
    x = clamp_pinned(params, initial.to_array())

    constant = isinstance(duties_source, DutyCommand)
    segments_cache = None
    prop_cache: dict = {}
    block_cache: dict = {}

    rec_t = [0.0]
    rec_x = [x.copy()]
    rec_c = [0]
    duty_log: list = []
    step_log: Optional[list] = [] if collect_step_log else None

    mean_prev = (initial_measured if initial_measured is not None
                 else StateVector.from_array(x))
    global_step = 0

    for k in range(n_periods):
        t0 = k * t_s
        if constant:
            duties = duties_source
            if segments_cache is None:
                segments_cache = merged_segments(build_schedule(duties, params.f_sw))
            segments = segments_cache
        else:
            duties = duties_source(t0, mean_prev)
            segments = merged_segments(build_schedule(duties, params.f_sw))
        duty_log.append((t0, duties))
        if len(block_cache) > 20000:  # closed-loop duty drift never repeats keys
            prop_cache.clear()
            block_cache.clear()

        if k == 0:
            rec_c[0] = segments[0][2].code

        acc = np.zeros(N_STATES)  # trapezoid accumulator for the period mean
        t_prev_local = 0.0
        x_prev = x

        for seg_start, seg_end, config in segments:
            tau = seg_end - seg_start
            n_sub = max(1, math.ceil(tau / h_nominal - 1e-9))
            h_sub = tau / n_sub
            key = (config.code, h_sub, settings.integrator)
            p_sub = prop_cache.get(key)
            if p_sub is None:
                p_sub = segment_propagator(
                    derive_dynamics(config, params), h_sub, settings.integrator
                )
                prop_cache[key] = p_sub

            j = 0
            while j < n_sub:
                k_block = decim - (global_step % decim)
                k_block = min(k_block, n_sub - j)
                bkey = key + (k_block,)
                p_blk = block_cache.get(bkey)
                if p_blk is None:
                    p_blk = np.linalg.matrix_power(p_sub, k_block)
                    block_cache[bkey] = p_blk
                x_new = apply_propagator(p_blk, x)
                j += k_block
                global_step += k_block
                t_local = seg_start + j * h_sub if j < n_sub else seg_end
                t_now = t0 + t_local

                if not np.all(np.isfinite(x_new)):
                    raise Diverged(
                        f"non-finite state at t = {t_now:.6e} s "
                        f"(config {config.leg1.value}/{config.leg2.value})",
                        time=t_now,
                    )
                if step_log is not None:
                    step_log.append((t0 + t_prev_local, t_now, config.code))

                acc += 0.5 * (x_prev + x_new) * (t_local - t_prev_local)
                x_prev = x_new
                t_prev_local = t_local
                x = x_new

                if global_step % decim == 0 or j == n_sub:
                    rec_t.append(t_now)
                    rec_x.append(x.copy())
                    rec_c.append(config.code)

        mean_prev = StateVector.from_array(acc / t_s)

    times = np.array(rec_t)
    states = np.array(rec_x)
    codes = np.array(rec_c, dtype=np.int8)

    # duplicate timestamps can appear when a record point coincides with a
    # segment end; keep the last sample of each instant
    keep = np.ones(len(times), dtype=bool)
    keep[:-1] = np.diff(times) > 0
    times, states, codes = times[keep], states[keep], codes[keep]

    power = np.empty((len(times), 4))
    for code in np.unique(codes):
        mask = codes == code
        power[mask] = port_powers(params, SwitchConfig.from_code(int(code)),
                                  states[mask])

    return Waveform(
        times=times,
        states=states,
        config_codes=codes,
        port_power=power,
        duty_log=duty_log,
        step_log=step_log,
    )


def period_affine_maps(
    params: ConverterParams, duties: DutyCommand
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact one-period maps for state and state integral.

    Returns ``(p_aug, w_mat, w_vec)`` where the augmented ``p_aug`` maps
    the period-start state to the period-end state and

        int_0^T x(t) dt == w_mat @ x0 + w_vec.

    The integrals come from the block-triangular matrix exponentials
    ``exp([[A, I], [0, 0]] t)`` and ``exp([[A, b, 0], [0, 0, 1], [0, 0, 0]] t)``
    so singular A needs no special handling.
    """
    n = N_STATES
    segments = merged_segments(build_schedule(duties, params.f_sw))
    p = np.eye(n + 1)
    w_mat = np.zeros((n, n))
    w_vec = np.zeros(n)
    for seg_start, seg_end, config in segments:
        tau = seg_end - seg_start
        dyn = derive_dynamics(config, params)
        m2 = np.zeros((2 * n, 2 * n))
        m2[:n, :n] = dyn.a_matrix * tau
        m2[:n, n:] = np.eye(n) * tau
        v_int = scipy.linalg.expm(m2)[:n, n:]  # int_0^tau exp(A s) ds
        m3 = np.zeros((n + 2, n + 2))
        m3[:n, :n] = dyn.a_matrix * tau
        m3[:n, n] = dyn.b_vector * tau
        m3[n, n + 1] = tau
        u_int = scipy.linalg.expm(m3)[:n, n + 1]  # nested integral of b term
        w_mat += v_int @ p[:n, :n]
        w_vec += v_int @ p[:n, n] + u_int
        p = segment_propagator(dyn, tau, Integrator.EXACT_PIECEWISE) @ p
    return p, w_mat, w_vec


def periodic_steady_state(
    params: ConverterParams, duties: DutyCommand
) -> StateVector:
    """State on the exact periodic orbit for a constant duty command.

    Composes the exact segment propagators over one period into an affine
    map ``x -> Phi x + psi`` and solves ``x = Phi x + psi``. Pinned states
    keep their source values; directions in which the orbit is not unique
    (undamped, marginal) resolve to the minimum-norm solution.
    """
    p, _, _ = period_affine_maps(params, duties)
    phi = p[:N_STATES, :N_STATES]
    psi = p[:N_STATES, N_STATES]

    pinned = params.pinned_voltages()
    free = [i for i in range(N_STATES) if i not in pinned]
    x = np.zeros(N_STATES)
    for i, v in pinned.items():
        x[i] = v
    a_ff = np.eye(len(free)) - phi[np.ix_(free, free)]
    rhs = psi[free] + phi[np.ix_(free, list(pinned))] @ x[list(pinned)]
    sol, *_ = np.linalg.lstsq(a_ff, rhs, rcond=None)
    x[free] = sol
    return StateVector.from_array(x)


# --- steady-state measurement ------------------------------------------------


@dataclass(frozen=True)
class SteadyStateReport:
    """Per-period averages over the final measurement window."""

    mean_state: StateVector
    mean_port_power: np.ndarray
    periodicity_error: np.ndarray
    thresholds: np.ndarray
    settled: bool
    window_start: float
    window_end: float
    n_periods: int


def _window_mean(times, values, t_lo, t_hi):
    """Trapezoid mean of possibly non-uniform samples over [t_lo, t_hi]."""
    i_lo = np.searchsorted(times, t_lo, side="left")
    i_hi = np.searchsorted(times, t_hi, side="right")
    t = times[i_lo:i_hi]
    v = values[i_lo:i_hi]
    if len(t) == 0 or t[0] > t_lo + 1e-15:
        v0 = np.array([np.interp(t_lo, times, values[:, j])
                       for j in range(values.shape[1])])
        t = np.concatenate([[t_lo], t])
        v = np.vstack([v0, v])
    if t[-1] < t_hi - 1e-15:
        v1 = np.array([np.interp(t_hi, times, values[:, j])
                       for j in range(values.shape[1])])
        t = np.concatenate([t, [t_hi]])
        v = np.vstack([v, v1])
    return np.trapezoid(v, t, axis=0) / (t_hi - t_lo)


def measure_steady_state(
    waveform: Waveform,
    f_sw: float,
    n_periods: int = 5,
    rel_tol: float = 0.01,
    abs_floor_current: float = 0.01,
    abs_floor_voltage: float = 0.01,
) -> SteadyStateReport:
    """Average the final ``n_periods`` whole periods and check settling.

    The periodicity error per state is ``max |x(t) - x(t - T)|`` over the
    window; the run is flagged settled when every state's error is below
    ``rel_tol`` of its mean magnitude (with 10 mA / 10 mV default floors).

    Raises:
        WindowTooShort: if the waveform covers fewer than ``2 * n_periods``
            switching periods.
    """
    if n_periods < 1:
        raise ConfigError("n_periods must be >= 1")
    t_s = 1.0 / f_sw
    t = waveform.times
    if t[-1] - t[0] < 2 * n_periods * t_s * (1 - 1e-9):
        raise WindowTooShort(
            f"waveform spans {(t[-1] - t[0]) / t_s:.2f} periods; "
            f"need at least {2 * n_periods}"
        )
    t_hi = float(t[-1])
    t_lo = t_hi - n_periods * t_s

    mean_state = _window_mean(t, waveform.states, t_lo, t_hi)
    mean_power = _window_mean(t, waveform.port_power, t_lo, t_hi)

    in_win = t >= t_lo - 1e-15
    err = np.empty(N_STATES)
    for j in range(N_STATES):
        prev = np.interp(t[in_win] - t_s, t, waveform.states[:, j])
        err[j] = np.max(np.abs(waveform.states[in_win, j] - prev))

    floors = np.array([abs_floor_current] * 3 + [abs_floor_voltage] * 4)
    thresholds = np.maximum(rel_tol * np.abs(mean_state), floors)

    return SteadyStateReport(
        mean_state=StateVector.from_array(mean_state),
        mean_port_power=mean_power,
        periodicity_error=err,
        thresholds=thresholds,
        settled=bool(np.all(err <= thresholds)),
        window_start=t_lo,
        window_end=t_hi,
        n_periods=n_periods,
    )

"""Four-port bidirectional DC-DC converter: simulation and analysis."""

from .control import (
    ControlGains,
    ControlSetpoints,
    HevController,
    HighPower,
    LowPower,
    MediumPower,
    PiController,
    RegenerativeBraking,
    control_period,
    default_gains,
    mode_setpoints,
    pi_step,
)
from .duty import (
    DutyCommand,
    FixedD1,
    LegSteadyState,
    Policy,
    PortTargets,
    check_transfer_balance,
    clamp_duty,
    flux_balance_residuals,
    leg_steady_state,
    predict_port_voltages,
    solve_duties,
)
from .errors import (
    ConfigError,
    Diverged,
    FourportError,
    Infeasible,
    NotSettled,
    NumericalFailure,
    ParseError,
    SetpointInfeasible,
    ValidationError,
    WindowTooShort,
)
from .presets import preset_names, preset_scenario
from .scenario import (
    ClosedLoopControl,
    Event,
    OpenLoopControl,
    PowerLedger,
    Scenario,
    build_power_ledger,
    build_report,
    load_scenario,
    load_waveform_csv,
    render_report,
    run_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    write_outputs,
    write_waveform_csv,
)
from .simulate import (
    Integrator,
    ModeSchedule,
    SimulationSettings,
    SteadyStateReport,
    Waveform,
    build_schedule,
    exact_segment_solution,
    measure_steady_state,
    merged_segments,
    periodic_steady_state,
    simulate,
)
from .topology import (
    CapacitorOnly,
    ConverterParams,
    CurrentSink,
    LegMode,
    LinearDynamics,
    PortModel,
    ResistiveLoad,
    StateVector,
    SwitchConfig,
    VoltageSource,
    derive_dynamics,
    initial_state,
    leg_inductor_voltages,
    port_powers,
    stored_energy,
)

__version__ = "0.1.0"

"""Exception hierarchy shared across the package."""


class FourportError(Exception):
    """Base class for all package errors."""


class ConfigError(FourportError):
    """Invalid component values or simulation settings."""


class Infeasible(FourportError):
    """No duty-ratio assignment can realize the requested targets."""


class SetpointInfeasible(Infeasible):
    """Controller feedforward alone would violate duty feasibility."""


class WindowTooShort(FourportError):
    """Waveform does not span enough switching periods for the analysis."""


class Diverged(FourportError):
    """Simulation state became non-finite.

    Attributes:
        time: simulation time (s) at which the first non-finite entry
            was detected.
    """

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


class NumericalFailure(FourportError):
    """A matrix-function evaluation did not produce finite results."""


class NotSettled(FourportError):
    """Waveform is not in periodic steady state within tolerance."""


class ParseError(FourportError):
    """Scenario file is not syntactically valid."""


class ValidationError(FourportError):
    """Scenario contents violate an invariant; message names the key."""

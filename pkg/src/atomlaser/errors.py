"""Exception hierarchy shared by the model modules and the CLI.

Each class carries the process exit code the CLI reports for it.
"""


class AtomLaserError(Exception):
    exit_code = 1
    kind = "error"


class ConfigError(AtomLaserError, ValueError):
    """Invalid or incomplete experiment configuration."""

    exit_code = 2
    kind = "config"


class NumericalGuardError(AtomLaserError):
    """A numerical precondition (grid size, step bound, coverage) is violated.

    ``guard`` names the violated guard so that callers can report it.
    """

    exit_code = 3
    kind = "numerical-guard"

    def __init__(self, guard, message):
        super().__init__(f"[{guard}] {message}")
        self.guard = guard


class CoverageError(NumericalGuardError):
    def __init__(self, message):
        super().__init__("coverage", message)


class GridSizeError(NumericalGuardError):
    def __init__(self, message):
        super().__init__("grid-size", message)


class RevivalError(NumericalGuardError):
    def __init__(self, message):
        super().__init__("revival", message)


class StepSizeError(NumericalGuardError):
    def __init__(self, message):
        super().__init__("step-size", message)


class ResonanceError(NumericalGuardError, ValueError):
    """No propagating beam state satisfies the resonance condition."""

    def __init__(self, message):
        super().__init__("resonance", message)


class DivergenceError(AtomLaserError):
    """The integration lost norm accounting or failed to converge."""

    exit_code = 4
    kind = "divergence"


class MeasurementError(AtomLaserError, ValueError):
    """A spectrum could not be measured with the requested estimator."""


class ClippedSpectrumError(MeasurementError):
    pass


class MultiPeakError(MeasurementError):
    pass


class AlignmentError(AtomLaserError):
    """Two runs cannot be compared point by point."""

    exit_code = 2
    kind = "alignment"

"""Exception hierarchy shared by all modules."""


class ShortPulseError(Exception):
    """Base class; carries the module name for CLI reporting."""

    module = "shortpulse"

    def __init__(self, message: str = "", *, module: str | None = None):
        super().__init__(message)
        if module is not None:
            self.module = module

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class InputError(ShortPulseError, ValueError):
    module = "nullforms"


class ReductionError(ShortPulseError, ValueError):
    module = "nullforms"


class PreconditionError(ShortPulseError, ValueError):
    module = "nullforms"


class ConfigError(ShortPulseError, ValueError):
    module = "studyctl"


class ResolutionError(ShortPulseError, ValueError):
    module = "pulsedata"


class GridError(ShortPulseError, ValueError):
    module = "nullgrid"


class SolverError(ShortPulseError, RuntimeError):
    module = "solver"


class DiagnosticError(ShortPulseError, ValueError):
    module = "diagnostics"


class PartialFluxError(DiagnosticError):
    pass


class FitError(DiagnosticError):
    pass

"""
Error hierarchy for the homodyne detector twin

Every error carries the exit code the CLI reports for it.
"""


class HomodyneError(Exception):
    """Base class for all expected failures"""

    exit_code = 1


class ConfigError(HomodyneError):
    """Invalid configuration, preset, plan or synthesis settings"""

    exit_code = 3


class ParseError(HomodyneError):
    """A text file could not be parsed"""

    exit_code = 5


class InsufficientData(HomodyneError):
    """Not enough samples or points for the requested estimate"""

    exit_code = 6


class BandOutOfRange(HomodyneError):
    """Requested frequency band lies outside the spectrum support"""

    exit_code = 6


class DegenerateInput(HomodyneError):
    """Regression input cannot determine a slope"""

    exit_code = 6


class InconsistentEfficiencies(HomodyneError):
    """Total efficiency exceeds the quantum efficiency (coupling > 1)"""

    exit_code = 6


class FitDiverged(HomodyneError):
    """Nonlinear least squares failed from every starting point"""

    exit_code = 6

    def __init__(self, message: str, diagnostics: dict = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NoCrossing(HomodyneError):
    """Response never falls to half power"""

    exit_code = 6


class DomainError(HomodyneError):
    """Argument outside the domain of a conversion or efficiency formula"""

    exit_code = 8


class SaturationError(HomodyneError):
    """Output voltage reaches the op-amp output swing"""

    exit_code = 8


class ReportMismatch(HomodyneError):
    """Two reports differ beyond tolerance"""

    exit_code = 7


IO_EXIT_CODE = 4
USAGE_EXIT_CODE = 2

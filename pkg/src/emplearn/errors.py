"""Exception hierarchy shared by every stage of the pipeline.

Each class carries the process exit code the CLI maps it to.
"""


class EmplearnError(Exception):
    exit_code = 1


class InvalidParameterError(EmplearnError, ValueError):
    """Parameter outside its admissible domain (also used for config errors)."""

    exit_code = 2


class RangeError(InvalidParameterError, IndexError):
    """Experience index outside the modelled horizon."""


class ConfigError(InvalidParameterError):
    exit_code = 2


class UnsupportedConfigurationError(InvalidParameterError):
    exit_code = 2


class DegenerateModelError(EmplearnError):
    exit_code = 3


class RelevanceError(EmplearnError):
    """Instrument has no (or no estimable) first stage."""

    exit_code = 3


class WeakInstrumentError(RelevanceError):
    pass


class IdentificationError(EmplearnError):
    exit_code = 3


class RankError(IdentificationError):
    pass


class AssumptionRejectedError(IdentificationError):
    pass


class NumericalError(EmplearnError):
    exit_code = 4


class ConvergenceError(NumericalError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class NoSolutionError(NumericalError):
    pass

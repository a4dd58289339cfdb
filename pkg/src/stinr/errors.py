"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class StinrError(Exception):
    """Base class for all package errors."""


class ConfigError(StinrError):
    """Invalid configuration: bad values, unknown keys, dimension mismatches."""


class DataError(StinrError):
    """Malformed input data: bad CSV, bad model file, empty masks."""


class FormatError(DataError):
    """Corrupted or unsupported serialized model file."""


class NumericalError(StinrError):
    """A numerical procedure failed: divergence or no convergence."""


class TrainingDiverged(NumericalError):
    """Training loss became non-finite or blew past the divergence guard."""


class ConvergenceError(NumericalError):
    """An iterative solver did not converge within its iteration cap."""

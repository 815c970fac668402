"""Exception taxonomy shared by the library and the CLI.

Each error class carries the process exit code the CLI maps it to, so
scripted callers can distinguish input, convergence, singularity and
configuration failures.
"""


class HetfacError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InputError(HetfacError):
    """Invalid data: malformed CSV cells, zero-variance columns, bad shapes."""

    exit_code = 2


class ConvergenceError(HetfacError):
    """An iterative fit (or too many fits in a sweep) failed to converge."""

    exit_code = 3


class SingularMatrixError(HetfacError):
    """A matrix that must be inverted is singular or numerically so."""

    exit_code = 4


class NumericalError(HetfacError):
    """A numeric result left its mathematically valid range."""

    exit_code = 4


class ConfigError(HetfacError):
    """Unusable configuration, e.g. an unattainable significance level."""

    exit_code = 5

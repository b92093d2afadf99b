"""Exception types shared across the package.

The CLI maps these onto process exit codes (see ``cli.EXIT_CODES``).
"""


class DipolarError(Exception):
    """Base class for all package errors."""


class DomainError(DipolarError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(DipolarError, ValueError):
    """Invalid run configuration, lattice size, or command-line usage."""


class NumericalError(DipolarError, RuntimeError):
    """A computation produced an unusable result (e.g. MPE negative-weight overrun)."""


class ConvergenceError(NumericalError):
    """An iterative solver failed to converge.

    ``residual`` holds the last fixed-point residual.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class CheckpointError(DipolarError, OSError):
    """A checkpoint could not be read, written, or does not match the run."""

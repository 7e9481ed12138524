"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes (see cli.py); library users catch
them directly.
"""


class NfpeError(Exception):
    """Base class for package errors."""


class ConfigError(NfpeError):
    """Malformed or invalid run configuration (CLI exit 64)."""


class MissingInputError(NfpeError):
    """A referenced input file or trajectory does not exist (CLI exit 66)."""


class SolverError(NfpeError):
    """Iterative solve failed to converge (CLI exit 1).

    Carries the last relative residual so callers can tell "step size too
    large" apart from genuine blow-up.
    """

    def __init__(self, message: str, residual: float | None = None,
                 iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class EntropyUnavailable(NfpeError):
    """The configured drift/kernel pair admits no known entropy potentials."""

"""Exception hierarchy shared by all modules.

The CLI maps :class:`InputError` subclasses to exit code 2 and
:class:`NumericalError` subclasses to exit code 3.
"""


class MProbeError(Exception):
    """Base class for all package errors."""


class InputError(MProbeError):
    pass


class NumericalError(MProbeError):
    pass


class ConfigurationError(InputError):
    pass


class DomainError(InputError):
    pass


class ValidationError(InputError):
    """Raised by :func:`mprobe.model.validate` with every violated invariant.

    ``errors`` is a list of ``(field_path, message)`` pairs.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        msg = "; ".join(f"{path}: {what}" for path, what in self.errors)
        super().__init__(msg or "invalid input")


class PoleError(NumericalError):
    """The requested quantity has a pole (eigenvalue) at ``z``."""

    def __init__(self, message, z=None):
        super().__init__(message)
        self.z = z


class ConvergenceError(NumericalError):
    pass

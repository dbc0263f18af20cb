"""Exception hierarchy; the CLI maps these onto exit codes."""


class RwtreeError(Exception):
    """Base class for package errors."""


class DomainError(RwtreeError, ValueError):
    """Argument outside the domain of a function."""


class CalibrationError(RwtreeError):
    """Boundary-case calibration failed; ``residual`` holds the last state."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ResourceError(RwtreeError):
    """Arena, enumeration or step budget exhausted.

    ``partial`` carries whatever was computed before the budget ran out.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class EfficiencyError(RwtreeError):
    """A rejection sampler's acceptance rate is too low to be useful."""


class ConfigError(RwtreeError):
    """Invalid configuration; ``path`` names the offending key."""

    def __init__(self, message, path=""):
        prefixed = not path or message.startswith(path)
        super().__init__(message if prefixed else f"{path}: {message}")
        self.path = path


class ConvergenceWarning(UserWarning):
    """An estimator did not reach its plateau/stability criterion."""

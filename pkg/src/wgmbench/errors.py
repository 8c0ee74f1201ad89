"""Exception hierarchy shared by all modules."""


class WGMError(Exception):
    """Base class for every error raised by wgmbench."""

    code = "E_INTERNAL"


class DomainError(WGMError, ValueError):
    """An input lies outside the domain of a physical relation."""

    code = "E_DOMAIN"


class CapabilityError(WGMError):
    """The request is valid physics but outside what the implementation supports."""

    code = "E_CAPABILITY"


class SolverError(WGMError, RuntimeError):
    """A root or eigenvalue search failed to produce a result."""

    code = "E_SOLVER"


class FitError(WGMError, RuntimeError):
    """Nonlinear least squares did not converge or the data cannot support the model."""

    code = "E_FIT"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class CalibrationError(WGMError, RuntimeError):
    code = "E_CALIBRATION"


class ScenarioError(WGMError, ValueError):
    """Scenario configuration failed validation."""

    code = "E_VALIDATION"


class SchemaError(WGMError, ValueError):
    """A data file does not match the documented schema."""

    code = "E_SCHEMA"

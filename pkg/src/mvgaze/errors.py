"""Exception types shared across the package."""


class GazeError(Exception):
    """Base class. ``reason`` is a short machine-readable tag."""

    reason = "error"

    def __init__(self, message="", reason=None):
        if reason is not None:
            self.reason = reason
        super().__init__(message or self.reason)


class ProjectionError(GazeError):
    """Point cannot be imaged (``behind`` or ``degenerate``)."""


class NoReflectionError(GazeError):
    reason = "no_reflection"


class NoRefractionError(GazeError):
    reason = "no_refraction"


class DegenerateConfigurationError(GazeError):
    reason = "degenerate_configuration"


class PointAtInfinityError(GazeError):
    reason = "point_at_infinity"


class GimbalDegenerateError(GazeError):
    reason = "gimbal_degenerate"


class YawUndefinedError(GazeError):
    reason = "yaw_undefined"


class UnavailableError(GazeError):
    reason = "unavailable"


class CalibrationError(GazeError):
    """Raised for ``ill_conditioned``, ``insufficient_data``,
    ``uncalibratable_point`` and ``uncalibratable``."""


class ConfigError(GazeError):
    reason = "invalid_config"

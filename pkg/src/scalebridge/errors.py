"""Exception types raised across the package."""


class ScaleBridgeError(Exception):
    """Base class for package errors."""


class ConfigurationError(ScaleBridgeError, ValueError):
    pass


class ShapeError(ScaleBridgeError, ValueError):
    pass


class NonFiniteLossError(ScaleBridgeError, FloatingPointError):
    pass


class InvariantViolation(ScaleBridgeError, RuntimeError):
    """An internal invariant failed (indicates a bug, not bad input)."""


class SceneGenerationError(ScaleBridgeError, RuntimeError):
    pass


class DatasetParseError(ScaleBridgeError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

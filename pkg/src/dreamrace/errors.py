"""Exception types shared across the package."""


class DreamraceError(Exception):
    pass


class ShapeError(DreamraceError, ValueError):
    """Operand shapes do not conform."""


class NumericError(DreamraceError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class UsageError(DreamraceError, RuntimeError):
    """An API was called in a state that does not allow it."""


class ConfigurationError(DreamraceError, ValueError):
    pass


class TrackParseError(DreamraceError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(DreamraceError, ValueError):
    pass


class BufferUnavailableError(DreamraceError, LookupError):
    """Replay buffer has nothing to sample."""


class CheckpointVersionError(DreamraceError, ValueError):
    pass


class TrajectoryParseError(DreamraceError, ValueError):
    pass

"""Exception types raised across the package."""


class GeometryError(RuntimeError):
    """Point location or line tracing failed."""


class DomainExitError(GeometryError):
    """A trace or kernel footprint left a non-periodic domain."""


class MeshFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        super().__init__(message)


class UnsupportedIndicatorError(ValueError):
    pass

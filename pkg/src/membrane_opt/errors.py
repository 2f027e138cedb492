"""Exception hierarchy."""


class MembraneError(Exception):
    """Base class for all package errors."""


class MeshError(MembraneError, ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SolverError(MembraneError, RuntimeError):
    """Numerical failure; ``residual`` holds the last measured residual, if any."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual

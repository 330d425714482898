"""Exception types raised across the package."""


class HexmgError(Exception):
    """Base class for package errors."""


class DegenerateElementError(HexmgError, ValueError):
    def __init__(self, msg, element=None, point=None):
        super().__init__(msg)
        self.element = element
        self.point = point


class InvertedElementError(HexmgError, ArithmeticError):
    """Raised when ``J = det(F) <= 0`` at some quadrature point."""

    def __init__(self, msg, element=None, point=None):
        super().__init__(msg)
        self.element = element
        self.point = point


class IncompressibleUnsupportedError(HexmgError, ValueError):
    pass


class StateNotInitializedError(HexmgError, RuntimeError):
    pass


class IndefiniteOperatorError(HexmgError, ArithmeticError):
    pass


class InvalidSmootherError(HexmgError, ValueError):
    pass


class NotSPDError(HexmgError, ArithmeticError):
    def __init__(self, msg, level=None):
        super().__init__(msg)
        self.level = level


class LineSearchError(HexmgError, ArithmeticError):
    pass


class SolverError(HexmgError, RuntimeError):
    """Nonlinear solve failure; ``phase`` names where it happened."""

    def __init__(self, msg, phase=None):
        super().__init__(msg)
        self.phase = phase


class ConfigError(HexmgError, ValueError):
    def __init__(self, msg, key=None, line=None):
        super().__init__(msg)
        self.key = key
        self.line = line

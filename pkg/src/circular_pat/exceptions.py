class CircularPATError(Exception):
    """Base class of all errors raised by this package"""


class GridError(CircularPATError, ValueError): ...


class SupportError(CircularPATError, ValueError):
    def __init__(self, precondition: str, detail: str = ""):
        message = f"Support precondition violated: {precondition}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)
        self.precondition = precondition


class ParityError(CircularPATError, ValueError): ...


class GeometryError(CircularPATError, ValueError): ...


class ImaginaryResidueError(CircularPATError, ArithmeticError): ...


class ConfigError(CircularPATError, ValueError): ...


class VolumeFormatError(CircularPATError, ValueError): ...


class ChecksumError(CircularPATError): ...


class CommandError(CircularPATError):
    def __init__(self, message, exit_code: int = 1):
        super().__init__(message)
        self.exit_code = exit_code

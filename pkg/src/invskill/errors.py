"""Exception hierarchy shared by every module."""


class InvskillError(Exception):
    """Base class; the CLI maps these to exit code 1."""


class InvalidTrajectory(InvskillError):
    pass


class ParseError(InvskillError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IoError(InvskillError):
    pass


class SizeMismatch(InvskillError):
    pass


class DimMismatch(InvskillError):
    pass


class InvalidCost(InvskillError):
    pass


class InvalidStd(InvskillError):
    pass


class InvalidWeight(InvskillError):
    pass


class StateError(InvskillError):
    pass


class EmptyObservation(InvskillError):
    pass


class EmptyDataset(InvskillError):
    pass


class RoleError(InvskillError):
    pass


class ConfigError(InvskillError):
    pass

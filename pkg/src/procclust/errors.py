"""Exception types raised across the package."""


class ProcclustError(ValueError):
    """Base class for all package errors."""


class InvalidInputError(ProcclustError):
    pass


class InvalidParameterError(ProcclustError):
    pass


class UnsupportedSizeError(ProcclustError):
    pass


class InvalidSpecError(ProcclustError):
    pass

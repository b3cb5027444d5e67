"""Exception hierarchy shared by all modules."""


class DeblurError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(DeblurError, ValueError):
    pass


class InvalidSpecificationError(DeblurError, ValueError):
    pass


class DimensionError(DeblurError, ValueError):
    pass


class OutOfSupportError(DeblurError, ValueError):
    pass


class UnsupportedChannelsError(DeblurError, ValueError):
    pass


class ArchitectureError(DeblurError, ValueError):
    pass


class UnavailableError(DeblurError, LookupError):
    pass


class RunAborted(DeblurError, RuntimeError):
    """Raised when the objective becomes non-finite during optimization.

    The partial trace is attached as ``trace`` so callers can persist it.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace

"""Exception types raised across the package.

All of them derive from ``ValueError`` so callers that only care about bad
input can catch a single class.
"""


class DDError(ValueError):
    """Base class for every error raised by ddqpt."""


class InvalidStateError(DDError):
    pass


class InvalidObservableError(DDError):
    pass


class InvalidChannelError(DDError):
    pass


class InvalidDurationError(DDError):
    pass


class InvalidParameterError(DDError):
    pass


class TimingError(DDError):
    """A duration is not an integer multiple of the simulation step."""


class ReconstructionError(DDError):
    """Process tomography could not reproduce the probe outputs."""


class UndefinedFidelityError(DDError):
    pass

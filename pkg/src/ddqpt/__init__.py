"""Single-qubit dynamical decoupling, Kraus channels and process tomography."""

from .errors import (
    DDError,
    InvalidChannelError,
    InvalidDurationError,
    InvalidObservableError,
    InvalidParameterError,
    InvalidStateError,
    ReconstructionError,
    TimingError,
    UndefinedFidelityError,
)

__all__ = [
    "DDError",
    "InvalidChannelError",
    "InvalidDurationError",
    "InvalidObservableError",
    "InvalidParameterError",
    "InvalidStateError",
    "ReconstructionError",
    "TimingError",
    "UndefinedFidelityError",
]

__version__ = "0.1.0"

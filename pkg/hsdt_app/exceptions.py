class HsdtError(Exception):
    """
    Base class for every error raised by the HSDT apps.

    Management commands turn it into a CommandError, API views into a
    ValidationError.
    """


class ShapeError(HsdtError, ValueError):
    """
    Raised when tensor extents violate an operation's contract.

    Attributes:
        axis (str | int | None): The offending axis, when one can be named.
    """

    def __init__(self, message, axis=None):
        self.axis = axis
        if axis is not None:
            message = f"{message} (axis: {axis})"
        super().__init__(message)


class BandCountError(HsdtError):
    """Raised when cross-attention is requested for a band count the learnable queries were not sized for."""

    def __init__(self, bands, d_train):
        self.bands = bands
        self.d_train = d_train
        super().__init__(
            f"Cross-attention needs {d_train} bands, got {bands}.")


class PaddingRequiredError(HsdtError):
    """Raised when spatial extents are not divisible by the network's downsampling factor."""


class NumericalError(HsdtError):
    """Raised when a non-finite value would otherwise propagate silently."""


class ScheduleError(HsdtError):
    """Raised for malformed learning-rate schedules or epochs outside them."""


class ConfigError(HsdtError):
    """
    Raised when a key=value config cannot be parsed or validated.

    Attributes:
        errors (dict): Field name to list of messages, as produced by a serializer.
    """

    def __init__(self, message, errors=None):
        self.errors = errors or {}
        super().__init__(message)


class WeightFormatError(HsdtError):
    """Base class for weight/checkpoint file problems."""


class BadMagicError(WeightFormatError):
    pass


class TruncatedFileError(WeightFormatError):
    pass


class UnknownTensorError(WeightFormatError):
    pass


class TensorShapeMismatchError(WeightFormatError):
    """
    Attributes:
        name (str): Dotted name of the tensor whose extents disagree.
    """

    def __init__(self, name, expected, found):
        self.name = name
        self.expected = tuple(expected)
        self.found = tuple(found)
        super().__init__(
            f"Tensor '{name}' has shape {self.found}, expected {self.expected}.")


class ContainerError(HsdtError):
    """Base class for HSI container problems."""


class ContainerMagicError(ContainerError):
    pass


class ContainerTruncatedError(ContainerError):
    pass


class ContainerNonFiniteError(ContainerError):
    pass


class NoiseSpecError(HsdtError, ValueError):
    pass


class DivergenceError(HsdtError):
    """
    Raised when the conjugate-gradient x-step diverges.

    Attributes:
        diagnostics (dict): Residual history and iteration indices at failure.
    """

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)

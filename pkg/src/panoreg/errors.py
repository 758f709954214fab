"""Exception hierarchy shared by every panoreg module."""


class PanoregError(Exception):
    """Base class for all library errors."""


class LengthMismatch(PanoregError, ValueError):
    pass


class EmptyInput(PanoregError, ValueError):
    pass


class NonPositiveHeight(PanoregError, ValueError):
    pass


class NonPositiveDepth(PanoregError, ValueError):
    pass


class DegenerateBoundary(PanoregError, ValueError):
    pass


class GenerationFailed(PanoregError, RuntimeError):
    pass


class CameraOutsideRoom(PanoregError, ValueError):
    pass


class NoIntersection(PanoregError, RuntimeError):
    """A ray from an interior point missed every edge; indicates a bug or invalid polygon."""


class DegenerateConfiguration(PanoregError, ValueError):
    pass


class RegistrationFailure(PanoregError):
    """Registration could not produce a pose. Counted as a failed pair by the metrics."""


class TooFewPairs(RegistrationFailure):
    pass


class NoConsensus(RegistrationFailure):
    pass


class ClippingFailure(PanoregError, RuntimeError):
    pass


class SchemaError(PanoregError, ValueError):
    """A serialized document failed validation."""

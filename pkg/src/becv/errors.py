"""Exception types shared across the codec."""


class CodecError(Exception):
    """Base class for all codec failures."""


class ShapeError(CodecError):
    """Tensor or kernel dimensions do not match the operation contract."""


class NumericalError(CodecError):
    """A kernel produced non-finite values."""


class PlanError(CodecError):
    """Invalid coding-plan request (bad intra period, frame count, ...)."""


class CorruptBitstreamError(CodecError):
    """The bitstream cannot be decoded; carries the failing position when known."""


class ProfileError(CodecError):
    """Parameter file missing, malformed, or mismatched with the stream."""

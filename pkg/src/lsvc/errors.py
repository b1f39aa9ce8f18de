"""Exception types shared across the codec."""


class CodecError(Exception):
    """Base class for all codec-level failures."""


class BitstreamError(CodecError):
    """Malformed NAL unit, stream structure, or payload framing."""


class TruncatedStreamError(BitstreamError):
    """The byte stream ended before the decoder was done."""


class CorruptStreamError(BitstreamError):
    """Decoded payload failed its end-of-stream sentinel check."""


class CurveError(CodecError):
    """A rate-quality curve is unusable for BD computation."""

    def __init__(self, message, diagnosis=None):
        super().__init__(message)
        self.diagnosis = diagnosis

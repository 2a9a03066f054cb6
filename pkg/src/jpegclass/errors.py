"""Typed errors for the whole pipeline.

Every failure mode the library reports deliberately has its own class so
callers (and the CLI) can map them to messages and exit codes without
string matching.
"""


class JpegClassError(Exception):
    """Base class for all library errors."""


# --- container parsing ---

class UnsupportedMarker(JpegClassError):
    """File uses a JPEG variant outside baseline sequential support."""


class TruncatedFile(JpegClassError):
    """File ended before a required marker or segment payload."""


class MissingTable(JpegClassError):
    """A component references a quantization or Huffman table never defined."""


class BadMarkerLength(JpegClassError):
    """Segment length field inconsistent with its payload."""


class InvalidCode(JpegClassError):
    """Huffman counts are oversubscribed (no prefix-free code exists)."""


class StrayMarker(JpegClassError):
    """0xFF followed by a non-RST, non-0x00 byte inside the scan."""


# --- entropy decoding ---

class BitstreamExhausted(JpegClassError):
    """Scan bits ran out mid-block."""


class InvalidHuffmanCode(JpegClassError):
    """Bit pattern matches no codeword of the active table."""


class CoefficientOverrun(JpegClassError):
    """Run-length decoding pushed the zigzag index past 63."""


# --- features / model plumbing ---

class ShapeMismatch(JpegClassError):
    """Tensor shapes inconsistent with a layer's contract."""


class GeometryMismatch(JpegClassError):
    """Feature geometry does not match what the model was built for."""


class FeatureIoError(JpegClassError):
    """Feature file missing, unreadable, or malformed."""


# --- training / evaluation ---

class ClassTooSmall(JpegClassError):
    """A class has fewer than 3 items; cannot split 70/10/20."""


class EmptySplit(JpegClassError):
    """Requested evaluation split contains no items."""


class NonFiniteLoss(JpegClassError):
    """Loss became NaN or infinite during training."""

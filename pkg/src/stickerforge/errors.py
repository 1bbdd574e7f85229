"""Exception hierarchy shared across the toolkit."""


class StickerForgeError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(StickerForgeError):
    """An argument violates an operation precondition."""


class InvalidAnnotationError(StickerForgeError):
    """A polygon annotation is malformed or out of range."""


class InvalidRectError(StickerForgeError):
    """A pixel rectangle falls outside the image bounds."""


class IngestError(StickerForgeError):
    """A sign image or its annotation sidecar could not be ingested."""


class ShapeError(StickerForgeError):
    """Image dimensions do not match the classifier architecture."""


class WeightFormatError(StickerForgeError):
    """A weight file is structurally invalid."""


class CorruptWeightsError(WeightFormatError):
    """Weight payload failed its checksum."""


class UnsupportedVersionError(WeightFormatError):
    """Weight file declares an unknown format version."""


class ProtocolError(StickerForgeError):
    """An external classifier sent a malformed or invalid response."""


class BackendUnavailableError(StickerForgeError):
    """An external classifier timed out, died, or is unreachable."""


class NoFeasibleRegionError(StickerForgeError):
    """The merged mask is empty; no sticker can fit on every sign."""

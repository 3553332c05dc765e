"""Exception types shared across the toolkit.

Every error raised on purpose derives from CtxAttrError so callers can
catch toolkit failures without swallowing programming errors.
"""


class CtxAttrError(Exception):
    """Base class for all toolkit errors."""


class IoError(CtxAttrError):
    """A file could not be read or written."""


class DecodeError(CtxAttrError):
    """A raster file exists but is not a decodable 8-bit PNG/JPEG."""


class ShapeError(CtxAttrError):
    """Array dimensions violate a contract (mismatched or degenerate)."""


class FormatError(CtxAttrError):
    """An interchange file has a bad magic, version, or length."""


class DomainError(CtxAttrError):
    """Values violate a domain contract (negative or non-finite entries)."""


class LayerKindError(CtxAttrError):
    """A network layer cannot serve the requested role."""


class PoolError(CtxAttrError):
    """No eligible donor sample exists for a mixed-background variant."""


class ParamError(CtxAttrError):
    """A corruption parameter is out of its documented range."""


class ZeroAttributionError(CtxAttrError):
    """An attribution map sums to zero, so volume ratios are undefined."""


class EmptyGroupError(CtxAttrError):
    """An aggregation group contains no records."""


class MissingVariantError(CtxAttrError):
    """A variant required by an accuracy table has no prediction records."""


class SchemaError(CtxAttrError):
    """An interchange record does not match its documented schema."""


class MissingMapError(CtxAttrError):
    """No attribution map file exists for a (sample, variant) pair."""


class OrphanRecordError(CtxAttrError):
    """A prediction record references a sample absent from the manifest."""


class FilterEmptied(CtxAttrError):
    """The context-fraction filter removed every sample."""


class ManifestError(CtxAttrError):
    """A dataset manifest failed validation; carries per-record diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__(
            "manifest validation failed:\n" + "\n".join(self.diagnostics)
        )


class StageError(CtxAttrError):
    """A pipeline stage aborted; the message is tagged with the stage name."""

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")

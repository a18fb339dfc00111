"""Exception hierarchy shared by all modules."""


class MultilabelError(Exception):
    """Base class for every error raised by this package."""


class CocoParseError(MultilabelError):
    """Malformed JSON. ``offset`` is the byte offset of the failure."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class CocoSchemaError(MultilabelError):
    """A required field is missing or a reference dangles."""


class CocoValidationError(MultilabelError):
    """Raised when serializing a dataset that has invariant violations."""

    def __init__(self, violations):
        lines = "; ".join(f"{v.record_kind} {v.record_id}: {v.rule}" for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"dataset has {len(violations)} violation(s): {lines}{more}")
        self.violations = list(violations)


class IngestError(MultilabelError):
    """Label Studio export cannot be ingested."""


class GeometryError(MultilabelError, ValueError):
    """Invalid geometric input (too few vertices, empty mask, ...)."""


class DegeneracyError(GeometryError):
    """No unique principal axis exists (isotropic mask)."""


class AmbiguityError(GeometryError):
    """The outer-keypoint sign test has no unique dissenting point."""


class CodecError(MultilabelError, ValueError):
    """Run-length record is inconsistent with its size."""


class ConfigError(MultilabelError, ValueError):
    """Invalid augmentation pipeline configuration."""


class PipelineError(MultilabelError):
    """Augmentation failed on a specific input (e.g. unreadable image)."""


class UnsupportedInputError(MultilabelError):
    """Input kind outside what an operation supports (e.g. RLE augmentation)."""


class DepthError(MultilabelError):
    """No valid depth samples were available."""


class InputError(MultilabelError, ValueError):
    """Caller passed inconsistent inputs (dimension mismatch, out-of-bounds point)."""

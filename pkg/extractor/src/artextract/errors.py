"""Extraction job failures."""


class ExtractError(Exception):
    """Base class; carries a stable code for CLI diagnostics."""

    code = "extract_error"

    def __init__(self, message: str, detail: object = None):
        super().__init__(message)
        self.detail = detail


class MissingImage(ExtractError):
    code = "missing_image"


class CorruptImage(ExtractError):
    code = "corrupt_image"


class EmptyDocument(ExtractError):
    code = "empty_document"


class EmptyInput(ExtractError):
    code = "empty_input"


class BadCatalog(ExtractError):
    code = "bad_catalog"


class RangeViolation(ExtractError):
    code = "range_violation"


class BackendUnavailable(ExtractError):
    code = "backend_unavailable"

"""Domain exceptions shared across the package.

Every error carries a stable ``code`` (snake_case) used verbatim as the
``error_code`` field of API error bodies and CLI diagnostics.
"""


class DomainError(Exception):
    """Base class for all domain-level failures."""

    code = "domain_error"

    def __init__(self, message: str, detail: object = None):
        super().__init__(message)
        self.detail = detail


# catalog
class EmptyCatalog(DomainError):
    code = "empty_catalog"


class DuplicateId(DomainError):
    code = "duplicate_id"


class MalformedRecord(DomainError):
    code = "malformed_record"


class NoText(DomainError):
    code = "no_text"


# text engines
class EmptyCorpus(DomainError):
    code = "empty_corpus"


class EmptyDocument(DomainError):
    code = "empty_document"


class InvalidConfig(DomainError):
    code = "invalid_config"


class EmptyClass(DomainError):
    code = "empty_class"


class UnknownClass(DomainError):
    code = "unknown_class"


# similarity core
class IdMismatch(DomainError):
    code = "id_mismatch"


class SizeMismatch(DomainError):
    code = "size_mismatch"


class ChecksumMismatch(DomainError):
    code = "checksum_mismatch"


class NonFiniteValue(DomainError):
    code = "non_finite_value"


class ZeroNormRow(DomainError):
    code = "zero_norm_row"


class OutOfRangeScore(DomainError):
    code = "out_of_range_score"


class UnknownAnchor(DomainError):
    code = "unknown_anchor"


# engine registry
class IncompleteRatings(DomainError):
    code = "incomplete_ratings"


class UnknownEngine(DomainError):
    code = "unknown_engine"


class UnknownSample(DomainError):
    code = "unknown_sample"


class EngineNotEligible(DomainError):
    code = "engine_not_eligible"


# therapy sessions
class DuplicateParticipant(DomainError):
    code = "duplicate_participant"


class InvalidTransition(DomainError):
    code = "invalid_transition"


class OutOfRangeResponse(DomainError):
    code = "out_of_range_response"


class NotASample(DomainError):
    code = "not_a_sample"


class EmptyReflection(DomainError):
    code = "empty_reflection"


class UnknownSession(DomainError):
    code = "unknown_session"


class IdempotencyConflict(DomainError):
    code = "idempotency_conflict"


# analytics
class EmptyInput(DomainError):
    code = "empty_input"


class IncompleteSession(DomainError):
    code = "incomplete_session"


# service config
class ConfigInvalid(DomainError):
    code = "config_invalid"

    def __init__(self, problems: list[str]):
        super().__init__(
            "invalid configuration: " + "; ".join(problems), detail=list(problems)
        )
        self.problems = list(problems)

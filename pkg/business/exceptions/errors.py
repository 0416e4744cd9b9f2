"""
This file defines custom exception classes used across the FLARE toolkit.
Each class represents a specific kind of validation, modelling or runtime
error that can occur while running the pipeline stages.
"""

from typing import Any, Dict


class FlareError(Exception):
    """Base class for all toolkit errors; carries machine-readable details."""

    def __init__(self, message: str = "", **details: Any):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        """Returns the error as a JSON-serialisable dictionary."""
        return {"error": self.__class__.__name__, "message": self.message, **self.details}


# ---------------- Dataset -------------------------------------------------- #

class SchemaError(FlareError):
    """Raised when a survey schema violates its own invariants."""
    pass


class MissingColumnError(FlareError):
    """Raised when a survey file lacks a column named by the schema."""

    def __init__(self, column: str):
        super().__init__(f"Missing column '{column}'", column=column)
        self.column = column


class OutOfRangeAnswerError(FlareError):
    """Raised when an answer violates its variable's declared bounds."""

    def __init__(self, row: int, variable: str, value: str = ""):
        super().__init__(
            f"Row {row}: answer '{value}' out of range for '{variable}'",
            row=row, variable=variable, value=value,
        )
        self.row = row
        self.variable = variable


class UnparseableDecisionError(FlareError):
    """Raised when the evacuate/stay answer of a row cannot be read."""

    def __init__(self, row: int, value: str = ""):
        super().__init__(f"Row {row}: cannot parse decision '{value}'", row=row, value=value)
        self.row = row


class UnknownCategoricalLevelError(FlareError):
    """Raised when a categorical answer is not one of the declared levels."""

    def __init__(self, variable: str, value: str):
        super().__init__(
            f"Unknown level '{value}' for categorical '{variable}'",
            variable=variable, value=value,
        )
        self.variable = variable
        self.value = value


class BadFractionsError(FlareError):
    """Raised when split fractions are not positive or do not sum to one."""
    pass


class EmptyDatasetError(FlareError):
    """Raised when an operation needs at least one record."""
    pass


class SchemaMismatchError(FlareError):
    """Raised when two surveys share no usable variables."""
    pass


# ---------------- Variable selection --------------------------------------- #

class SingularFitError(FlareError):
    """Raised when an unregularised fit has a rank-deficient design matrix."""
    pass


class TooFewRecordsError(FlareError):
    """Raised when an unregularised fit has fewer records than variables."""
    pass


class BadThetaError(FlareError):
    """Raised when a coverage threshold lies outside (0, 1]."""
    pass


class AllZeroWeightsError(FlareError):
    """Raised when every fitted weight is zero."""
    pass


class TooFewVariablesError(FlareError):
    """Raised when elbow detection gets fewer than three weights."""
    pass


# ---------------- Reasoning patterns --------------------------------------- #

class MissingSubsetError(FlareError):
    """Raised when a perception indicator has no selected subset."""

    def __init__(self, kind: str):
        super().__init__(f"No variable subset for indicator '{kind}'", kind=kind)
        self.kind = kind


class ZeroTrialsError(FlareError):
    """Raised when success-rate estimation is asked for zero trials."""
    pass


class EmptyTrainingSetError(FlareError):
    """Raised when a classifier is trained without samples."""
    pass


class LengthMismatchError(FlareError):
    """Raised when paired inputs have different lengths."""
    pass


class DimensionMismatchError(FlareError):
    """Raised when a vector has the wrong dimension for a model or store."""
    pass


# ---------------- Perception / CoT ----------------------------------------- #

class ScoreParseFailureError(FlareError):
    """Raised when no 'Score: N' marker can be read after a retry."""
    pass


class StageOrderViolationError(FlareError):
    """Raised when risk perception is requested before the threat result exists."""
    pass


class EmbedFailureError(FlareError):
    """Raised when a text cannot be embedded."""
    pass


class MissingIndicatorAnswerError(FlareError):
    """Raised when a record has no answer for an indicator's source variable."""

    def __init__(self, record_id: str, variable: str):
        super().__init__(
            f"Record {record_id} has no answer for '{variable}'",
            record_id=record_id, variable=variable,
        )
        self.record_id = record_id


class MissingPlaceholderValueError(FlareError):
    """Raised when a template placeholder has no value."""

    def __init__(self, name: str):
        super().__init__(f"No value for placeholder '{{{name}}}'", placeholder=name)
        self.name = name


class UnknownPlaceholderError(FlareError):
    """Raised when a template uses a placeholder outside the known set."""

    def __init__(self, name: str):
        super().__init__(f"Unknown placeholder '{{{name}}}'", placeholder=name)
        self.name = name


class AmbiguousDecisionError(FlareError):
    """Raised when a response holds both or neither of YES/NO."""
    pass


# ---------------- Memory --------------------------------------------------- #

class StoreModeViolationError(FlareError):
    """Raised when a memory store is used in the wrong mode."""
    pass


class AlreadyReflectedError(FlareError):
    """Raised when reflect() is called on an entry that already has a reflection."""
    pass


# ---------------- LLM client ----------------------------------------------- #

class LlmFailureError(FlareError):
    """Base class for provider failures."""
    pass


class RateLimitedError(LlmFailureError):
    """Raised when the provider keeps answering HTTP 429."""
    pass


class TransportFailureError(LlmFailureError):
    """Raised on network errors or exhausted 5xx retries."""
    pass


class MalformedProviderResponseError(LlmFailureError):
    """Raised when a provider response lacks the expected fields."""
    pass


class StubExhaustedError(LlmFailureError):
    """Raised when the scripted stub has no entry for a request."""
    pass


class DimensionDriftError(LlmFailureError):
    """Raised when an embedding provider returns an unexpected dimension."""
    pass


# ---------------- Evaluation ----------------------------------------------- #

class EmptyInputError(FlareError):
    """Raised when metric functions receive no values."""
    pass


class OutOfRangeScoreError(FlareError):
    """Raised when a perception score lies outside 1-5."""
    pass


# ---------------- CLI ------------------------------------------------------ #

class ConfigInvalidError(FlareError):
    """Raised when a run configuration fails validation."""
    pass


class MissingUpstreamArtifactError(FlareError):
    """Raised when a stage runs before the stage that produces its inputs."""

    def __init__(self, stage: str, artifact: str = ""):
        super().__init__(
            f"Stage '{stage}' must run first (missing artifact '{artifact}')",
            stage=stage, artifact=artifact,
        )
        self.stage = stage


class StaleArtifactError(FlareError):
    """Raised when an upstream artifact was built from different data or splits."""

    def __init__(self, stage: str, artifact: str = ""):
        super().__init__(
            f"Artifact '{artifact}' was built from other data or splits; rerun stage '{stage}'",
            stage=stage, artifact=artifact,
        )
        self.stage = stage


class CorruptArtifactError(FlareError):
    """Raised when a stored artifact cannot be read back."""

    def __init__(self, artifact: str, reason: str = ""):
        super().__init__(f"Artifact '{artifact}' is unreadable: {reason}", artifact=artifact, reason=reason)


class OutputLockedError(FlareError):
    """Raised when another command holds the output directory lock."""
    pass

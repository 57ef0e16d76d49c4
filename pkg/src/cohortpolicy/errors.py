"""Exception types shared across the package."""


class CohortPolicyError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(CohortPolicyError):
    """An ingest schema is invalid or a declared column is missing."""


class RowIngestError(CohortPolicyError):
    """A data row failed validation. Carries the 1-based row index."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class IntegrityError(CohortPolicyError):
    """Dataset-level invariant violated (duplicate users, arm mismatch, ...)."""


class EstimationError(CohortPolicyError):
    """A treatment-effect estimate is undefined (empty arm or segment)."""


class ConfigError(CohortPolicyError):
    """A configuration value is out of range or inconsistent."""


class InsufficientDataError(CohortPolicyError):
    """Too little data for the requested check (snapshots, slices, days)."""


class UnmatchedInstructionError(CohortPolicyError):
    """A selector ranking references an instruction with no ground truth."""

"""Exception types shared across the library."""


class DriftFiError(Exception):
    """Base class for all library errors."""


class MalformedInstanceError(DriftFiError):
    """An instance carries a non-finite value or is missing its label."""


class FeatureBudgetError(DriftFiError):
    """Exact coalition enumeration was requested beyond the feature budget."""


class UndefinedImpurityError(DriftFiError):
    """Gini impurity requested on a node with zero observed samples."""


class InsufficientDataError(DriftFiError):
    """A statistic was requested on an empty sample."""


class SchemaMismatchError(DriftFiError):
    """A batch or file does not carry the features the schema requires."""


class IngestionError(DriftFiError):
    """A CSV row or header could not be parsed against the schema."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConfigError(DriftFiError):
    """A run configuration failed validation before any training."""

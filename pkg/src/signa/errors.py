"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: configuration problems exit
with 1, data/ingestion problems with 2, numeric failures with 3.
"""


class SignaError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SignaError):
    """Invalid configuration value, flag, or argument."""


class ShapeError(SignaError):
    """Tensor or graph dimensions do not line up."""


class ContractError(SignaError):
    """An API was used outside its documented contract."""


class DataError(SignaError):
    """Problem with user-supplied data files or payloads."""


class IngestionError(DataError):
    """A data file failed to parse; message carries file/line context."""


class CheckpointError(DataError):
    """Checkpoint is corrupt, truncated, or incompatible."""


class NumericError(SignaError):
    """A numeric invariant was violated (NaN/Inf, degenerate input)."""


class DomainError(NumericError):
    """Input outside the mathematical domain of an operation."""


class DegenerateEmbeddingError(NumericError):
    """An embedding row has (near-)zero norm and cannot be normalized."""


class DegenerateGraphError(NumericError):
    """The graph violates a precondition of the contrastive objective."""


class OptimizationError(NumericError):
    """Training produced a non-finite loss or gradient."""


class AnalysisError(DataError):
    """An analytics routine is missing required inputs (e.g. labels)."""

"""Exception hierarchy for PEMI.

Every error derives from ``PemiError`` (itself a ``ValueError``) so callers can
catch the whole family at once. The CLI maps the three top-level families to
exit codes: configuration (2), data (3) and checkpoint (4).
"""


class PemiError(ValueError):
    """Base class for all PEMI errors."""


class ConfigError(PemiError):
    """Invalid run configuration or hyperparameter."""


class LayoutError(ConfigError):
    """Malformed prompt-template layout string."""


class DataError(PemiError):
    """Invalid dataset, corpus or argument text."""


class HierarchyError(DataError):
    """Label hierarchy fails validation."""


class LabelPathError(DataError):
    """Instance labels do not form a valid path through the hierarchy."""


class LengthError(DataError):
    """Sequence does not fit the configured maximum length."""


class CheckpointError(PemiError):
    """Checkpoint file is missing, corrupt or inconsistent."""


class CompatibilityError(CheckpointError):
    """Checkpoint and supplied data/hierarchy disagree."""


class DimensionError(PemiError):
    """Tensor shapes are incompatible for an operation."""


class DegenerateRowError(PemiError):
    """A normalization row has no admissible mass."""


class TapeError(PemiError):
    """Backward requested for a tensor the tape never recorded."""


class TemplateError(PemiError):
    """Templated input violates the mask/prompt slot contract."""


class LevelError(PemiError):
    """Hierarchy level index out of range."""


class NumericalError(PemiError):
    """Non-finite values appeared during computation."""

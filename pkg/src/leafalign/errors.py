"""Exception taxonomy.

Three families, matching the CLI exit codes: ConfigError (exit 2),
DataError (exit 3) and NumericalError (exit 4). Every concrete error the
library raises is a subclass of exactly one family.
"""


class LeafAlignError(Exception):
    """Base class for all library errors."""


class ConfigError(LeafAlignError):
    """Invalid or inconsistent configuration."""


class DataError(LeafAlignError):
    """Invalid dataset, vocabulary or batch structure."""


class NumericalError(LeafAlignError):
    """Numerically invalid input or degenerate computation."""


# --- configuration -------------------------------------------------------

class InvalidConfig(ConfigError):
    """Structurally invalid model or schedule configuration."""


# --- vocabulary / captions ------------------------------------------------

class DuplicateConcept(DataError):
    """Two vocabulary records share the same (crop, condition) pair."""


class InvalidConcept(DataError):
    """Concept record with an empty crop or condition string."""


class MissingDescription(DataError):
    """Long-context caption requested for a diseased concept without a description."""


# --- datasets -------------------------------------------------------------

class EmptySpec(DataError):
    """Dataset generation spec or loaded dataset has no populated classes."""


class InsufficientSamples(DataError):
    """A class has too few samples for the requested split or probe size."""


class ParseError(DataError):
    """Malformed manifest or config line; the message carries the line number."""


class DanglingReference(DataError):
    """A sample references a concept_id outside the embedded vocabulary."""


class MissingClass(DataError):
    """A class required for evaluation is absent from the training pool."""


# --- batching / targets ----------------------------------------------------

class DuplicateClassInBatch(DataError):
    """A soft-label batch contains two samples of the same concept."""


class BatchTooLarge(DataError):
    """Requested batch size exceeds the number of distinct classes."""


# --- numerics ---------------------------------------------------------------

class NonFiniteInput(NumericalError):
    """Encoder input contains NaN or infinity."""


class NonFiniteGradient(NumericalError):
    """An optimizer step received a NaN or infinite gradient."""


class NormalizationDegenerate(NumericalError):
    """A pre-normalization embedding has (near-)zero norm."""


class MeanOfEmptySet(NumericalError):
    """Mean pooling over a token sequence with no non-padding tokens."""


class ShapeError(NumericalError):
    """Array arguments with incompatible shapes."""


class InvalidTemperature(NumericalError):
    """Similarity temperature must be strictly positive."""


class InvalidTargets(NumericalError):
    """Soft-target matrix is not row-stochastic or has invalid weights."""


class EmptyClassSet(DataError):
    """Zero-shot classification against an empty class-prompt set."""


class EmptySet(DataError):
    """Retrieval over an empty embedding set."""


class UndefinedSilhouette(DataError):
    """Silhouette score requested for fewer than two groups."""


class IoError(DataError):
    """Checkpoint or manifest file could not be read or written."""

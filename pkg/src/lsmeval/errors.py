"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the CLI: usage errors exit 1, data/validation
errors exit 2, numerical errors exit 3.
"""


class LsmEvalError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 2


class ValidationError(LsmEvalError):
    """Input data violates a documented invariant."""


class ArchiveError(ValidationError):
    """Malformed or unreadable map archive."""


class BadMagicError(ArchiveError):
    """Archive does not start with the expected magic bytes."""


class UnsupportedVersionError(ArchiveError):
    """Archive declares a format version this build cannot read."""


class TruncatedArchiveError(ArchiveError):
    """Archive payload is shorter than its header declares."""


class NonFiniteEmbeddingError(ArchiveError):
    """Archive contains a NaN or infinite embedding component."""


class LabelRangeError(ArchiveError):
    """Archive stores a label id outside the declared vocabulary."""


class LexiconError(ValidationError):
    """Malformed query lexicon document."""


class UniverseMismatchError(ValidationError):
    """Two masks do not share the same voxel universe."""


class TooFewSamplesError(ValidationError):
    """A sample set is below the minimum size for a Gaussian summary.

    Carries enough context for pipelines to record the skip instead of
    aborting.
    """

    def __init__(self, map_id, label_id, count, n_min):
        super().__init__(
            f"sample set ({map_id!r}, label {label_id}) has {count} samples, "
            f"fewer than n_min={n_min}"
        )
        self.map_id = map_id
        self.label_id = label_id
        self.count = count
        self.n_min = n_min


class NumericalError(LsmEvalError):
    """A computation produced a non-finite or otherwise invalid result."""

    exit_code = 3

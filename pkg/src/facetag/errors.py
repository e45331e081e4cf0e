"""Exception hierarchy shared across the package.

Everything raised by facetag derives from :class:`FacetagError`, so callers
(including the CLI exit-code mapping) can catch one base class.
"""


class FacetagError(Exception):
    """Base class for all facetag errors."""


class ConfigError(FacetagError):
    """A configuration value is out of range or inconsistent."""


class DegenerateVectorError(FacetagError):
    """A vector with no direction (zero or non-finite) where a unit vector is required."""


class DimensionMismatchError(FacetagError):
    """Two embeddings of different dimensionality were compared or pooled."""


class EmptyPoolError(FacetagError):
    """average_pool received an empty list."""


class EmptyInputError(FacetagError):
    """Clustering received an empty point list."""


class BundleFormatError(FacetagError):
    """The evidence-bundle document cannot be parsed into the expected shape."""


class BundleValidationError(FacetagError):
    """A parsed evidence bundle violates a structural invariant."""


class SourceHasNoTimeError(FacetagError):
    """A time-windowed operation was asked about an occurrence without a timestamp."""


class NotFamousError(FacetagError):
    """A face model was requested for a name that is not classified famous."""


class MissingGroundTruthError(FacetagError):
    """A tag references a track that has no ground-truth annotation."""

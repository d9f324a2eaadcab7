"""Exception types raised across the fruitdx pipeline."""


class FruitdxError(Exception):
    """Base class for every error fruitdx raises on purpose."""


class ImageDecodeError(FruitdxError):
    """The file is missing, unreadable, or cannot be decoded as an image."""


class ImageFormatError(FruitdxError):
    """The file decodes, but is not one of the supported formats (PNG, JPEG)."""


class PreconditionError(FruitdxError, ValueError):
    """An operation was called with arguments that violate its contract."""


class RangeError(FruitdxError, IndexError):
    """An index or coordinate falls outside its valid range."""


class NumericError(FruitdxError):
    """Non-finite values where finite numbers are required."""


class EmptyRegionError(FruitdxError):
    """A descriptor was asked to summarize an empty masked region."""


class InfeasibleClusteringError(FruitdxError):
    """Requested cluster count exceeds the number of distinct points."""


class SelectionFailedError(FruitdxError):
    """No cluster satisfies the disease-selection strategy."""


class DegenerateTrainingError(FruitdxError):
    """A binary training set contains only one label sign."""


class FeatureMismatchError(FruitdxError):
    """Feature vector layout does not match what the model was trained on."""


class ModelIntegrityError(FruitdxError):
    """A model file is truncated, corrupt, or fails its checksum."""


class ModelVersionError(FruitdxError):
    """A model file declares a format version this build does not support."""


class ManifestError(FruitdxError):
    """A dataset manifest is missing, malformed, or inconsistent."""


class InfeasibleSplitError(FruitdxError):
    """The requested train-per-class count is not smaller than every class."""

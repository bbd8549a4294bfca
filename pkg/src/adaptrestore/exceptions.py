"""Exception hierarchy shared by all modules."""


class AdaptRestoreError(Exception):
    """Base class for every error raised by this package."""


# imaging
class MissingFile(AdaptRestoreError, FileNotFoundError):
    pass


class UnsupportedFormat(AdaptRestoreError, ValueError):
    pass


class CorruptData(AdaptRestoreError, ValueError):
    pass


class IoFailure(AdaptRestoreError, OSError):
    pass


class EvenKernel(AdaptRestoreError, ValueError):
    pass


# synth
class EmptyCleanSet(AdaptRestoreError, ValueError):
    pass


class UnwritableManifest(AdaptRestoreError, OSError):
    pass


class StratumTooSmall(AdaptRestoreError, ValueError):
    pass


# features
class TooSmall(AdaptRestoreError, ValueError):
    pass


# classify
class ShapeMismatch(AdaptRestoreError, ValueError):
    pass


class EmptyCorpus(AdaptRestoreError, ValueError):
    pass


class EmptyRateSet(AdaptRestoreError, ValueError):
    pass


class BadMagic(AdaptRestoreError, ValueError):
    pass


class VersionMismatch(AdaptRestoreError, ValueError):
    pass


class TruncatedFile(AdaptRestoreError, ValueError):
    pass


# route
class WrongMode(AdaptRestoreError, ValueError):
    pass


class OutOfRange(AdaptRestoreError, ValueError):
    pass


# restore
class OversizeForUpscale(AdaptRestoreError, ValueError):
    pass


class TemplateInvalid(AdaptRestoreError, ValueError):
    pass


# blend
class NoActiveDegradation(AdaptRestoreError, ValueError):
    pass


# metrics
class LengthMismatch(AdaptRestoreError, ValueError):
    pass


class IndexOutOfRange(AdaptRestoreError, ValueError):
    pass


class EmptyMatrix(AdaptRestoreError, ValueError):
    pass


class EmptyRow(AdaptRestoreError, ValueError):
    pass


class EmptyColumn(AdaptRestoreError, ValueError):
    pass


class DimensionMismatch(AdaptRestoreError, ValueError):
    pass


class NonPositiveTime(AdaptRestoreError, ValueError):
    pass


# pipeline
class ModelLoadFailure(AdaptRestoreError, RuntimeError):
    pass


class EmptySource(AdaptRestoreError, ValueError):
    pass


class NoMatches(AdaptRestoreError, ValueError):
    pass


class ConfigError(AdaptRestoreError, ValueError):
    pass

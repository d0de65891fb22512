"""Exception hierarchy.

Two roots decide the CLI exit code: :class:`ConfigError` (exit 1) and
:class:`DataError` (exit 2). Everything else is a programming error on the
caller's side and subclasses ``ValueError``.
"""


class SubbandNetError(Exception):
    pass


class ConfigError(SubbandNetError):
    pass


class DataError(SubbandNetError):
    pass


# subband
class DimensionMismatch(SubbandNetError, ValueError):
    pass


class ImageTooSmall(SubbandNetError, ValueError):
    pass


# qnum
class EmptyTensor(SubbandNetError, ValueError):
    pass


class UnsupportedWordLength(ConfigError, ValueError):
    pass


# cnn
class ShapeUnderflow(ConfigError, ValueError):
    pass


class ShapeMismatch(SubbandNetError, ValueError):
    pass


class EmptyDataset(DataError, ValueError):
    pass


# fusion
class InvalidDistribution(SubbandNetError, ValueError):
    pass


# data
class BadMagic(DataError):
    pass


class CountMismatch(DataError):
    pass


class TruncatedFile(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class MissingDataset(DataError):
    pass


# harness
class ConfigConflict(ConfigError):
    pass


class InsufficientEpochs(SubbandNetError, ValueError):
    pass

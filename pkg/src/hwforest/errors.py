"""Exception types raised across the package."""


class HWForestError(Exception):
    """Base class for all package errors."""


# dataset
class BadMagic(HWForestError, ValueError):
    pass


class CountMismatch(HWForestError, ValueError):
    pass


class TruncatedFile(HWForestError, ValueError):
    pass


class RaggedRow(HWForestError, ValueError):
    pass


class UnknownLabelColumn(HWForestError, KeyError):
    pass


class NonNumericCell(HWForestError, ValueError):
    pass


class ClassWithSingleInstance(HWForestError, ValueError):
    pass


class InvalidDataset(HWForestError, ValueError):
    pass


# forest
class EmptyDataset(HWForestError, ValueError):
    pass


class DimensionMismatch(HWForestError, ValueError):
    pass


class FoldCountTooSmall(HWForestError, ValueError):
    pass


# hash screening / scanning
class EmptyVector(HWForestError, ValueError):
    pass


class OutOfRange(HWForestError, ValueError):
    pass


class ZeroTotalMass(HWForestError, ValueError):
    pass


class WindowLargerThanImage(HWForestError, ValueError):
    pass


class AllLocationsEliminated(HWForestError, RuntimeError):
    pass


class ShapeMismatch(HWForestError, ValueError):
    pass


# confidence screening
class InvalidBounds(HWForestError, ValueError):
    pass


class TooFewInstances(HWForestError, ValueError):
    pass


class BinCountExceedsInstances(HWForestError, ValueError):
    pass


# cascade
class EmptyTrainingSet(HWForestError, ValueError):
    pass


# statistics
class ZeroVariance(HWForestError, ArithmeticError):
    pass


class DegenerateTable(HWForestError, ValueError):
    pass


class LengthMismatch(HWForestError, ValueError):
    pass


# configuration / serialization
class ConfigError(HWForestError, ValueError):
    pass


class ModelFormatError(HWForestError, ValueError):
    pass

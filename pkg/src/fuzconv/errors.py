"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented exit statuses without a lookup table.
"""


class FuzconvError(Exception):
    exit_code = 1


class ValidationError(FuzconvError, ValueError):
    """Bad configuration or argument; caught before any work starts."""

    exit_code = 2


class DataError(FuzconvError, ValueError):
    """Input data cannot be used as given."""

    exit_code = 3


class NumericError(FuzconvError, ArithmeticError):
    """Non-finite values produced during computation."""

    exit_code = 4


# series_core / windowing
class SeriesTooShort(DataError):
    pass


class NonFiniteInput(DataError):
    pass


class WindowTooSmall(ValidationError):
    pass


class WindowTooLarge(DataError):
    pass


# fuzzifier
class DegenerateSeries(DataError):
    pass


class OutOfUniverse(DataError):
    pass


class EmptyWindow(DataError):
    pass


# tensor engine
class ShapeMismatch(ValidationError):
    pass


class InputTooShort(ValidationError):
    pass


class GraphCycle(FuzconvError):
    pass


class UnrecordedTensor(FuzconvError):
    pass


# model
class FlankTooShort(ValidationError):
    pass


class SpatialUnderflow(ValidationError):
    pass


# trainer
class NoTrainingPairs(DataError):
    pass


class DivergedLoss(NumericError):
    pass


class NonFiniteGrad(NumericError):
    pass


class HorizonZero(ValidationError):
    pass


class CheckpointMismatch(ValidationError):
    pass


class CheckpointFormatError(DataError):
    pass


# data io
class ParseError(DataError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class NonMonotoneTimestamps(DataError):
    pass


# evaluator
class LengthMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class BadArity(ValidationError):
    pass

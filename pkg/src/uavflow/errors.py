"""Exception hierarchy for uavflow."""


class UavflowError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(UavflowError, ValueError):
    pass


class GeneratorError(ValidationError):
    pass


class NegativeOffDiagonal(GeneratorError):
    pass


class RowSumNonzero(GeneratorError):
    pass


class Reducible(GeneratorError):
    pass


class SingularBeyondRankOne(GeneratorError):
    pass


class InvalidNetwork(ValidationError):
    pass


class StateOutOfDomain(ValidationError):
    pass


class EmptyBox(UavflowError):
    pass


class UnstableQueue(UavflowError):
    pass


class ZeroDriftMode(UavflowError):
    pass


class ClampBudgetExceeded(UavflowError):
    pass


class TooFewSamples(UavflowError):
    pass


class ScenarioError(UavflowError):
    pass


class ParseError(ScenarioError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class UnknownKey(ScenarioError):
    pass

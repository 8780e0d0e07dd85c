"""Exception types shared across the package."""


class AddLossError(Exception):
    """Base class for all errors raised by addloss."""


class ZeroVector(AddLossError, ValueError):
    pass


class DimensionMismatch(AddLossError, ValueError):
    pass


class SoftLabelsUnsupported(AddLossError, ValueError):
    pass


class NonFiniteGradient(AddLossError, FloatingPointError):
    pass


class NonFiniteActivation(AddLossError, FloatingPointError):
    pass


class NonFiniteLoss(AddLossError, FloatingPointError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class InfeasibleGeometry(AddLossError, RuntimeError):
    pass


class ParseError(AddLossError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InconsistentWidth(ParseError):
    pass


class UnknownLabelColumn(AddLossError, KeyError):
    pass


class IndexOutOfRange(AddLossError, IndexError):
    pass


class ClassTooSmall(AddLossError, ValueError):
    def __init__(self, classes):
        self.classes = list(classes)
        super().__init__(f"classes with fewer than 2 embeddings: {self.classes}")


class ConfigConflict(AddLossError, ValueError):
    pass


class ConfigError(AddLossError, ValueError):
    pass

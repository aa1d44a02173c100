"""Exception hierarchy shared by every module.

Each error carries the name of the module that raised it and the process
exit code the command line maps it to.
"""


class FeatrelError(Exception):
    module = "featrel"
    exit_code = 3

    def __init__(self, message="", *, module=None):
        if module is not None:
            self.module = module
        super().__init__(message)

    def __str__(self):
        return f"{self.module}: {super().__str__()}"


class UsageError(FeatrelError):
    exit_code = 1


class DimensionError(UsageError, ValueError):
    pass


class ExpressionSyntaxError(UsageError):
    module = "model-core"

    def __init__(self, message, position=None, expected=()):
        self.position = position
        self.expected = tuple(sorted(expected))
        detail = message
        if position is not None:
            detail = f"{message} at position {position}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class DataFormatError(FeatrelError):
    """Malformed input file contents (ragged rows, non-numeric cells)."""

    module = "data"
    exit_code = 2

    def __init__(self, message, row=None, col=None, *, module=None):
        self.row = row
        self.col = col
        super().__init__(message, module=module)


class ReadError(FeatrelError, OSError):
    """A file could not be opened or decoded."""

    exit_code = 2


class NumericError(FeatrelError, ArithmeticError):
    exit_code = 3


class NonFiniteError(NumericError):
    module = "model-core"

    def __init__(self, message, row=None, *, module=None):
        self.row = row
        super().__init__(message, module=module)


class SingularMatrixError(NumericError):
    def __init__(self, message, condition=None, *, module=None):
        self.condition = condition
        super().__init__(message, module=module)


class WeightUnderflowError(NumericError):
    module = "valuefn"


class VerificationError(FeatrelError):
    exit_code = 4

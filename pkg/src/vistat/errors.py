"""Exception hierarchy. Each family maps to one CLI exit code."""


class VistatError(Exception):
    exit_code = 1


class InputError(VistatError, ValueError):
    """Malformed input: bad schema, unparseable rows, bad arguments."""

    exit_code = 2


class SchemaError(InputError):
    pass


class RowError(InputError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateDateError(InputError):
    pass


class SplitError(InputError):
    pass


class DimensionError(InputError):
    pass


class DomainError(VistatError, ArithmeticError):
    """Inputs are well formed but the math is undefined for them."""

    exit_code = 3


class DegenerateWindowError(DomainError):
    def __init__(self, index):
        super().__init__(f"rolling window ending at index {index} has zero standard deviation")
        self.index = index


class DegenerateError(DomainError):
    pass


class InvalidStateError(DomainError):
    pass


class NumericalError(DomainError):
    def __init__(self, name, message="non-finite gradient"):
        super().__init__(f"{message} for parameter {name!r}")
        self.name = name


class InvariantError(VistatError, AssertionError):
    exit_code = 4

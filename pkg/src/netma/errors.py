"""Exception hierarchy.

The CLI maps these onto exit codes: configuration problems exit with 2,
bad input data with 3 and numerical failures with 4.
"""


class NetmaError(Exception):
    exit_code = 1


class ConfigError(NetmaError, ValueError):
    exit_code = 2


class DataError(NetmaError, ValueError):
    exit_code = 3


class InvalidSizeError(DataError):
    pass


class InvalidIndexError(DataError, IndexError):
    pass


class InvalidFoldCountError(DataError):
    pass


class InvalidDimensionError(DataError):
    pass


class ShapeError(DataError):
    pass


class IncompletePredictionsError(DataError):
    pass


class UndefinedMetricError(DataError):
    pass


class IntegrityError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.path = path
        self.line = line


class NumericError(NetmaError, ArithmeticError):
    exit_code = 4


class DivergenceError(NumericError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class InvalidQPError(NumericError):
    pass

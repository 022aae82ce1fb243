"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line layer can map
failure classes onto distinct process exit codes.
"""


class CensoredArealError(Exception):
    exit_code = 1


class ConfigError(CensoredArealError, ValueError):
    exit_code = 2


class DataError(CensoredArealError, ValueError):
    exit_code = 3


class NumericalFailure(CensoredArealError, ArithmeticError):
    exit_code = 4


# graph / correlation
class IsolatedRegion(DataError):
    pass


class RhoOutOfRange(ConfigError):
    pass


class NonStationary(ConfigError):
    pass


class DimensionMismatch(DataError):
    pass


# data model
class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownStation(DataError):
    pass


class DuplicateCell(DataError):
    pass


class NoLODRecorded(DataError):
    pass


class LengthMismatch(DataError):
    pass


# stochastics
class DegenerateRegion(NumericalFailure):
    pass


class NotSPD(NumericalFailure):
    pass


class DomainError(ConfigError):
    pass


# diagnostics
class TooFewChains(ConfigError):
    pass


class ZeroVariance(DataError):
    pass

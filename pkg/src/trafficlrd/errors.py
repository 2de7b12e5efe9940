"""Exception hierarchy.

Every error raised on bad input data derives from :class:`DataError`, which the
CLI maps to exit status 1.
"""


class DataError(Exception):
    """Base class for errors caused by the data being analysed."""


# capture ingest
class BadMagic(DataError):
    pass


class UnsupportedLinkType(DataError):
    pass


class TruncatedCapture(DataError):
    pass


class SchemaError(DataError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


# rule files
class RuleParseError(DataError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class OverlappingRules(DataError):
    def __init__(self, port, first, second):
        super().__init__(f"port {port} appears in both {first} and {second}")
        self.port = port
        self.sets = (first, second)


# series and estimators
class EmptyInput(DataError):
    pass


class BlockTooLarge(DataError):
    pass


class TooShort(DataError):
    pass


class ZeroVariance(DataError):
    pass


class DomainError(DataError, ValueError):
    pass


class NoConvergence(DataError):
    pass


class NegativeEigenvalue(DataError):
    pass


class NoData(DataError):
    pass

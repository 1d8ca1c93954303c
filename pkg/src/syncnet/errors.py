"""Exception hierarchy shared by the synthesis, simulation and CLI layers."""


class SyncNetError(Exception):
    """Base class for every error raised by syncnet."""


class BoundViolation(SyncNetError):
    """A declared in-degree bound is smaller than the actual weighted in-degree."""


class DimensionMismatch(SyncNetError, ValueError):
    pass


class NoSolution(SyncNetError):
    """The regulation equations have no solution; ``residual`` holds the least-squares residual."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class TransformMismatch(SyncNetError):
    pass


class RiccatiFailure(SyncNetError):
    pass


class SearchExhausted(SyncNetError):
    pass


class AssumptionFailure(SyncNetError):
    """A rank or stability test required by a construction step failed."""

    def __init__(self, message, test=None):
        super().__init__(message)
        self.test = test


class RankDeficient(SyncNetError):
    pass


class BadOrder(SyncNetError):
    pass


class NumericOverflow(SyncNetError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SizeLimit(SyncNetError):
    pass


class ParseError(SyncNetError):
    """Malformed scenario file. ``section`` names the offending part of the document."""

    def __init__(self, message, section=None, line=None):
        where = []
        if section:
            where.append(f"section '{section}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.section = section
        self.line = line

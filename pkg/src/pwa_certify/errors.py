"""Exception hierarchy.

Each pipeline stage raises a subclass of :class:`PwaCertifyError` carrying the
exit code the CLI maps it to.
"""


class PwaCertifyError(Exception):
    exit_code = 1


class SystemParseError(PwaCertifyError):
    """Malformed system file. ``location`` points at the offending field."""

    exit_code = 10

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class DimensionMismatchError(SystemParseError):
    pass


class EmptyCellsError(SystemParseError):
    pass


class PartitionError(PwaCertifyError):
    """A point lies in zero cells or in several cells."""

    exit_code = 50

    def __init__(self, message, point=None, cells=()):
        self.point = point
        self.cells = tuple(cells)
        super().__init__(message)


class NoCellError(PartitionError):
    pass


class AmbiguousCellError(PartitionError):
    pass


class AnalysisIndeterminate(PwaCertifyError):
    exit_code = 20


class UnboundedInitialSet(PwaCertifyError):
    exit_code = 20


class NoPqlFound(PwaCertifyError):
    exit_code = 30


class SynthesisFailed(PwaCertifyError):
    exit_code = 30


class CertificateRejected(PwaCertifyError):
    exit_code = 30

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("certificate rejected: " + "; ".join(self.violations))


class AlphaNonpositive(PwaCertifyError):
    exit_code = 40


class SelectionFailure(PwaCertifyError):
    exit_code = 40


class PolicyLpFailure(PwaCertifyError):
    exit_code = 40

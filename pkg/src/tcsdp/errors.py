"""Exception types shared across the package."""


class TcsdpError(Exception):
    """Base class for all package errors."""


class InvalidInput(TcsdpError):
    """Malformed or dimensionally inconsistent input."""


class InvalidObjective(TcsdpError):
    """Objective matrix is indefinite beyond tolerance."""


class InvalidCertificate(TcsdpError):
    """Dual certificate violates its structural requirements."""


class DegenerateSpectrum(TcsdpError):
    """Top eigenvalue has multiplicity > 1 within tolerance."""


class ChannelEntryViolation(TcsdpError):
    """Iterate does not satisfy the low-rank-channel entry condition."""


class InvalidBlock(TcsdpError):
    """Lifted block violates its structural constraint set."""


class InvalidBinding(TcsdpError):
    """Symbol in a constraint context is not bound to a block or constant."""


class DegenerateScenario(TcsdpError):
    """Scenario too degenerate to produce a well-posed problem."""


class NotRankOne(TcsdpError):
    """Blocks fail the rank-1 check required for extraction."""


class ExtractionFailed(TcsdpError):
    """Recovered rotation too far from the orthogonal group."""


class NumericalFailure(TcsdpError):
    """Conic solver stalled or reported a numerical breakdown."""

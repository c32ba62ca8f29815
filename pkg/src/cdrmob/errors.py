"""Exception types raised across the package.

Every error derives from :class:`CdrError` so callers (the CLI in particular)
can separate data problems from programming mistakes.
"""

from __future__ import annotations


class CdrError(Exception):
    """Base class for all data/validation errors."""


class ParseError(CdrError, ValueError):
    """A CDR or tower line could not be accepted."""

    def __init__(self, message: str, *, path: str | None = None, lineno: int | None = None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where = f"{where}{lineno}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class MalformedLine(ParseError):
    pass


class UnknownActivityCode(ParseError):
    pass


class UnknownTower(ParseError):
    pass


class DateOutOfWindow(CdrError, ValueError):
    pass


class InvalidConfig(CdrError, ValueError):
    pass


class EmptyPartition(CdrError, ValueError):
    pass


class UnmappedTower(CdrError, ValueError):
    pass


class OverlappingConfig(CdrError, ValueError):
    pass


class EmptyTrajectory(CdrError, ValueError):
    pass


class InsufficientPositions(CdrError, ValueError):
    pass


class DegenerateTensor(CdrError, ValueError):
    """The inertia tensor is isotropic, so no principal direction exists."""


class ZeroVariance(CdrError, ValueError):
    """A trajectory has no spread along one intrinsic axis."""


class EmptyInput(CdrError, ValueError):
    pass


class NonPositiveSample(CdrError, ValueError):
    pass


class InsufficientSamples(CdrError, ValueError):
    pass


class DegenerateFit(CdrError, ValueError):
    """Samples carry no spread, so a two-parameter model is not identifiable."""


class OptimizerNonConvergence(CdrError, RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = dict(diagnostics or {})
        if self.diagnostics:
            detail = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
            message = f"{message} ({detail})"
        super().__init__(message)


class InvalidSupport(CdrError, ValueError):
    pass


class GroupEmpty(CdrError, ValueError):
    pass

"""Exception hierarchy shared by all cdfilter modules."""


class CdFilterError(Exception):
    """Base class for every error raised by this package."""


class NonPositiveResistance(CdFilterError):
    pass


class ZeroInflowSolids(CdFilterError):
    pass


class InvalidVacuum(CdFilterError):
    pass


class UnsupportedResistanceMode(CdFilterError):
    pass


class ZeroSteadyFlow(CdFilterError):
    pass


class DegenerateLoop(CdFilterError):
    pass


class DegenerateStep(CdFilterError):
    pass


class Infeasible(CdFilterError):
    pass


class IterationLimit(CdFilterError):
    """Raised by the QP solver; carries the best feasible iterate found."""

    def __init__(self, message, x=None, report=None):
        super().__init__(message)
        self.x = x
        self.report = report


class NumericalBlowup(CdFilterError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ScenarioError(CdFilterError):
    """Malformed or inconsistent scenario file."""

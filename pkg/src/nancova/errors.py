"""Exception hierarchy shared by every module."""


class NancovaError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(NancovaError, ValueError):
    pass


class DegenerateCovariate(NancovaError):
    """The covariate block of the C matrix is singular or badly conditioned.

    Usually a covariate is constant within every group or two covariates are
    collinear after ranking.
    """


class DegenerateVariance(NancovaError):
    """A trace in the ATS denominator vanished (no variability left)."""


class DegenerateDraw(NancovaError):
    pass


class TooManyDegenerateDraws(NancovaError):
    pass


class InfeasibleCorrelation(NancovaError, ValueError):
    pass


class ParseError(NancovaError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ScenarioError(NancovaError, ValueError):
    pass

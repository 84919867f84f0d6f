"""Exception hierarchy shared by all modules."""


class TvissError(Exception):
    """Base class for library errors."""


class OutOfRange(TvissError, ValueError):
    pass


class NonFinite(TvissError, FloatingPointError):
    pass


class NotUniformlyStable(TvissError):
    pass


class InconclusiveHorizon(TvissError):
    pass


class SolverError(TvissError):
    pass


class StepTooLarge(SolverError):
    pass


class Escaped(SolverError):
    pass


class NotExponentiallyStable(TvissError):
    pass


class UnboundedGenerator(TvissError):
    pass


class BadEta(TvissError, ValueError):
    pass


class MissingLowerEnvelope(TvissError):
    pass


class GridTooCoarse(TvissError, ValueError):
    pass


class NotApplicable(TvissError):
    pass


class ConfigError(TvissError, ValueError):
    pass

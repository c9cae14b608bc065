"""Exception hierarchy shared by the whole package."""


class MaxSlopeError(Exception):
    """Base class for all errors raised by maxslope."""


class InvalidPointError(MaxSlopeError, ValueError):
    """A point does not belong to the space it is used with."""


class SpaceMismatchError(MaxSlopeError, ValueError):
    """A functional or curve is used with a point from a different space."""


class WellPosednessError(MaxSlopeError, ValueError):
    """The proximal step size lies outside the admissible window."""


class HypothesisError(MaxSlopeError, ValueError):
    """The exponent/convexity hypotheses of a transformation are violated."""


class ProximalError(MaxSlopeError, RuntimeError):
    """The inner proximal solver did not converge or diverged."""


class UnregisteredOracleError(MaxSlopeError, KeyError):
    """No closed-form flow is known for the requested combination."""


class ConfigError(MaxSlopeError, ValueError):
    """An experiment or functional configuration could not be parsed."""

"""Exception hierarchy shared across the package."""


class RepulsiveEnsembleError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(RepulsiveEnsembleError, ArithmeticError):
    pass


class NoConvergence(RepulsiveEnsembleError, ArithmeticError):
    pass


class NonFiniteValue(RepulsiveEnsembleError, ArithmeticError):
    pass


class DegenerateBandwidth(RepulsiveEnsembleError, ValueError):
    """The median heuristic collapsed to zero and no floor was configured."""


class RankDeficient(RepulsiveEnsembleError, ArithmeticError):
    pass


class ShapeMismatch(RepulsiveEnsembleError, ValueError):
    pass


class NonFiniteUpdate(RepulsiveEnsembleError, ArithmeticError):
    """A particle update produced NaN or inf.

    ``step`` carries the iteration index when raised from a training loop.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DivergentTrajectory(RepulsiveEnsembleError, ArithmeticError):
    pass


class InvalidConfig(RepulsiveEnsembleError, ValueError):
    """Configuration failed validation; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key

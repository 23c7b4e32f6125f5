"""Exception hierarchy shared by all modules."""


class CircleBreakError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(CircleBreakError, ValueError):
    """Invalid user-supplied parameters."""


class BreakCollision(CircleBreakError):
    """A point sits on the break orbit and no side was supplied."""


class BreakInInterior(CircleBreakError):
    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class PrecisionExhausted(CircleBreakError):
    """Gaps fell below the working-precision floor; raise precision_digits."""

    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level


class PeriodicOrbit(CircleBreakError):
    """An exact return was observed: the rotation number is rational."""


class Undecidable(CircleBreakError):
    """A sign could not be certified at working precision."""


class NonMonotoneBracket(CircleBreakError):
    pass


class InvalidDepth(CircleBreakError, ValueError):
    pass


class InsufficientData(CircleBreakError):
    pass


class DegenerateFit(CircleBreakError):
    pass


class OutOfFamily(CircleBreakError):
    pass


class CFMismatch(CircleBreakError):
    pass


class InsufficientLevels(CircleBreakError):
    pass


class DegenerateRegression(CircleBreakError):
    pass

"""Exception types raised across the package.

The CLI maps these onto its exit codes, so each failure family gets its own
class rather than a bare ``ValueError``.
"""


class NurbsError(Exception):
    """Base class for all package errors."""


class ContractError(NurbsError, ValueError):
    """Arguments violate a documented precondition (shape, count, range)."""


class DomainError(NurbsError, ValueError):
    """A parameter value lies outside the knot-vector domain."""

    def __init__(self, value, lo=0.0, hi=1.0):
        self.value = value
        super().__init__(f"parameter {value!r} outside domain [{lo}, {hi}]")


class EvaluationError(NurbsError, ArithmeticError):
    """Base for numerical failures during evaluation."""


class SingularWeightError(EvaluationError):
    """Rational denominator vanished (only possible with corrupted weights)."""


class SingularNormalError(EvaluationError):
    def __init__(self, u, v, magnitude):
        self.u, self.v = u, v
        super().__init__(f"degenerate tangent plane at (u, v) = ({u}, {v}), |Su x Sv| = {magnitude:.3e}")


class PoisonedGradientError(NurbsError, FloatingPointError):
    """Gradient contains NaN or Inf; parameters were left untouched."""


class FitAbortedError(NurbsError, RuntimeError):
    """Fit produced a non-finite loss. ``last_good`` holds the last finite state."""

    def __init__(self, message, last_good=None, iteration=None):
        super().__init__(message)
        self.last_good = last_good
        self.iteration = iteration


class UnsupportedStrategyError(ContractError):
    pass


class AmbiguousEdgeError(NurbsError, ValueError):
    def __init__(self, message, candidates):
        super().__init__(message)
        self.candidates = candidates


class FoldError(NurbsError, ArithmeticError):
    """Adjacent patch normals cancel on a shared edge."""


class ParseError(NurbsError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ParseError):
    """A structurally valid document violates a schema or domain invariant."""

    def __init__(self, field, message, line=None):
        self.field = field
        super().__init__(f"{field}: {message}", line)

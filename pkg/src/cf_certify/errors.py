"""Exception hierarchy shared by every module."""


class CertifyError(Exception):
    """Base class for all errors raised by cf_certify."""


class DomainError(CertifyError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConstraintError(CertifyError, ValueError):
    """A structural constraint on a model (e.g. zero coefficient sum) is violated."""


class InfeasibleError(CertifyError, ValueError):
    """The applicability window of a theorem is empty."""


class AlphaOutOfRange(DomainError):
    """The requested level is not strictly inside the applicability window."""

    def __init__(self, alpha, window):
        self.alpha = alpha
        self.window = window
        lo, hi = window
        super().__init__(f"alpha={alpha!r} must satisfy {lo!r} < alpha < {hi!r}")


class TransformDomainError(DomainError):
    """A transform was evaluated outside its validity domain."""


class MonotonicityError(CertifyError, ValueError):
    """A candidate transform is not strictly increasing where it must be."""


class KindError(CertifyError, TypeError):
    """The operation is not defined for this kind of transform."""


class NumericalError(CertifyError, ArithmeticError):
    """A numerical step failed (e.g. a singular matrix that survived a redraw)."""

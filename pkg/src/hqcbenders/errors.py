"""Exception hierarchy shared across the solver."""


class BendersError(Exception):
    """Base class for all solver errors."""


class DimensionMismatch(BendersError, ValueError):
    pass


class NumericalBreakdown(BendersError, ArithmeticError):
    pass


class InfeasibleError(BendersError):
    """The problem (or master problem) has no feasible point."""


class UnboundedError(BendersError):
    """The problem is unbounded below."""


class IterationCapExceeded(BendersError):
    """Raised when the outer loop hits its iteration cap.

    The partially built result (bounds, trace) is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class EmptyMatrix(BendersError, ValueError):
    pass


class InvalidCap(BendersError, ValueError):
    pass


class EmptySampleSet(BendersError, ValueError):
    pass


class SamplerFailure(BendersError):
    """Any backend failure that should trigger the selection fallback."""


class SizeCapExceeded(SamplerFailure):
    pass


class TransportError(SamplerFailure):
    pass


class ProtocolError(SamplerFailure):
    pass


class GenerationFailure(BendersError):
    pass


class InvalidInstance(BendersError, ValueError):
    pass

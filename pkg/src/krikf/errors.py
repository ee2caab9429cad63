"""Exception hierarchy.

Every error raised by the library derives from :class:`ReconstructionError`,
which is itself a ``ValueError`` so callers that only care about bad input can
catch the builtin.
"""


class ReconstructionError(ValueError):
    pass


class DimensionMismatch(ReconstructionError):
    pass


# graph validation

class IndexedGraphError(ReconstructionError):
    """Graph error that points at the first offending ``(row, col)`` pair."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NonSymmetric(IndexedGraphError):
    pass


class NegativeWeight(IndexedGraphError):
    pass


class NonzeroDiagonal(IndexedGraphError):
    pass


class NotSymmetric(ReconstructionError):
    pass


class EmptyPath(IndexedGraphError):
    pass


# kernels

class PStepPole(ReconstructionError):
    pass


class DegenerateKernel(ReconstructionError):
    pass


class AllZeroCoefficients(ReconstructionError):
    pass


class SingularKernel(ReconstructionError):
    pass


# filtering

class SingularInnovationCovariance(ReconstructionError):
    pass


class SlotOrderViolation(ReconstructionError):
    pass


class EmptyObservation(ReconstructionError):
    pass


class SingularSystem(ReconstructionError):
    pass


# kernel matching

class InfeasiblePoint(ReconstructionError):
    pass


class NoFeasibleDescent(ReconstructionError):
    pass


# synthetic data

class DisconnectedAfterRetries(ReconstructionError):
    pass


class SingularNoiseKernel(ReconstructionError):
    pass


# harness

class SampleCountExceedsNodes(ReconstructionError):
    pass


class ZeroDenominator(ReconstructionError):
    pass


class ConfigInvalid(ReconstructionError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class SlotError(ReconstructionError):
    """Wraps a failure inside a per-slot loop with the slot where it happened."""

    def __init__(self, slot, cause):
        super().__init__(f"slot {slot}: {type(cause).__name__}: {cause}")
        self.slot = slot
        self.cause = cause


class ParseError(ReconstructionError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RaggedRows(ParseError):
    pass


class NonNumeric(ParseError):
    pass

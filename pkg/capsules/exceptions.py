class CapsuleError(ValueError):
    """Base class for errors raised by the capsules library."""


class DegenerateScaleError(CapsuleError):
    pass


class SingularBasisError(CapsuleError):
    pass


class SinkhornError(CapsuleError):
    pass


class ZeroLineError(SinkhornError):
    pass


class SinkhornConvergenceError(SinkhornError):
    def __init__(self, deviation, iterations, partial=None):
        self.deviation = deviation
        self.iterations = iterations
        self.partial = partial
        super().__init__(
            f"Sinkhorn-Knopp did not converge after {iterations} iterations "
            f"(worst marginal deviation {deviation:.3e})"
        )


class UniverseMismatchError(CapsuleError):
    pass


class EmptySummaryError(CapsuleError):
    pass


class DatasetFormatError(CapsuleError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

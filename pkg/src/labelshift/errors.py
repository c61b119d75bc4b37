"""Exception types shared across the package."""


class LabelShiftError(Exception):
    """Base class for all errors raised by this package."""


class InvalidSpec(LabelShiftError):
    """A shift specification violates its parameter constraints."""


class UnsupportedClass(LabelShiftError):
    """Target puts mass on a class absent from the source distribution."""


class LengthMismatch(LabelShiftError):
    """Paired vectors differ in length."""


class EmptyInput(LabelShiftError):
    """An estimator received zero samples."""


class DimensionMismatch(LabelShiftError):
    """Array shapes are incompatible."""


class InvalidDelta(LabelShiftError):
    """Confidence parameter outside its admissible range."""


class InvalidParams(LabelShiftError):
    """Scalar parameters violate the contract of a formula evaluator."""


class NonConvergence(LabelShiftError):
    """Iterative solver hit its iteration cap above tolerance.

    Carries the best iterate found so callers can degrade gracefully.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class SingularConfusion(LabelShiftError):
    """Confusion matrix is numerically singular; plug-in inverse undefined."""


class Divergence(LabelShiftError):
    """Training loss became non-finite."""


class InvalidBeta(LabelShiftError):
    """Split fraction outside (0, 1)."""


class BadMagic(LabelShiftError):
    """IDX file does not start with the expected magic number."""


class CountMismatch(LabelShiftError):
    """IDX image and label files disagree on the sample count."""


class TruncatedFile(LabelShiftError):
    """IDX file ends before the declared payload."""


class BelowCritical(LabelShiftError):
    """sigma_min <= 1/sqrt(n_p): the weight-trust threshold is infinite."""


class DensityZero(LabelShiftError):
    """A conditional density evaluated to zero at a sampled point."""

"""Exception types shared across the package."""


class DegenerateInputError(ValueError):
    """Input has no spread (constant volume, constant histogram, ...)."""


class NiftiFormatError(ValueError):
    """File is not a readable NIfTI-1 image."""


class UnsupportedDatatypeError(NiftiFormatError):
    """NIfTI datatype code outside the supported set."""


class ForegroundDetectionError(ValueError):
    pass


class SliceSkipped(Exception):
    """Raised when a 2D slice does not qualify for a measurement.

    Not fatal: callers drop the slice and carry on.
    """


class AlignmentError(ValueError):
    """Two grids that must be congruent differ in shape or spacing."""


class UndefinedDistanceError(ValueError):
    pass


class LabelValidationError(ValueError):
    pass


class PairingError(ValueError):
    """Prediction and reference files cannot be matched one to one."""

    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class UndefinedCorrelationError(ValueError):
    pass

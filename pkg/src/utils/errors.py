"""Exception types raised across the CAiDC toolkit.

Every data-dependent failure derives from ``DataError`` so command handlers
can map it to exit code 2 with a single ``except`` clause.
"""


class CaidcError(Exception):
    """Base class for all toolkit errors"""


class DataError(CaidcError, ValueError):
    """Input data cannot be processed"""


class IoFailureError(CaidcError, OSError):
    """Reading or writing a file failed"""


# Model / fitting
class IllFormedModelError(DataError):
    """Rising inflection lies after the falling inflection (c/b > e/d)"""


class DegenerateProfileError(DataError):
    """Profile has zero range; nothing to fit"""


class LengthMismatchError(DataError):
    pass


# Slice processing
class GeometryError(DataError):
    """Matrices of a slice do not share dimensions or masks are inconsistent"""


class EmptyMaskError(DataError):
    pass


class AllCalcinateError(DataError):
    """Every lumen pixel exceeds the calcinate threshold"""


class EndpointCollapseError(DataError):
    """Transition endpoint shifted onto the inflection point"""


class InsufficientDataError(DataError):
    pass


# Hemodynamics
class DegeneratePlateauError(DataError):
    pass


class NonPositiveDiameterError(DataError):
    pass


class InsufficientSlicesError(DataError):
    pass


class InsufficientRowsError(DataError):
    pass


# Statistics
class EmptySampleError(DataError):
    pass


class AllZeroDifferencesError(DataError):
    pass


class TooFewGroupsError(DataError):
    pass


# NIfTI
class BadMagicError(DataError):
    pass


class UnsupportedDatatypeError(DataError):
    pass


class TruncatedDataError(DataError):
    pass


class DimMismatchError(DataError):
    pass


# Phantom
class ScenarioGeometryTooLargeForDimsError(DataError):
    pass


class LossyCastWarning(UserWarning):
    """Values were saturated while casting to an integer datatype"""

"""Exception hierarchy shared across the package."""


class GeomRetError(Exception):
    """Base class for every error raised by geomret."""


class NotPositiveDefinite(GeomRetError, ValueError):
    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


class EighNotConverged(GeomRetError, ArithmeticError):
    def __init__(self, residual, message=None):
        self.residual = residual
        super().__init__(message or f"eigendecomposition did not converge (residual {residual:.3e})")


class DimMismatch(GeomRetError, ValueError):
    pass


class InvalidComponentCount(GeomRetError, ValueError):
    pass


class DegenerateData(GeomRetError, ValueError):
    pass


class InsufficientData(GeomRetError, ValueError):
    pass


class DegenerateDiagonal(GeomRetError, ValueError):
    pass


class InvalidShrinkage(GeomRetError, ValueError):
    pass


class IncompatibleMetric(GeomRetError, ValueError):
    pass


class DuplicateItem(GeomRetError, ValueError):
    def __init__(self, item_id):
        self.item_id = item_id
        super().__init__(f"duplicate item id: {item_id!r}")


class UnknownCategory(GeomRetError, ValueError):
    pass


class FormatError(GeomRetError, ValueError):
    """A file does not follow (or cannot be written in) the expected layout."""


class CorruptIndex(FormatError):
    pass

"""Exception hierarchy shared by every subsystem."""


class TrimodalError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TrimodalError, ValueError):
    pass


class GeometryError(TrimodalError, ValueError):
    pass


class ParameterError(TrimodalError, ValueError):
    pass


class DataError(TrimodalError, ValueError):
    pass


class StateError(TrimodalError, RuntimeError):
    pass


class NonFiniteError(TrimodalError, FloatingPointError):
    pass


class NoInputError(TrimodalError, ValueError):
    """Fusion was asked to combine zero present modalities."""


class SplitError(TrimodalError, ValueError):
    pass


class DegenerateError(TrimodalError, ValueError):
    pass


class LoadError(TrimodalError, IOError):
    """Base for file-format problems; subclasses name the specific failure."""


class BadMagicError(LoadError):
    pass


class UnknownVersionError(LoadError):
    pass


class TruncatedError(LoadError):
    pass


class FieldOverflowError(LoadError):
    pass


class MissingFileError(LoadError):
    pass


class NonSquareError(LoadError):
    pass


class BadMaxvalError(LoadError):
    pass


class BadLabelError(LoadError):
    pass


class RaggedTimestepsError(LoadError):
    pass


class InconsistentLabelError(LoadError):
    pass


class NonNumericError(LoadError):
    pass

"""Exception hierarchy shared by every mshaz module."""


class MshazError(Exception):
    """Base class for library errors."""


class InvalidParameterError(MshazError, ValueError):
    """A parameter is non-finite or outside its admissible range."""


class InvalidArgumentError(MshazError, ValueError):
    """Arguments are individually valid but incompatible (e.g. mismatched grids)."""


class UnsupportedOperationError(MshazError):
    """The operation is not defined for this input (e.g. normalising an improper density)."""


class ConfigurationError(MshazError):
    """A model specification is incomplete or inconsistent."""


class RouteEvaluationError(MshazError):
    """Evaluation of one route of a system failed."""

    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"route {index}: {cause}")

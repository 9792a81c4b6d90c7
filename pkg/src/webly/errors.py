"""Exception types shared across the pipeline."""


class WeblyError(Exception):
    """Base class for pipeline errors."""


class DataError(WeblyError):
    """Input data is missing, unreadable or unusable (CLI exit status 2)."""


class MalformedRecord(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class UndefinedDistance(WeblyError):
    """A term has zero document frequency, so NGD is undefined."""


class UndecodableImage(DataError):
    pass


class DegenerateTrainingSet(WeblyError):
    pass


class InsufficientNegatives(DataError):
    pass


class DimensionMismatch(WeblyError):
    pass


class ProviderFailure(WeblyError):
    pass


class EmptySurvivorSet(WeblyError):
    """Progressive pruning removed every image of a variation.

    The trace of the failed run is attached so callers can still record it.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class SourceUnavailable(DataError):
    pass


class NoSurvivingVariations(DataError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step

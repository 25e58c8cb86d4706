"""Exception hierarchy shared across the package."""


class BlockstabError(Exception):
    """Base class for all package errors."""


class ParseError(BlockstabError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyNetworkError(BlockstabError):
    pass


class UndefinedDensityError(BlockstabError):
    pass


class InvalidPeriodError(BlockstabError):
    pass


class InvalidDissimilarityError(BlockstabError):
    pass


class InvalidImageError(BlockstabError):
    pass


class PartitionMismatchError(BlockstabError):
    """Partition does not cover the expected unit set."""


class InfeasibleError(BlockstabError):
    pass


class UndefinedIndexError(BlockstabError):
    """Index has a zero denominator; distinct from a value of 0."""


class UndefinedAdjustmentError(BlockstabError):
    pass


class SingularDesignError(BlockstabError):
    def __init__(self, message, columns=()):
        self.columns = list(columns)
        super().__init__(message)


class EmptyDiagramError(BlockstabError):
    pass

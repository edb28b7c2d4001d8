"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes or requested dimensions are incompatible."""


class RankError(ValueError):
    """A matrix has lower rank than an operation needs."""


class ClusteringError(RuntimeError):
    """K-means ended with an empty cluster."""


class ArchitectureError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None,
                 fl_round: int | None = None, client: str | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.fl_round = fl_round
        self.client = client


class AggregationError(ValueError):
    pass


class JournalParseError(ValueError):
    """A journal CSV row could not be parsed."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UndefinedMetricError(ValueError):
    pass


class JournalValidationError(ValueError):
    """A journal CSV row parsed but violates a constraint (e.g. amount <= 0)."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line

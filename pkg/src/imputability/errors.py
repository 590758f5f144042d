"""Exception types shared across the package.

Everything derives from DataError so callers can catch one base class at
pipeline boundaries while tests can assert the precise failure mode.
"""


class DataError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(DataError):
    """Duplicate, unknown, or missing columns; bad role names."""


class IngestionError(DataError):
    """A cell or row of an input file could not be parsed."""


class DegenerateColumnError(DataError):
    """A column (or a pairwise overlap) has no usable variation."""


class OverlapError(DataError):
    """Two columns share too few jointly observed rows."""


class ContractError(DataError):
    """An operation's precondition was violated by the inputs."""


class ConvergenceError(DataError):
    """An iterative fit ran out of iterations.

    Carries enough context to diagnose the failure: for NIPALS the component
    index and the final score delta, for EM the log-likelihood trace.
    """

    def __init__(self, message, component=None, delta=None, trace=None):
        super().__init__(message)
        self.component = component
        self.delta = delta
        self.trace = trace


class FitError(DataError):
    """A regression could not be fit (singular design, too few donors)."""


class PipelineError(DataError):
    """A pipeline stage failed; names the stage and replicate."""

    def __init__(self, message, stage=None, replicate=None):
        super().__init__(message)
        self.stage = stage
        self.replicate = replicate

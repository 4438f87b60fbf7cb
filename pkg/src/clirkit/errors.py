"""Exception types shared across the engine.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
anything else -> 3.
"""


class EngineError(Exception):
    """Base class for all errors raised deliberately by the engine."""


class UsageError(EngineError):
    """A caller invoked an operation with unusable arguments."""


class DataError(EngineError):
    """Input data violated a documented contract (format, invariant, range)."""

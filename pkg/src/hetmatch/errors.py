"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: UsageError -> 1, DataError (and
subclasses) -> 2, NumericError / SearchLimitError -> 3.
"""


class HetmatchError(Exception):
    """Base class for all toolkit errors."""


class UsageError(HetmatchError):
    """Bad command-line arguments or an inconsistent configuration."""


class DataError(HetmatchError):
    """Malformed, missing, or inconsistent input data."""


class GraphFormatError(DataError):
    """A graph document violates the JSON schema or a graph invariant."""


class SizeBoundError(HetmatchError):
    """An exact solver was asked to exceed its enumeration bound."""


class SearchLimitError(HetmatchError):
    """The A* solver hit its expansion limit before proving optimality."""

    def __init__(self, limit: int):
        super().__init__(f"search limit of {limit} states exceeded")
        self.limit = limit


class NumericError(HetmatchError):
    """A numeric failure: divergence, non-finite loss, failed gradient check."""

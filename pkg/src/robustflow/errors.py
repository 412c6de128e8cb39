"""Exception types raised across the pipeline."""

from __future__ import annotations


class RobustFlowError(Exception):
    """Base class for all library errors."""


class UnsortedInput(RobustFlowError, ValueError):
    pass


class TooFewPoints(RobustFlowError, ValueError):
    pass


class EmptyReference(RobustFlowError, ValueError):
    pass


class SymbolOutOfAlphabet(RobustFlowError, ValueError):
    pass


class AlphabetMismatch(RobustFlowError, ValueError):
    pass


class NoPeriodAvailable(RobustFlowError, ValueError):
    pass


class EmptyFamily(RobustFlowError, ValueError):
    pass


class TooLarge(RobustFlowError, ValueError):
    pass


class Infeasible(RobustFlowError):
    """Some reference windows are not covered by any candidate PL.

    ``windows`` holds the offending window indices so callers can report
    them (the usual fix is a larger threshold or more candidates).
    """

    def __init__(self, windows):
        self.windows = list(windows)
        shown = ", ".join(str(w) for w in self.windows[:20])
        more = "" if len(self.windows) <= 20 else f" (+{len(self.windows) - 20} more)"
        super().__init__(f"{len(self.windows)} window(s) cannot be covered: {shown}{more}")

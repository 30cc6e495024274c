class BinmetricsError(Exception):
    """Base class for every error raised by binmetrics."""


class InputError(BinmetricsError):
    """A file could not be read or parsed."""

    def __init__(self, message, source=None, line=None):
        self.message = message
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


class ListingParseError(InputError, ValueError):
    pass


class TraceParseError(InputError, ValueError):
    pass


class InvariantError(BinmetricsError):
    """Structurally valid input that breaks a model invariant."""


class ListingInvariantError(InvariantError, ValueError):
    def __init__(self, message, routine=None):
        self.routine = routine
        super().__init__(f"routine {routine!r}: {message}" if routine else message)


class CfgError(InvariantError, ValueError):
    pass


class CoverageError(InputError, ValueError):
    """A trace that does not belong to the listing it is mapped onto."""


class StateError(InputError):
    pass


class DigestMismatchError(InvariantError):
    pass


class UnknownMetricError(BinmetricsError, KeyError):
    def __str__(self):
        return self.args[0] if self.args else "unknown metric"


class EvaluationError(InputError):
    pass

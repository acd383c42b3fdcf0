"""Exception types that the CLI maps onto exit codes."""


class ConfigError(ValueError):
    """Bad or conflicting configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Unreadable or inconsistent dataset (CLI exit code 3)."""


class MalformedRecordError(DataError):
    """A single bad record inside an event file.

    Carries the offending file and 1-based line number so the message
    points at the exact record.
    """

    def __init__(self, path, lineno, reason):
        self.path = str(path)
        self.lineno = lineno
        self.reason = reason
        super().__init__(f"{self.path}:{lineno}: {reason}")

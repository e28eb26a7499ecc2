"""Exception types shared across the package."""


class HybridIRError(Exception):
    """Base class for all errors raised by hybridir."""


class ParseError(HybridIRError, ValueError):
    """A file could not be parsed. Carries the offending line number when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        where = ""
        if self.path is not None:
            where = f"{self.path}"
            if line is not None:
                where += f", line {line}"
            where += ": "
        super().__init__(where + message)


class ValidationError(HybridIRError, ValueError):
    """Input violates a documented invariant."""


class FormatError(HybridIRError, ValueError):
    """Binary file has the wrong magic bytes, version or layout."""


class ArtifactMissingError(HybridIRError, FileNotFoundError):
    """A file referenced by a benchmark config does not exist."""

    def __init__(self, dataset: str, path):
        self.dataset = dataset
        self.path = str(path)
        super().__init__(f"dataset {dataset!r}: missing file {self.path}")

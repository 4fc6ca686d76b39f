"""Exception hierarchy shared across the package."""
from __future__ import annotations


class AuroraError(ValueError):
    """Base class for all input and configuration errors raised here."""


class NonFinite(AuroraError):
    pass


class TooFewReplicates(AuroraError):
    pass


class Empty(AuroraError):
    pass


class IndexOutOfRange(AuroraError):
    pass


class ArityTooLarge(AuroraError):
    pass


class SubsetExplosion(AuroraError):
    pass


class DimensionMismatch(AuroraError):
    pass


class KMaxTooLarge(AuroraError):
    pass


class KOutOfRange(AuroraError):
    pass


class NonPositiveData(AuroraError):
    pass


class KTooSmall(AuroraError):
    pass


class LengthMismatch(AuroraError):
    pass


class InvalidConfig(AuroraError):
    """Bad scenario or config document; ``path`` names the offending key."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ParseError(AuroraError):
    def __init__(self, message: str, line: int, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")


class RaggedRows(AuroraError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


class RegressorFailure(AuroraError):
    """A regressor raised while fitting the split for held-out replicate ``j``."""

    def __init__(self, j: int, cause: Exception):
        self.j = j
        self.cause = cause
        super().__init__(f"regressor failed for held-out replicate j={j}: {cause}")


class ScenarioFailure(AuroraError):
    """A method failed inside a simulation replicate."""

    def __init__(self, method: str, rep: int, cause: Exception):
        self.method = method
        self.rep = rep
        self.cause = cause
        super().__init__(f"method {method!r} failed in rep {rep}: {cause}")

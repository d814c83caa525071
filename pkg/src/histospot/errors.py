"""Exception hierarchy shared by all pipeline stages."""


class HistospotError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(HistospotError, ValueError):
    """A raw input file could not be parsed (bad row, bad token, empty file)."""


class SchemaError(HistospotError, ValueError):
    """A structured input is missing required columns or named arrays."""


class ValidationError(HistospotError, ValueError):
    """Parsed data violates a declared invariant (duplicates, negatives)."""


class IntegrityError(HistospotError, RuntimeError):
    """An on-disk archive failed its checksum verification."""


class EmptyDatasetError(HistospotError, ValueError):
    """A filtering step removed every gene or every spot."""


class InsufficientTissueError(HistospotError, ValueError):
    """Too few tissue pixels survive optical-density masking."""


class DegenerateStainError(HistospotError, ValueError):
    """A stain profile has a zero concentration scale and cannot normalize."""


class ConfigError(HistospotError, ValueError):
    """Model or pipeline configuration is internally inconsistent."""


class NumericError(HistospotError, ArithmeticError):
    """Non-finite values appeared where finite numbers are required."""


class StaleCacheError(HistospotError, RuntimeError):
    """A backward pass was given a cache from a different forward call."""

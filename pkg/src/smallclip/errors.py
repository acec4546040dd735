"""Exception hierarchy. Everything raised on purpose derives from SmallclipError."""


class SmallclipError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(SmallclipError):
    """A file could not be parsed (bad JSON, bad CSV, bad key=value line)."""


class DataValidationError(SmallclipError):
    """A dataset violates a structural invariant (dimensions, duplicate ids, ...)."""


class ConfigError(SmallclipError):
    """A configuration value is out of range or inconsistent."""


class ContractError(SmallclipError):
    """A caller violated an operation precondition (shape mismatch, empty input, ...)."""


class TrainingError(SmallclipError):
    """Training could not proceed or diverged (empty split, non-finite loss/grad)."""

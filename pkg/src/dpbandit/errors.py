"""Exception types shared across the package."""


class DpBanditError(Exception):
    """Base class for all dpbandit errors."""


class InvalidParams(DpBanditError, ValueError):
    """A parameter is outside its documented domain."""


class UnsupportedCombination(DpBanditError, ValueError):
    """The requested (trust model, mechanism) pairing is not defined."""


class HorizonTooSmall(InvalidParams):
    """The horizon cannot accommodate even the first batch."""


class ConfigError(DpBanditError, ValueError):
    """An experiment config file failed to parse or validate."""


class SchemaError(DpBanditError, ValueError):
    """A results CSV does not carry the expected schema tag or columns."""

"""Typed errors shared across the package.

Two families matter to callers: ``ConfigError`` (bad specs, bad parameters,
exit code 2 in the CLI) and ``DataError`` (legal request, unusable data,
exit code 3). Every concrete error keeps its class name stable because the
service and CLI report errors by name.
"""


class PriorFillError(Exception):
    """Base class for all package errors."""


class ConfigError(PriorFillError):
    """A spec, parameter, or configuration value is illegal."""


class DataError(PriorFillError):
    """Inputs are structurally legal but cannot be processed."""


# -- configuration / contract violations (exit 2) --------------------------

class BadSpec(ConfigError):
    pass


class BadRange(ConfigError):
    pass


class OutOfBounds(ConfigError):
    pass


class NonPositiveDepth(ConfigError):
    pass


class DuplicateCoordinate(ConfigError):
    pass


class NonPositiveScale(ConfigError):
    pass


# -- data problems (exit 3) -------------------------------------------------

class DimensionMismatch(DataError):
    pass


class NotEnoughPixels(DataError):
    pass


class EmptyPrior(DataError):
    pass


class NoSamples(DataError):
    pass


class Empty(DataError):
    pass


class Degenerate(DataError):
    pass


class EmptyEvaluationSet(DataError):
    pass


class NonPositiveValue(DataError):
    pass


class BadHeader(DataError):
    pass


class TruncatedPayload(DataError):
    pass


class UnsupportedChannels(DataError):
    pass


class BadImage(DataError):
    pass


_BY_NAME = {
    cls.__name__: cls
    for cls in list(ConfigError.__subclasses__()) + list(DataError.__subclasses__())
}


def by_name(name: str) -> type[PriorFillError] | None:
    """Look up a concrete error class by its stable name."""
    return _BY_NAME.get(name)


def exit_code_for(exc: BaseException) -> int:
    """CLI exit code convention: 2 config errors, 3 data errors, 1 otherwise."""
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, DataError):
        return 3
    return 1

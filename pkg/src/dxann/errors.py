"""Exception types raised across the package."""


class DxannError(Exception):
    """Base class for all errors raised by dxann."""


class DimensionError(DxannError, ValueError):
    """Shapes or lengths do not agree."""


class DomainError(DxannError, ValueError):
    """A value lies outside the domain of an operation (e.g. log of x <= 0)."""


class ContractError(DxannError, ValueError):
    """A caller broke a documented precondition."""


class ConfigurationError(DxannError, ValueError):
    """An unsupported or inconsistent configuration was requested."""


class FormatError(DxannError, ValueError):
    """A file on disk is malformed, truncated or inconsistent."""

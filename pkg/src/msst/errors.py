class MSSTError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MSSTError, ValueError):
    pass


class ConfigError(MSSTError, ValueError):
    pass


class GraphError(MSSTError, ValueError):
    pass


class DataError(MSSTError, ValueError):
    pass


class OracleInvalidError(MSSTError, RuntimeError):
    """The function handed to the finite-difference oracle is not deterministic."""


class NonFiniteError(MSSTError, FloatingPointError):
    pass

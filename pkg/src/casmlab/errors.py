"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Raised when tensor or array shapes are incompatible."""


class LabelError(ValueError):
    """Raised when a class label falls outside ``[0, num_classes)``."""


class ContractError(RuntimeError):
    """Raised when a caller violates an operation's precondition."""


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration values."""


class DivergenceError(RuntimeError):
    """Raised when a training loss becomes non-finite."""

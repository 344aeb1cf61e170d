"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad user input: malformed dataset, config value out of range, etc."""


class DimensionError(ValidationError):
    """Two arrays (or an array and a model) disagree on shape."""


class ControllerStateError(RuntimeError):
    """An RL controller was asked to act after it had terminated."""

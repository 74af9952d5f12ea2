"""Exception types shared by the library and the command line."""


class ConfigError(ValueError):
    """Invalid detector, model, hazard or prior configuration."""


class DataError(ValueError):
    """An observation or input file the detector cannot use."""


class NumericalError(ArithmeticError):
    """The recursion lost all probability mass."""

"""Exception hierarchy shared by every mcan module."""


class McanError(Exception):
    """Base class for all library errors."""


class DimensionError(McanError, ValueError):
    pass


class ContractError(McanError, ValueError):
    """A caller violated a documented precondition."""


class DegenerateRowError(McanError, ValueError):
    pass


class CategoryLookupError(McanError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ParseError(McanError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(McanError, ValueError):
    pass


class ConfigError(McanError, ValueError):
    pass


class SamplingError(McanError, ValueError):
    pass


class AblationError(McanError, RuntimeError):
    """Raised when the category prediction layer is requested but disabled."""


class CheckpointError(McanError, ValueError):
    pass


class CompletionError(McanError, RuntimeError):
    pass

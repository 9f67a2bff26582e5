"""Exception types raised across the package."""


class ModelError(ValueError):
    """Base class for invalid factor graphs and model files."""


class NonPositiveEntry(ModelError):
    pass


class ScopeMismatch(ModelError):
    pass


class UnknownVariable(ModelError):
    pass


class StructureMismatch(ModelError):
    pass


class ShapeMismatch(ModelError):
    pass


class ParseError(ModelError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class TooLarge(ValueError):
    pass


class WidthTooLarge(ValueError):
    pass


class MissingVariable(KeyError):
    pass


class EmptyInput(ValueError):
    pass


class DidNotConverge(RuntimeError):
    pass

class ConfigurationNotFound(Exception):
    pass


class ParameterError(Exception):
    pass


class ShapeError(ParameterError):
    pass


class SpaceTooLarge(ParameterError):
    pass


class ParseError(ParameterError):
    def __init__(self, line: int, message: str, path: str = None):
        self.line = line
        self.message = message
        self.path = path
        location = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"{location}: {message}")


class NumericError(Exception):
    pass


class RankError(NumericError):
    pass

"""Exception hierarchy shared by all subpackages."""


class MSSGNError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(MSSGNError, ValueError):
    pass


class ConfigurationError(MSSGNError, ValueError):
    pass


class DataError(MSSGNError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class SchemaVersionError(DataError):
    pass


class ProtocolError(DataError):
    pass


class TrainingError(MSSGNError, RuntimeError):
    pass

"""Exception hierarchy. Everything raised on bad inputs derives from OccurlensError."""


class OccurlensError(Exception):
    """Base class for data and validation failures (CLI exit code 2)."""


class ParseError(OccurlensError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class SchemaError(OccurlensError):
    pass


class LookupFailure(OccurlensError, LookupError):
    pass


class DomainError(OccurlensError, ValueError):
    pass


class ParameterError(OccurlensError, ValueError):
    pass


class DegenerateInputError(OccurlensError, ValueError):
    pass


class AssignmentError(OccurlensError):
    pass


class DivergenceError(OccurlensError, FloatingPointError):
    def __init__(self, epoch, message="non-finite training loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


class StageError(OccurlensError):
    """Wraps a failure inside a pipeline stage with its location."""

    def __init__(self, stage, station_id, cause):
        where = f"stage '{stage}'" + (f", station '{station_id}'" if station_id else "")
        super().__init__(f"{where}: {cause}")
        self.stage = stage
        self.station_id = station_id
        self.cause = cause

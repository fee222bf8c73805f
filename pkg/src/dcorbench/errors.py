"""Exception hierarchy shared by all modules."""


class DcorError(Exception):
    """Base class for every error raised by dcorbench."""


class ContractError(DcorError, ValueError):
    """A caller violated a documented precondition."""


class IntrinsicsParseError(DcorError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IntrinsicsValidationError(DcorError, ValueError):
    pass


class FormatError(DcorError, ValueError):
    """Raw video data does not match the declared geometry."""


class DecodeError(DcorError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class AdapterError(DcorError):
    """An external encoder/decoder run failed."""

    def __init__(self, message, logs=""):
        self.logs = logs
        if logs:
            message = f"{message}\n--- captured output ---\n{logs}"
        super().__init__(message)


class ConfigError(DcorError, ValueError):
    pass


class MetricError(DcorError, ValueError):
    pass

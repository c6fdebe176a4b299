"""Exception hierarchy shared by every wicketlens module."""


class WicketLensError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(WicketLensError, ValueError):
    pass


class InvalidParameterError(WicketLensError, ValueError):
    pass


class InvalidRoiError(InvalidInputError):
    pass


class ValidationError(InvalidInputError):
    pass


class ParseError(InvalidInputError):
    """Malformed text input; carries the offending 1-based line number when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip() if where else message)


class EmptyInputError(InvalidInputError):
    pass


class LayoutError(InvalidInputError):
    pass


class SequencingError(WicketLensError):
    pass


class OcrEngineError(WicketLensError):
    pass


class ExternalToolError(WicketLensError):
    pass

"""Exception hierarchy shared by all modules."""


class QfeError(Exception):
    pass


class ResourceError(QfeError):
    """A state would exceed the configured qubit budget."""


class ShapeError(QfeError, ValueError):
    pass


class KeyReuseError(QfeError):
    """A single-use key, simulator state or program was used twice."""


class UnsupportedError(QfeError):
    """The requested circuit class or mode is outside what is implemented."""


class ParseError(QfeError, ValueError):
    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (at offset {offset})")
        self.offset = offset


class CorruptBundle(QfeError):
    pass

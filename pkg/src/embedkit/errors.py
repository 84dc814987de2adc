"""Exception hierarchy shared across the package."""


class EmbedKitError(Exception):
    """Base class for all embedkit errors."""


class FormatError(EmbedKitError):
    """File has wrong magic bytes or an unsupported version."""


class TruncatedFileError(EmbedKitError):
    """File ended before the declared payload was read."""


class IntegrityError(EmbedKitError):
    """Data violates an invariant (duplicate ids, non-finite values, ...)."""


class DegenerateVectorError(EmbedKitError):
    """A vector with (near-)zero norm where a direction is required."""

    def __init__(self, message, vector_id=None):
        super().__init__(message)
        self.vector_id = vector_id


class ParseError(EmbedKitError):
    """Malformed manifest or catalog input."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class AlignmentError(EmbedKitError):
    """Two collections that must share a key set do not."""


class EmptyUniverseError(EmbedKitError):
    """An operation needs at least one candidate and got none."""


class DivergenceError(EmbedKitError):
    """Training produced a non-finite loss."""

    def __init__(self, message, last_params=None, epoch=None):
        super().__init__(message)
        self.last_params = last_params
        self.epoch = epoch

"""Exception hierarchy shared by all flowembed modules."""


class FlowEmbedError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FlowEmbedError, ValueError):
    """Bad field name, mismatched dimensionality, invalid pipeline options."""


class PreconditionError(FlowEmbedError, ValueError):
    """An operation was called with arguments outside its contract."""


class FormatError(FlowEmbedError, ValueError):
    """A field, matrix, embedding or volume file could not be parsed.

    ``offset`` is the byte offset at which parsing failed, when known.
    """

    def __init__(self, message, offset=None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.offset = offset
        self.path = path


class InvariantError(FlowEmbedError, RuntimeError):
    """A structural invariant (zero row/column, asymmetry) does not hold."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class ConvergenceError(FlowEmbedError, RuntimeError):
    """The eigensolver hit its iteration cap.

    ``pairs`` holds whatever eigenpairs did converge and ``residuals`` the
    residual norms of all requested Ritz pairs at the final iteration.
    """

    def __init__(self, message, pairs=(), residuals=()):
        super().__init__(message)
        self.pairs = list(pairs)
        self.residuals = list(residuals)


class StageError(FlowEmbedError, RuntimeError):
    """Wraps a module error raised inside one pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class DisconnectedDomainWarning(UserWarning):
    """The Laplacian kernel has dimension above one (disconnected cell graph)."""


class SelectionClampWarning(UserWarning):
    """More embeddings were requested than non-constant eigenvectors exist."""

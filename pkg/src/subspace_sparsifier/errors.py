"""Exception hierarchy shared by every module."""


class SparsifierError(Exception):
    pass


class GraphError(SparsifierError, ValueError):
    """Malformed graph input or an invalid surgery request."""


class UnknownEdgeError(GraphError, KeyError):
    pass


class DisconnectedGraphError(SparsifierError):
    """Raised lazily by spectral operations on a disconnected graph."""


class CapExceededError(SparsifierError):
    """A dense or brute-force path was asked to handle an instance above its cap."""


class SolverError(SparsifierError):
    """Linear solver could not reach its (clamped) target accuracy."""


class SubsampleError(SparsifierError):
    """Subsample gave up after its retry cap."""


class EmptyOracleError(SparsifierError):
    """The steady oracle returned no edges; the instance is degenerate."""


class ParseError(SparsifierError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)

"""Exception types shared across the package."""


class SparseRepairError(Exception):
    """Base class for all errors raised by this package."""


class GraphError(SparseRepairError):
    """Invalid model graph: unknown layer kind, dangling input, bad topology."""


class ShapeMismatch(SparseRepairError):
    """Tensor shapes incompatible with an operation; message names the node."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class FormatError(SparseRepairError):
    """Corrupt or malformed SPM/TNS file; carries the byte offset if known."""

    def __init__(self, message, path=None, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
        self.offset = offset

"""Exception types shared across the package."""


class ParseError(ValueError):
    """Malformed input file; carries the offending 1-based line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class BoundsError(ValueError):
    """A node index fell outside [0, num_nodes)."""


class ShapeError(ValueError):
    """Array dimensions do not match what the operation requires."""


class UndefinedMetricError(ValueError):
    """Metric is undefined for this input (e.g. no edges, single-class labels)."""


class NonFiniteLossError(FloatingPointError):
    """Training produced NaN/inf; message carries epoch and parameter norms."""

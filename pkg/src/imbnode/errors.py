"""Exception types shared across the package."""


class ImbnodeError(Exception):
    """Base class for package-specific errors."""


class GraphFormatError(ImbnodeError, ValueError):
    """Malformed dataset file; message carries the offending line number."""


class GraphRangeError(ImbnodeError, ValueError):
    """Node id outside the declared node count."""


class ShapeError(ImbnodeError, ValueError):
    """Operand shapes do not conform; message names the operation."""


class NonFiniteError(ImbnodeError, FloatingPointError):
    """A forward op produced NaN or Inf."""


class DenseCapError(ImbnodeError, ValueError):
    """Graph too large to densify for the reconstruction loss."""


class TrainingDiverged(ImbnodeError, RuntimeError):
    """Training loss became non-finite or exploded."""

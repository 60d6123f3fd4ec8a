"""Exception types shared across the toolkit."""


class PorosgpError(Exception):
    """Base class for all toolkit errors."""


class InvalidParams(PorosgpError):
    """Parameters outside their admissible box or malformed configuration."""


class NotPositiveDefinite(PorosgpError):
    """A tensor required to be symmetric positive definite is not."""


class NonInvertibleTensor(PorosgpError):
    """A coefficient tensor could not be inverted at catalogue construction."""


class DisconnectedSolid(PorosgpError):
    """Solid phase of a unit cell does not percolate in all three axes."""


class NoFluidPhase(PorosgpError):
    """Flow problem requested on a cell without fluid voxels."""


class OutOfBox(PorosgpError):
    """Interpolation query outside the sampled parameter range."""


class SingularSystem(PorosgpError):
    """A linear system could not be solved to the requested tolerance."""


class FormatVersionMismatch(PorosgpError):
    """Catalogue container has an unknown magic or format version."""


class ChecksumFailure(PorosgpError):
    """Catalogue container bytes do not match the stored checksum."""


class BisectionBracketFailure(PorosgpError):
    """Resource multiplier bracket could not be expanded to a feasible point."""


class NonDescentAfterMaxRetries(PorosgpError):
    """Globalization retries exhausted without finding a descent step."""

"""Two-scale porous material design toolkit.

Offline: homogenize parameterized unit cells into effective poroelastic
coefficients and tabulate them in interpolated catalogues. Online: optimize
the per-element microstructure of a macroscopic domain by sequential global
programming, trading structural compliance against drained fluid flux.
"""

from .errors import (
    PorosgpError,
    InvalidParams,
    NotPositiveDefinite,
    NonInvertibleTensor,
    DisconnectedSolid,
    NoFluidPhase,
    OutOfBox,
    SingularSystem,
    FormatVersionMismatch,
    ChecksumFailure,
    BisectionBracketFailure,
    NonDescentAfterMaxRetries,
)

__version__ = "0.1.0"

__all__ = [
    "PorosgpError",
    "InvalidParams",
    "NotPositiveDefinite",
    "NonInvertibleTensor",
    "DisconnectedSolid",
    "NoFluidPhase",
    "OutOfBox",
    "SingularSystem",
    "FormatVersionMismatch",
    "ChecksumFailure",
    "BisectionBracketFailure",
    "NonDescentAfterMaxRetries",
    "__version__",
]

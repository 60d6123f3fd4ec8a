"""Scan backend selection.

The compiled extension is preferred when it built; set POROSGP_SCAN=numpy
to force the pure numpy fallback (any other value selects the default).
"""

import os

import numpy as np

from . import scan_numpy

try:
    from . import _scan
except ImportError:
    _scan = None


def scan_backend():
    """Name of the active backend, 'compiled' or 'numpy'."""
    if os.environ.get("POROSGP_SCAN", "").strip().lower() == "numpy":
        return "numpy"
    return "compiled" if _scan is not None else "numpy"


def scan_scores(weights, feats, threads=1):
    """Rowwise argmin of W F^T; returns (indices, values)."""
    if scan_backend() == "compiled":
        w = np.ascontiguousarray(weights, dtype=np.float64)
        f = np.ascontiguousarray(feats, dtype=np.float64)
        return _scan.scan_scores(w, f, int(threads))
    return scan_numpy.scan_scores(weights, feats, threads)

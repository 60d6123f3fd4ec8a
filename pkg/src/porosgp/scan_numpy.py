"""Pure numpy candidate scan, the fallback when the extension is not built.

Chunks the candidate axis so the dense score block stays small, and keeps
the running minimum with a strict comparison so ties resolve to the lowest
candidate index, matching the serial compiled kernel.
"""

import numpy as np

CHUNK = 2048


def scan_scores(weights, feats, threads=1):
    """First index (and value) of the minimal score w . f per weight row."""
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    feats = np.ascontiguousarray(feats, dtype=np.float64)
    if weights.shape[1] != feats.shape[1]:
        raise ValueError("weights and features disagree on feature count")
    ne = weights.shape[0]
    nc = feats.shape[0]
    best = np.zeros(ne, dtype=np.int64)
    bestval = np.full(ne, np.inf)
    rows = np.arange(ne)
    for start in range(0, nc, CHUNK):
        block = feats[start:start + CHUNK]
        scores = weights @ block.T
        idx = np.argmin(scores, axis=1)
        val = scores[rows, idx]
        better = val < bestval
        best[better] = start + idx[better]
        bestval[better] = val[better]
    return best, bestval

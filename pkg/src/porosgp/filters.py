"""Neighborhood roughness of per-element design label fields.

A row-stochastic cone filter F averages each element's labels over the
elements within the filter radius (linear decay, self included). The
roughness of a label field R is Xi = 1/2 * sum_l |(I - F) R_l|^2. The
residual (I - F) R is accumulated in difference form, sum_j F_ij
(R_i - R_j) over neighbor pairs, so a homogeneous field has exactly zero
roughness regardless of rounding.

For the separable subproblem the change of Xi under a single-element label
swap is an exact quadratic: swapping element e to label x changes Xi by
a_e x^2 + b_el x_l + const with a_e = s_e / 2 from the squared column
norms of I - F and b_el = ((I - F)^T (I - F) R)_el - R_el s_e.
"""

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree


class ConeFilter:
    """Linearly decaying neighborhood filter over element centers."""

    def __init__(self, centers, radius=1.3):
        centers = np.asarray(centers, dtype=float)
        self.n = centers.shape[0]
        self.radius = float(radius)
        tree = cKDTree(centers)
        pairs = tree.query_pairs(self.radius, output_type="ndarray")
        if pairs.size:
            d = np.linalg.norm(centers[pairs[:, 0]] - centers[pairs[:, 1]],
                               axis=1)
            w = self.radius - d
            keep = w > 0.0
            pairs, w = pairs[keep], w[keep]
        else:
            pairs = pairs.reshape(0, 2)
            w = np.zeros(0)
        # both orientations of each neighbor pair; self weight = radius
        self.rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        self.cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        vals = np.concatenate([w, w])
        wsum = np.full(self.n, self.radius)
        np.add.at(wsum, self.rows, vals)
        self.vals = vals / wsum[self.rows]

    def residual(self, labels):
        """(I - F) R accumulated as sum_j F_ij (R_i - R_j) per row."""
        labels = np.asarray(labels, dtype=float)
        out = np.zeros_like(labels)
        diffs = self.vals[:, None] * (labels[self.rows] - labels[self.cols])
        np.add.at(out, self.rows, diffs)
        return out

    def roughness(self, labels):
        """Xi = 1/2 |(I - F) R|_F^2; exactly zero for homogeneous labels."""
        r = self.residual(labels)
        return 0.5 * float(np.sum(r * r))

    @property
    def residual_matrix(self):
        """I - F as a sparse matrix (rows sum to zero analytically)."""
        off = sp.coo_matrix((self.vals, (self.rows, self.cols)),
                            shape=(self.n, self.n)).tocsr()
        offsum = np.asarray(off.sum(axis=1)).ravel()
        return (sp.diags(offsum) - off).tocsr()

    def swap_coefficients(self, labels):
        """Exact quadratic coefficients (a_e, b_el) of single-label swaps.

        Returns (a, b) with a of shape (n,) and b of shape (n, nlabels):
        the roughness change when element e alone moves to label x is
        a[e] x_l^2 + b[e, l] x_l + const, summed over label channels l.
        """
        labels = np.asarray(labels, dtype=float)
        lmat = self.residual_matrix
        s = np.asarray(lmat.multiply(lmat).sum(axis=0)).ravel()
        t = lmat.T @ self.residual(labels)
        return 0.5 * s, t - labels * s[:, None]

"""Trilinear hexahedral element tables shared by the cell and macro solvers.

All meshes in this package are axis-aligned bricks, so the Jacobian is
diagonal and one set of tables per element size serves every element. Corner
numbering follows the usual VTK hexahedron order; vector DOFs are node-major
(node c owns dofs 3c, 3c+1, 3c+2). Strain rows use the engineering Voigt
order (11, 22, 33, 23, 13, 12) with factor 2 on the shear slots.
"""

import numpy as np

# unit cube corner offsets, VTK hexahedron order
CORNERS = np.array([
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
])

# corner subsets of the six faces, keyed by (axis, side)
FACES = {
    (0, -1): (0, 3, 7, 4),
    (0, +1): (1, 2, 6, 5),
    (1, -1): (0, 1, 5, 4),
    (1, +1): (3, 2, 6, 7),
    (2, -1): (0, 1, 2, 3),
    (2, +1): (4, 5, 6, 7),
}

_G = 1.0 / np.sqrt(3.0)
# reference corner coordinates in [-1, 1]^3
_XC = 2.0 * CORNERS - 1.0


def shape_tables(h):
    """Shape values, physical gradients and weights at the 2x2x2 Gauss points.

    h is the edge length triple of the brick. Returns (N, dN, w) with
    N of shape (8, 8) as gauss x node, dN of shape (8, 3, 8) holding
    d(node)/dx_a, and w the integration weights summing to the volume.
    """
    hx, hy, hz = (float(h), float(h), float(h)) if np.isscalar(h) else map(float, h)
    detj = hx * hy * hz / 8.0
    n = np.empty((8, 8))
    dn = np.empty((8, 3, 8))
    gps = [(gx, gy, gz) for gx in (-_G, _G) for gy in (-_G, _G) for gz in (-_G, _G)]
    for g, (gx, gy, gz) in enumerate(gps):
        fx = 0.5 * (1.0 + gx * _XC[:, 0])
        fy = 0.5 * (1.0 + gy * _XC[:, 1])
        fz = 0.5 * (1.0 + gz * _XC[:, 2])
        n[g] = fx * fy * fz
        dn[g, 0] = (_XC[:, 0] / hx) * fy * fz
        dn[g, 1] = fx * (_XC[:, 1] / hy) * fz
        dn[g, 2] = fx * fy * (_XC[:, 2] / hz)
    w = np.full(8, detj)
    return n, dn, w


def bmatrices(dn):
    """Engineering strain-displacement matrices, shape (8, 6, 24)."""
    ngp = dn.shape[0]
    b = np.zeros((ngp, 6, 24))
    for g in range(ngp):
        for c in range(8):
            dx, dy, dz = dn[g, 0, c], dn[g, 1, c], dn[g, 2, c]
            b[g, 0, 3 * c + 0] = dx
            b[g, 1, 3 * c + 1] = dy
            b[g, 2, 3 * c + 2] = dz
            b[g, 3, 3 * c + 1] = dz
            b[g, 3, 3 * c + 2] = dy
            b[g, 4, 3 * c + 0] = dz
            b[g, 4, 3 * c + 2] = dx
            b[g, 5, 3 * c + 0] = dy
            b[g, 5, 3 * c + 1] = dx
    return b


def element_stiffness(dmat, b, w):
    """24x24 elastic element matrix sum_g w_g B^T D B."""
    ke = np.zeros((24, 24))
    for g in range(b.shape[0]):
        ke += w[g] * (b[g].T @ dmat @ b[g])
    return 0.5 * (ke + ke.T)


def element_bt_d(dmat, b, w):
    """24x6 matrix sum_g w_g B^T D, one column per unit macro strain."""
    fe = np.zeros((24, 6))
    for g in range(b.shape[0]):
        fe += w[g] * (b[g].T @ dmat)
    return fe


def element_divergence(b, w):
    """Row vector of length 24 integrating div(v) over the element."""
    d = np.zeros(24)
    for g in range(b.shape[0]):
        d += w[g] * (b[g, 0] + b[g, 1] + b[g, 2])
    return d

"""Symmetric tensor algebra in engineering Voigt notation.

Component order is (11, 22, 33, 23, 13, 12). A 6x6 stiffness-like matrix maps
engineering strain [e11, e22, e33, 2e23, 2e13, 2e12] to stress
[s11, s22, s33, s23, s13, s12], so its entries coincide with the components of
the underlying fourth order tensor. Rotations need two different 6x6 matrices:
the stress form Q transforms stiffness-like tensors as Q A Q^T, and the strain
form Q_e = inv(Q)^T transforms compliance-like tensors (inverses) as
Q_e S Q_e^T. 3x3 symmetric tensors rotate plainly as R M R^T.
"""

import numpy as np

from .errors import NotPositiveDefinite

VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))

# engineering factors: strain vectors carry 2 on the shear slots
_ENG = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])

# packed upper-triangle layout and the weights that make packed dot products
# equal full-matrix Frobenius products
IU6 = np.triu_indices(6)
IU3 = np.triu_indices(3)
W21 = np.where(IU6[0] == IU6[1], 1.0, 2.0)
W6 = np.where(IU3[0] == IU3[1], 1.0, 2.0)


def iso_stiffness(young, poisson):
    """Isotropic stiffness matrix from Young's modulus and Poisson ratio."""
    lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    mu = young / (2.0 * (1.0 + poisson))
    a = np.diag([2.0 * mu, 2.0 * mu, 2.0 * mu, mu, mu, mu])
    a[:3, :3] += lam
    return a


def rotation_z(phi):
    """3x3 rotation about the z axis by angle phi."""
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def stress_rotation(rot):
    """6x6 Voigt rotation acting on stress-like vectors."""
    rot = np.asarray(rot, dtype=float)
    q = np.empty((6, 6))
    for p, (i, j) in enumerate(VOIGT_PAIRS):
        for r, (a, b) in enumerate(VOIGT_PAIRS):
            if a == b:
                q[p, r] = rot[i, a] * rot[j, a]
            else:
                q[p, r] = rot[i, a] * rot[j, b] + rot[i, b] * rot[j, a]
    return q


def strain_rotation(rot):
    """6x6 Voigt rotation acting on engineering strain vectors."""
    return (_ENG[:, None] * stress_rotation(rot)) / _ENG[None, :]


def rotate_stiffness(a, rot):
    """Rotate a stiffness-like 6x6 tensor: Q A Q^T with the stress form Q."""
    q = stress_rotation(rot)
    return q @ np.asarray(a) @ q.T


def rotate_compliance(s, rot):
    """Rotate a compliance-like 6x6 tensor (the inverse of a stiffness)."""
    qe = strain_rotation(rot)
    return qe @ np.asarray(s) @ qe.T


def rotate_sym3(m, rot):
    """Rotate a symmetric 3x3 tensor: R M R^T."""
    rot = np.asarray(rot)
    return rot @ np.asarray(m) @ rot.T


def voigt6_to_tensor4(a):
    """Expand a 6x6 Voigt matrix to the full fourth order tensor."""
    t = np.empty((3, 3, 3, 3))
    for p, (i, j) in enumerate(VOIGT_PAIRS):
        for r, (k, l) in enumerate(VOIGT_PAIRS):
            v = a[p, r]
            t[i, j, k, l] = t[j, i, k, l] = t[i, j, l, k] = t[j, i, l, k] = v
    return t


def tensor4_to_voigt6(t):
    """Collapse a minor-symmetric fourth order tensor to its 6x6 Voigt form."""
    a = np.empty((6, 6))
    for p, (i, j) in enumerate(VOIGT_PAIRS):
        for r, (k, l) in enumerate(VOIGT_PAIRS):
            a[p, r] = t[i, j, k, l]
    return a


def sym3_to_voigt(m):
    """Plain Voigt vector (11, 22, 33, 23, 13, 12) of a symmetric 3x3 tensor."""
    m = np.asarray(m)
    return np.array([m[0, 0], m[1, 1], m[2, 2], m[1, 2], m[0, 2], m[0, 1]])


def voigt_to_sym3(v):
    """Symmetric 3x3 tensor from a plain Voigt vector."""
    return np.array([
        [v[0], v[5], v[4]],
        [v[5], v[1], v[3]],
        [v[4], v[3], v[2]],
    ])


def frobenius(x, y):
    """Plain Frobenius product sum(X * Y) of two equally shaped matrices."""
    return float(np.sum(np.asarray(x) * np.asarray(y)))


def pack_sym(m):
    """Upper-triangle packing of symmetric matrices (supports leading axes)."""
    m = np.asarray(m)
    n = m.shape[-1]
    iu = IU6 if n == 6 else IU3 if n == 3 else np.triu_indices(n)
    return m[..., iu[0], iu[1]]


def unpack_sym(v, n):
    """Inverse of pack_sym for a single packed vector or a stack of them."""
    v = np.asarray(v)
    iu = IU6 if n == 6 else IU3 if n == 3 else np.triu_indices(n)
    m = np.zeros(v.shape[:-1] + (n, n))
    m[..., iu[0], iu[1]] = v
    m[..., iu[1], iu[0]] = m[..., iu[0], iu[1]]
    return m


def spd_inverse(m, floor_rel=0.0):
    """Inverse of a symmetric positive definite matrix.

    With floor_rel > 0 a diagonal shift of floor_rel * trace / n is added
    before inverting, which bounds the conditioning of tensors that are
    definite but close to singular. Raises NotPositiveDefinite when the
    matrix is not symmetric, has non-positive trace, or its smallest
    eigenvalue does not clear the shift.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    scale = max(1.0, float(np.abs(m).max()))
    if m.shape != (n, n) or not np.allclose(m, m.T, rtol=0.0, atol=1e-10 * scale):
        raise NotPositiveDefinite("matrix is not symmetric")
    tr = float(np.trace(m))
    if tr <= 0.0:
        raise NotPositiveDefinite(f"non-positive trace {tr:g}")
    shift = floor_rel * tr / n
    w = np.linalg.eigvalsh(m)
    if w[0] <= shift:
        raise NotPositiveDefinite(
            f"smallest eigenvalue {w[0]:g} at or below the floor {shift:g}")
    return np.linalg.inv(m + shift * np.eye(n))


def is_spd(m, tol=0.0):
    """True when the symmetric matrix m has all eigenvalues above tol."""
    m = np.asarray(m, dtype=float)
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(m).max())):
        return False
    return bool(np.linalg.eigvalsh(m)[0] > tol)

"""Periodic homogenization of voxelized porous unit cells.

A cell is a boolean solid mask on a regular n x n x n grid over [0,1]^3,
indexed [ix, iy, iz]. Three corrector families are solved on the periodic
cell: six elastic correctors (one per unit macro strain), one pressure
corrector loaded by the solid-fluid interface, and three Stokes flows in the
pore space (one per unit body force direction). From these the effective
drained stiffness A, the pressure coupling C, the pore compressibility
contribution N and the raw permeability K are integrated.

Conventions: engineering Voigt order (11, 22, 33, 23, 13, 12); voxel
centers at ((i + 0.5)/n, ...); a voxel belongs to the fluid when its center
lies inside the pore region.
"""

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import splu

from . import hexa
from .errors import (DisconnectedSolid, InvalidParams, NoFluidPhase,
                     SingularSystem)

# radius bounds of the parameterized families
CROSS_R_MIN, CROSS_R_MAX = 0.08, 0.22
CROSS_RZ = 0.15
CROSS_SPHERE = 0.25
SPHERE_R_MIN, SPHERE_R_MAX = 0.1, 0.4


# ----------------------------------------------------------------------
# geometry

def _centers(n):
    return (np.arange(n) + 0.5) / n


def cross_cell(n, rx, ry):
    """Solid mask of the channel-cross cell.

    Pore space is the union of straight circular channels along x (radius
    rx), y (radius ry) and z (fixed radius 0.15) through the cell center,
    plus a central sphere of radius 0.25. rx and ry are the two design
    radii, each within [0.08, 0.22].
    """
    for name, r in (("rx", rx), ("ry", ry)):
        if not (CROSS_R_MIN - 1e-12 <= r <= CROSS_R_MAX + 1e-12):
            raise InvalidParams(f"{name}={r:g} outside [{CROSS_R_MIN}, {CROSS_R_MAX}]")
    c = _centers(n)
    x, y, z = np.meshgrid(c, c, c, indexing="ij")
    dx2 = (x - 0.5) ** 2
    dy2 = (y - 0.5) ** 2
    dz2 = (z - 0.5) ** 2
    fluid = (dy2 + dz2 <= rx ** 2)            # channel along x
    fluid |= (dx2 + dz2 <= ry ** 2)           # channel along y
    fluid |= (dx2 + dy2 <= CROSS_RZ ** 2)     # channel along z
    fluid |= (dx2 + dy2 + dz2 <= CROSS_SPHERE ** 2)
    return ~fluid


def sphere_cell(n, rs):
    """Solid mask of the closed spherical-void cell, radius rs in [0.1, 0.4]."""
    if not (SPHERE_R_MIN - 1e-12 <= rs <= SPHERE_R_MAX + 1e-12):
        raise InvalidParams(f"rs={rs:g} outside [{SPHERE_R_MIN}, {SPHERE_R_MAX}]")
    c = _centers(n)
    x, y, z = np.meshgrid(c, c, c, indexing="ij")
    fluid = (x - 0.5) ** 2 + (y - 0.5) ** 2 + (z - 0.5) ** 2 <= rs ** 2
    return ~fluid


# ----------------------------------------------------------------------
# connectivity

def periodic_components(mask):
    """Number of 6-connected components of mask on the periodic torus.

    Returns (ncomp, labels) with labels in 1..ncomp on the mask and 0 off it.
    """
    labels, nl = ndimage.label(mask)
    if nl == 0:
        return 0, labels
    parent = np.arange(nl + 1)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for axis in range(3):
        lo = np.take(labels, 0, axis=axis).ravel()
        hi = np.take(labels, -1, axis=axis).ravel()
        touch = (lo > 0) & (hi > 0)
        for a, b in set(zip(lo[touch].tolist(), hi[touch].tolist())):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(nl + 1)])
    uniq = np.unique(roots[1:])
    remap = np.zeros(nl + 1, dtype=labels.dtype)
    remap[uniq] = np.arange(1, uniq.size + 1)
    return uniq.size, remap[roots[labels]]


def check_solid(solid):
    """Raise DisconnectedSolid unless the solid carries load in every direction.

    The solid must be nonempty, form a single periodic 6-connected component,
    and leave no grid slice fully fluid (a fully fluid slice would cut every
    load path perpendicular to it).
    """
    solid = np.asarray(solid, dtype=bool)
    if not solid.any():
        raise DisconnectedSolid("cell contains no solid voxels")
    ncomp, _ = periodic_components(solid)
    if ncomp != 1:
        raise DisconnectedSolid(f"solid splits into {ncomp} periodic components")
    for axis in range(3):
        counts = solid.sum(axis=tuple(a for a in range(3) if a != axis))
        if (counts == 0).any():
            raise DisconnectedSolid(f"a slice normal to axis {axis} is fully fluid")


# ----------------------------------------------------------------------
# periodic elasticity correctors

def _element_nodes(n, idx):
    """Global periodic node ids of the 8 corners of the given voxels.

    idx is an integer array of shape (m, 3); returns (m, 8).
    """
    corners = idx[:, None, :] + hexa.CORNERS[None, :, :]
    return ((corners[..., 0] % n) * n + (corners[..., 1] % n)) * n + (corners[..., 2] % n)


def _rigid_modes(coords):
    """Translations and infinitesimal rotations at the given node coords."""
    m = coords.shape[0]
    b = np.zeros((3 * m, 6))
    x, y, z = coords[:, 0], coords[:, 1], coords[:, 2]
    for c in range(3):
        b[c::3, c] = 1.0
    b[1::3, 3], b[2::3, 3] = -z, y
    b[0::3, 4], b[2::3, 4] = z, -x
    b[0::3, 5], b[1::3, 5] = -y, x
    return b


def _solve_pinned(kmat, rhs, coords, zero_tol, splu_limit=40000):
    """Solve the reduced periodic system with the first node pinned.

    kmat is symmetric positive semidefinite with rigid translations as the
    only kernel (checked upstream via connectivity); pinning the three dofs
    of the first node removes it. Direct factorization below splu_limit
    unknowns, smoothed-aggregation multigrid with CG above. The residual of
    every solve is verified. Columns whose load norm falls below zero_tol
    are exactly cancelling assemblies (dense cells) and solve to zero.
    """
    ndof = kmat.shape[0]
    pin = np.array([0, 1, 2])
    keep = np.ones(ndof)
    keep[pin] = 0.0
    zp = sp.diags(keep)
    ksys = (zp @ kmat @ zp + sp.diags(1.0 - keep)).tocsc()
    rhs = rhs.copy()
    rhs[pin] = 0.0
    norms = np.linalg.norm(rhs, axis=0)
    sol = np.zeros_like(rhs)
    live = [j for j in range(rhs.shape[1]) if norms[j] > zero_tol]
    if live:
        if ndof <= splu_limit:
            lu = splu(ksys)
            for j in live:
                sol[:, j] = lu.solve(rhs[:, j])
        else:
            import pyamg
            ml = pyamg.smoothed_aggregation_solver(
                ksys.tocsr(), B=_rigid_modes(coords), max_coarse=500)
            for j in live:
                sol[:, j] = ml.solve(rhs[:, j], tol=1e-12, accel="cg", maxiter=400)
        for j in live:
            res = np.linalg.norm(ksys @ sol[:, j] - rhs[:, j])
            if res > 1e-9 * norms[j]:
                raise SingularSystem(
                    f"corrector solve {j} stalled at relative residual "
                    f"{res / norms[j]:.2e}")
    # remove the mean translation; only strains matter downstream
    for c in range(3):
        sol[c::3] -= sol[c::3].mean(axis=0)
    return sol


def _interface_load(solid, nodes_of_elem):
    """Assembled load of the pressure corrector: v . n over the interface.

    The interface normal points from the solid into the fluid. Each square
    interface face contributes h^2 / 4 to the normal displacement component
    of its four corner nodes. nodes_of_elem holds the corner node ids of
    the solid voxels in np.argwhere order.
    """
    fluid = ~solid
    n = solid.shape[0]
    h2 = (1.0 / n) ** 2
    elem_row = -np.ones(solid.shape, dtype=np.int64)
    elem_row[solid] = np.arange(int(solid.sum()))
    fp = np.zeros(3 * n ** 3)
    for axis in range(3):
        for side in (+1, -1):
            face_elems = solid & np.roll(fluid, -side, axis=axis)
            if not face_elems.any():
                continue
            corners = list(hexa.FACES[(axis, side)])
            face_nodes = nodes_of_elem[elem_row[face_elems]][:, corners]
            np.add.at(fp, 3 * face_nodes + axis, side * h2 / 4.0)
    return fp


def homogenize_cell(solid, dmat, splu_limit=40000, check=True):
    """Effective poroelastic coefficients of one periodic voxel cell.

    solid is the boolean solid mask, dmat the 6x6 solid stiffness. Returns a
    dict with the drained stiffness 'A' (6x6), pressure coupling 'C' and its
    dual evaluation 'C_dual' (plain Voigt 6-vectors), pore term 'N' and
    'N_dual', raw permeability 'K' (3x3, unit viscosity) with its
    dissipation diagonal 'K_diss', porosity 'phi' and solid fraction 'rho'.
    check=False skips the load-path guard for cells that are deliberately
    degenerate, like layered reference geometries.
    """
    solid = np.asarray(solid, dtype=bool)
    n = solid.shape[0]
    if solid.shape != (n, n, n):
        raise InvalidParams("solid mask must be cubic")
    if check:
        check_solid(solid)
    dmat = np.asarray(dmat, dtype=float)
    h = 1.0 / n
    _, dn, w = hexa.shape_tables(h)
    bmats = hexa.bmatrices(dn)
    ke = hexa.element_stiffness(dmat, bmats, w)
    fe = hexa.element_bt_d(dmat, bmats, w)
    dvec = hexa.element_divergence(bmats, w)

    idx = np.argwhere(solid)
    nodes = _element_nodes(n, idx)                      # (nel, 8)
    active_nodes = np.unique(nodes)
    full_to_red = -np.ones(n ** 3, dtype=np.int64)
    full_to_red[active_nodes] = np.arange(active_nodes.size)
    red_dofs = (3 * full_to_red[nodes][:, :, None] + np.arange(3)).reshape(-1, 24)
    nred = 3 * active_nodes.size

    rows = np.repeat(red_dofs, 24, axis=1).ravel()
    cols = np.tile(red_dofs, (1, 24)).ravel()
    vals = np.tile(ke.ravel(), red_dofs.shape[0])
    kmat = sp.coo_matrix((vals, (rows, cols)), shape=(nred, nred)).tocsr()

    rhs = np.zeros((nred, 7))
    np.add.at(rhs[:, :6], red_dofs, -np.broadcast_to(fe, (idx.shape[0], 24, 6)))
    fp_full = _interface_load(solid, nodes)
    fp_red = fp_full.reshape(-1, 3)[active_nodes].ravel()
    rhs[:, 6] = fp_red

    ii = active_nodes // (n * n)
    jj = (active_nodes // n) % n
    kk = active_nodes % n
    coords = np.stack([ii, jj, kk], axis=1) * h
    zero_tol = 1e-10 * max(1.0, float(np.abs(dmat).max())) * h * h
    sol = _solve_pinned(kmat, rhs, coords, zero_tol, splu_limit=splu_limit)

    # integrate coefficients, chunked over elements to bound memory
    amat = np.zeros((6, 6))
    cvec = np.zeros(6)
    cdual = np.zeros(6)
    ndual = 0.0
    nval = 0.0
    eye6 = np.eye(6)
    wg = w[0]
    for start in range(0, idx.shape[0], 4096):
        d = red_dofs[start:start + 4096]
        ue = sol[d]                                     # (m, 24, 7)
        eps = np.einsum("gsd,mdI->mgsI", bmats, ue)
        feps = eps[..., :6] + eye6[None, None]
        amat += wg * np.einsum("mgsI,st,mgtJ->IJ", feps, dmat, feps)
        cvec -= dvec @ ue[:, :, :6].sum(axis=0)
        cdual += fe.T @ ue[:, :, 6].sum(axis=0)
        nval += np.einsum("md,de,me->", ue[:, :, 6], ke, ue[:, :, 6])
    ndual = float(fp_red @ sol[:, 6])
    amat = 0.5 * (amat + amat.T)

    rho = float(solid.mean())
    phi = 1.0 - rho
    fluid = ~solid
    if fluid.any():
        kperm, kdiss = stokes_permeability(fluid)
    else:
        kperm, kdiss = np.zeros((3, 3)), np.zeros(3)

    return {
        "A": amat, "C": cvec, "C_dual": cdual, "N": float(nval),
        "N_dual": ndual, "K": kperm, "K_diss": kdiss,
        "phi": phi, "rho": rho,
    }


# ----------------------------------------------------------------------
# Stokes flow on the pore space

def stokes_permeability(fluid):
    """Raw permeability of the pore space at unit viscosity.

    Staggered-grid Stokes: one velocity unknown on each face shared by two
    fluid voxels, one pressure unknown per fluid voxel. Missing neighbor
    velocities are walls: a blocked in-line neighbor holds value zero at
    distance h, a blocked transverse neighbor reflects (ghost value -u at a
    wall half a cell away). Three solves with unit body forces; K's entry
    (i, j) is the volume average of the i-velocity under force e_j, which
    equals the force-velocity product, so K is symmetric up to solver noise.
    Returns (K, diss) where diss holds the dissipation u . Av u per solve,
    equal to the matching diagonal of K up to solver precision.
    """
    fluid = np.asarray(fluid, dtype=bool)
    n = fluid.shape[0]
    if not fluid.any():
        raise NoFluidPhase("no fluid voxels")
    if fluid.all():
        raise InvalidParams("all-fluid cell has no walls to resist flow")
    h = 1.0 / n
    ncell = int(fluid.sum())
    cid = -np.ones(fluid.shape, dtype=np.int64)
    cid[fluid] = np.arange(ncell)

    face_act = [fluid & np.roll(fluid, -1, axis=a) for a in range(3)]
    nfaces = [int(m.sum()) for m in face_act]
    fid = []
    offset = 0
    for a in range(3):
        f = -np.ones(fluid.shape, dtype=np.int64)
        f[face_act[a]] = offset + np.arange(nfaces[a])
        fid.append(f)
        offset += nfaces[a]
    nface = offset

    diag = np.zeros(nface)
    rows, cols, vals = [], [], []
    for a in range(3):
        act = face_act[a]
        if not act.any():
            continue
        my = fid[a][act]
        for d in range(3):
            for s in (+1, -1):
                nb_act = np.roll(act, -s, axis=d)
                nb_id = np.roll(fid[a], -s, axis=d)
                conn = act & nb_act
                wall = act & ~nb_act
                if conn.any():
                    rows.append(fid[a][conn])
                    cols.append(nb_id[conn])
                    vals.append(np.full(int(conn.sum()), -h))
                np.add.at(diag, fid[a][conn], h)
                np.add.at(diag, fid[a][wall], h if d == a else 2.0 * h)
        # pressure gradient block, +- h^2 on the two adjacent cells
        rows.append(my)
        cols.append(nface + cid[act])
        vals.append(np.full(my.size, -h * h))
        rows.append(my)
        cols.append(nface + np.roll(cid, -1, axis=a)[act])
        vals.append(np.full(my.size, h * h))

    rows.append(np.arange(nface))
    cols.append(np.arange(nface))
    vals.append(diag)
    nsys = nface + ncell
    upper = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nsys, nsys)).tocsr()
    grad = upper[:nface, nface:]
    saddle = sp.bmat([[upper[:nface, :nface], grad], [grad.T, None]], format="csr")

    # pin one pressure per face-connected pore component
    ncomp, labels = periodic_components(fluid)
    lab_flat = labels[fluid]
    pin_cells = [int(np.argmax(lab_flat == c)) for c in range(1, ncomp + 1)]
    pinned = nface + np.array(pin_cells, dtype=np.int64)
    keep = np.ones(nsys)
    keep[pinned] = 0.0
    zp = sp.diags(keep)
    saddle = (zp @ saddle @ zp + sp.diags(1.0 - keep)).tocsc()

    lu = splu(saddle)
    # both orientations of every neighbor pair were assembled, so the
    # velocity block of `upper` is already the full symmetric operator
    av = upper[:nface, :nface]
    kperm = np.zeros((3, 3))
    diss = np.zeros(3)
    sols = []
    for j in range(3):
        b = np.zeros(nsys)
        b[fid[j][face_act[j]]] = h ** 3
        x = lu.solve(b)
        sols.append(x)
        diss[j] = float(x[:nface] @ (av @ x[:nface]))
    for i in range(3):
        fi = np.zeros(nface)
        fi[fid[i][face_act[i]]] = h ** 3
        for j in range(3):
            kperm[i, j] = float(fi @ sols[j][:nface])
    return 0.5 * (kperm + kperm.T), diss

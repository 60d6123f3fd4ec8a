"""Macroscale poroelastic problem on a regular hexahedral box mesh.

The two fields are decoupled in sequence: the pore pressure solves a Darcy
problem with prescribed pressures on boundary patches, then the displacement
solves linear elasticity loaded by surface tractions and by the pressure
through the coupling tensor. Two scalar outputs drive the optimization: the
compliance Phi = g(u) of the traction load and the drained flux Psi through
one designated pressure patch group.

Elements are unit cubes; element (ex, ey, ez) has index (ex * ny + ey) * nz
+ ez and nodes are numbered (ix * (ny + 1) + iy) * (nz + 1) + iz. Per
element the material is a stiffness A (6x6, engineering Voigt), a coupling
vector B (plain Voigt of the symmetric coupling tensor) and a conductivity
K (3x3).
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import hexa
from .errors import InvalidParams, SingularSystem

FACE_NAMES = {"x-": (0, -1), "x+": (0, +1), "y-": (1, -1), "y+": (1, +1),
              "z-": (2, -1), "z+": (2, +1)}


class MacroMesh:
    """Regular box of nx x ny x nz unit hexahedra."""

    def __init__(self, nx=15, ny=10, nz=2):
        if min(nx, ny, nz) < 1:
            raise InvalidParams("mesh needs at least one element per axis")
        self.shape = (nx, ny, nz)
        self.n_elems = nx * ny * nz
        self.n_nodes = (nx + 1) * (ny + 1) * (nz + 1)
        ex, ey, ez = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                                 indexing="ij")
        self.elem_index = np.stack([ex.ravel(), ey.ravel(), ez.ravel()],
                                   axis=1)
        corners = self.elem_index[:, None, :] + hexa.CORNERS[None]
        self.elem_nodes = ((corners[..., 0] * (ny + 1) + corners[..., 1])
                           * (nz + 1) + corners[..., 2])
        self.elem_dofs = (3 * self.elem_nodes[:, :, None]
                          + np.arange(3)).reshape(-1, 24)
        ix, iy, iz = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1),
                                 np.arange(nz + 1), indexing="ij")
        self.nodes = np.stack([ix.ravel(), iy.ravel(), iz.ravel()],
                              axis=1).astype(float)
        self.centers = self.elem_index + 0.5
        n, dn, w = hexa.shape_tables(1.0)
        self.shape_n = n
        self.shape_dn = dn
        self.weights = w
        self.bmats = hexa.bmatrices(dn)

    def boundary_faces(self, face, box=None):
        """Element ids and face corner nodes of a boundary patch.

        face is one of 'x-', 'x+', ..., 'z+'. box optionally restricts by
        the face center: a list of three [lo, hi] pairs (or None entries
        for no bound on that coordinate).
        """
        if face not in FACE_NAMES:
            raise InvalidParams(f"unknown face {face!r}")
        axis, side = FACE_NAMES[face]
        nx, ny, nz = self.shape
        limit = (nx, ny, nz)[axis] - 1
        on = self.elem_index[:, axis] == (limit if side > 0 else 0)
        elems = np.nonzero(on)[0]
        corners = list(hexa.FACES[(axis, side)])
        nodes = self.elem_nodes[elems][:, corners]
        centers = self.nodes[nodes].mean(axis=1)
        if box is not None:
            keep = np.ones(elems.size, bool)
            for a, bound in enumerate(box):
                if bound is None:
                    continue
                keep &= (centers[:, a] >= bound[0] - 1e-9)
                keep &= (centers[:, a] <= bound[1] + 1e-9)
            elems, nodes = elems[keep], nodes[keep]
        return elems, nodes


class MacroProblem:
    """Mesh plus boundary conditions, with cached assembly index patterns.

    clamps: list of {'face', 'box'} patches whose nodes lose all three
    displacement dofs. tractions: {'vector', 'face', 'box'} surface loads.
    pressures: {'value', 'face', 'box', 'flux'} prescribed-pressure patches;
    the patches flagged 'flux' form the group whose drained outflow is the
    flux objective Psi.
    """

    def __init__(self, mesh, clamps, tractions, pressures):
        self.mesh = mesh
        nn = mesh.n_nodes

        clamped = np.zeros(nn, bool)
        for patch in clamps:
            _, nodes = mesh.boundary_faces(patch["face"], patch.get("box"))
            clamped[nodes] = True
        self.clamped_nodes = clamped
        self.free_u = np.repeat(~clamped, 3)

        fg = np.zeros(3 * nn)
        for patch in tractions:
            vec = np.asarray(patch["vector"], dtype=float)
            _, nodes = mesh.boundary_faces(patch["face"], patch.get("box"))
            for c in range(3):
                # consistent bilinear load: a quarter of the unit face each
                np.add.at(fg, 3 * nodes.ravel() + c, 0.25 * vec[c])
        fg[~self.free_u] = 0.0
        self.f_g = fg

        pdir = np.zeros(nn, bool)
        pval = np.zeros(nn)
        ptil = np.zeros(nn)
        for patch in pressures:
            _, nodes = mesh.boundary_faces(patch["face"], patch.get("box"))
            pdir[nodes] = True
            pval[nodes] = float(patch["value"])
            if patch.get("flux"):
                ptil[nodes] = 1.0
        self.p_fixed = pdir
        self.p_values = pval
        self.p_flux = ptil
        self.free_p = ~pdir

        ed = mesh.elem_dofs
        self._ka_rows = np.repeat(ed, 24, axis=1).ravel()
        self._ka_cols = np.tile(ed, (1, 24)).ravel()
        en = mesh.elem_nodes
        self._kp_rows = np.repeat(en, 8, axis=1).ravel()
        self._kp_cols = np.tile(en, (1, 8)).ravel()
        self._c_rows = np.repeat(ed, 8, axis=1).ravel()
        self._c_cols = np.tile(en, (1, 24)).ravel()

    def assemble(self, a_e, bv_e, k_e):
        """Sparse operators (Ka, Kp, C) for per-element material arrays."""
        m = self.mesh
        b, n, w = m.bmats, m.shape_n, m.weights
        ka_el = np.einsum("g,gia,mij,gjb->mab", w, b, a_e, b, optimize=True)
        kp_el = np.einsum("g,gia,mij,gjb->mab", w, m.shape_dn, k_e,
                          m.shape_dn, optimize=True)
        c_el = np.einsum("g,gia,mi,gb->mab", w, b, bv_e, n, optimize=True)
        nn, nd = m.n_nodes, 3 * m.n_nodes
        ka = sp.coo_matrix((ka_el.ravel(), (self._ka_rows, self._ka_cols)),
                           shape=(nd, nd)).tocsr()
        kp = sp.coo_matrix((kp_el.ravel(), (self._kp_rows, self._kp_cols)),
                           shape=(nn, nn)).tocsr()
        cmat = sp.coo_matrix((c_el.ravel(), (self._c_rows, self._c_cols)),
                             shape=(nd, nn)).tocsr()
        return ka, kp, cmat


class MacroState:
    """One converged macro solve and everything the adjoints reuse."""

    def __init__(self, problem, u, p, phi, psi, lu_a, lu_p, kp, cmat):
        self.problem = problem
        self.u = u
        self.p = p
        self.phi = phi
        self.psi = psi
        self.lu_a = lu_a
        self.lu_p = lu_p
        self.kp = kp
        self.cmat = cmat


def solve_state(problem, a_e, bv_e, k_e):
    """Pressure then displacement solve; returns a MacroState."""
    ka, kp, cmat = problem.assemble(a_e, bv_e, k_e)
    fp = problem.free_p
    fu = problem.free_u

    p = problem.p_values.copy()
    kpff = kp[fp][:, fp].tocsc()
    try:
        lu_p = splu(kpff)
    except RuntimeError as err:
        raise SingularSystem(f"pressure system is singular: {err}") from None
    rhs_p = -(kp[fp][:, ~fp] @ p[~fp])
    p[fp] = lu_p.solve(rhs_p)
    _check(kpff, p[fp], rhs_p, "pressure")

    kaff = ka[fu][:, fu].tocsc()
    try:
        lu_a = splu(kaff)
    except RuntimeError as err:
        raise SingularSystem(f"displacement system is singular: {err}") from None
    rhs_u = (problem.f_g + cmat @ p)[fu]
    u = np.zeros(3 * problem.mesh.n_nodes)
    u[fu] = lu_a.solve(rhs_u)
    _check(kaff, u[fu], rhs_u, "displacement")

    phi = float(problem.f_g @ u)
    psi = float(-problem.p_flux @ (kp @ p))
    return MacroState(problem, u, p, phi, psi, lu_a, lu_p, kp, cmat)


def _check(mat, x, b, label):
    nb = np.linalg.norm(b)
    if np.linalg.norm(mat @ x - b) > 1e-8 * max(nb, 1e-300):
        raise SingularSystem(f"{label} solve lost accuracy")


def default_problem(nx=15, ny=10, nz=2, traction=1.0):
    """The reference configuration: a clamped block loaded from above.

    The x- face is clamped. A downward traction acts on three top (y+)
    faces near the free end (x in [nx - 3, nx], z in [0, 1]). Pressure 1.0
    is prescribed on the top strip x in [0, 5]; pressure 0.5 on the bottom
    strip x in [nx - 5, nx], and that bottom patch is the flux group
    measured by Psi. The patch extents calibrate the homogeneous mid-radius
    start to the reference operating point (compliance near 28, flux near
    0.13).
    """
    mesh = MacroMesh(nx, ny, nz)
    return MacroProblem(
        mesh,
        clamps=[{"face": "x-"}],
        tractions=[{"vector": [0.0, -float(traction), 0.0], "face": "y+",
                    "box": [[nx - 3, nx], None, [0, 1]]}],
        pressures=[
            {"value": 1.0, "face": "y+", "box": [[0, 5], None, None]},
            {"value": 0.5, "face": "y-", "box": [[nx - 5, nx], None, None],
             "flux": True},
        ],
    )

"""Catalogues of effective cell coefficients and the discrete design space.

Offline, a small number of parameter nodes per cell family is homogenized
and tabulated; monotone cubic (PCHIP) interpolation in the cell parameters,
applied per tensor component and axis by axis, extends the table to a dense
design grid. Rotation about z enters analytically, so each channel-cross
candidate is (radius pair, angle) and each spherical-void candidate is a
radius alone.

Per node 36 values are stored: the packed upper triangle of the drained
stiffness A (21), the pressure coupling C in plain Voigt order (6), the
packed raw permeability K at unit viscosity (6), the pore term N, the
porosity phi and the solid fraction rho.

Catalogue files are binary: magic 'PSGPCAT1', a section count, then named
sections (meta JSON, axes, samples, nodewise slope tables), and a trailing
CRC-32. The slope tables are redundant with the samples and are checked
against a recomputation whenever a file is loaded.
"""

import io
import json
import struct
import zlib

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import microcell, tensors as tn
from .errors import (ChecksumFailure, FormatVersionMismatch, InvalidParams,
                     NotPositiveDefinite, OutOfBox, PorosgpError)

MAGIC = b"PSGPCAT1"
NFIELDS = 36

# default effective-medium constants; viscosity rescales the raw
# permeability into the seepage tensor of the macro problem (pressure and
# displacement are viscosity-independent, the flux scales with 1/viscosity).
# The default puts open-channel cells (seepage ~0.3 at mid radii) well above
# the 1e-3 floor assigned to sealed cells; at unit viscosity the floor would
# paradoxically beat every open channel.
VISCOSITY = 1e-3
SPHERE_K_FLOOR = 1e-3

# default solid: polystyrene-like, modulus in GPa
SOLID_E = 3.9
SOLID_NU = 0.34

FIELD_NAMES = (
    ["a%d%d" % (i + 1, j + 1) for i, j in zip(*np.triu_indices(6))]
    + ["c%d" % (i + 1) for i in range(6)]
    + ["k%d%d" % (i + 1, j + 1) for i, j in zip(*np.triu_indices(3))]
    + ["n", "phi", "rho"]
)


def pack_fields(res):
    """Flatten one homogenization result dict into the 36-vector layout."""
    out = np.empty(NFIELDS)
    out[0:21] = tn.pack_sym(res["A"])
    out[21:27] = res["C"]
    out[27:33] = tn.pack_sym(res["K"])
    out[33] = res["N"]
    out[34] = res["phi"]
    out[35] = res["rho"]
    return out


def unpack_fields(vec):
    """Recover the named coefficients from a 36-vector (or stack of them)."""
    vec = np.asarray(vec)
    return {
        "A": tn.unpack_sym(vec[..., 0:21], 6),
        "C": vec[..., 21:27],
        "K": tn.unpack_sym(vec[..., 27:33], 3),
        "N": vec[..., 33],
        "phi": vec[..., 34],
        "rho": vec[..., 35],
    }


# ----------------------------------------------------------------------
# node tables

class CellTable:
    """Tabulated coefficients of one cell family with PCHIP interpolation.

    kind is 'cross' (two radius axes) or 'sphere' (one). samples has shape
    (len(axes[0]), ..., 36).
    """

    def __init__(self, kind, axes, samples, meta=None):
        if kind not in ("cross", "sphere"):
            raise InvalidParams(f"unknown cell kind {kind!r}")
        self.kind = kind
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.samples = np.asarray(samples, dtype=float)
        self.meta = dict(meta or {})
        want = tuple(len(a) for a in self.axes) + (NFIELDS,)
        if self.samples.shape != want:
            raise InvalidParams(
                f"samples shape {self.samples.shape} does not match {want}")

    def _check_range(self, vals, axis):
        ax = self.axes[axis]
        v = np.asarray(vals)
        if v.min() < ax[0] - 1e-12 or v.max() > ax[-1] + 1e-12:
            raise OutOfBox(
                f"query range [{v.min():g}, {v.max():g}] leaves the table "
                f"axis [{ax[0]:g}, {ax[-1]:g}]")

    def evaluate(self, r0, r1=None):
        """Interpolated 36-vectors at r0 (x r1 for the cross family).

        Scalars give one vector; arrays give the full tensor-product grid,
        shaped (len(r0), len(r1), 36) for the cross family. Interpolation
        runs along axis 0 first, then axis 1, for every query.
        """
        self._check_range(r0, 0)
        v = PchipInterpolator(self.axes[0], self.samples, axis=0)(r0)
        if self.kind == "cross":
            if r1 is None:
                raise InvalidParams("cross table needs two radii")
            self._check_range(r1, 1)
            v = PchipInterpolator(self.axes[1], v, axis=-2 if np.ndim(r0) else 0)(r1)
        elif r1 is not None:
            raise InvalidParams("sphere table takes one radius")
        return v

    def coeffs_at(self, r0, r1=None):
        """Named coefficient dict at one parameter point."""
        return unpack_fields(self.evaluate(float(r0), None if r1 is None else float(r1)))

    def slopes(self, axis):
        """PCHIP node derivatives of every field along the given axis."""
        return PchipInterpolator(
            self.axes[axis], self.samples, axis=axis).derivative()(self.axes[axis])

    # -- persistence ----------------------------------------------------

    def save(self, path):
        arrays = {"axis0": self.axes[0], "samples": self.samples,
                  "slopes0": self.slopes(0)}
        if self.kind == "cross":
            arrays["axis1"] = self.axes[1]
            arrays["slopes1"] = self.slopes(1)
        meta = dict(self.meta)
        meta.update({
            "format": 1,
            "kind": self.kind,
            "fields": FIELD_NAMES,
            "shapes": {k: list(v.shape) for k, v in arrays.items()},
        })
        buf = io.BytesIO()
        buf.write(MAGIC)
        sections = [("meta", json.dumps(meta, sort_keys=True).encode())]
        sections += [(k, np.ascontiguousarray(v, dtype="<f8").tobytes())
                     for k, v in sorted(arrays.items())]
        buf.write(struct.pack("<I", len(sections)))
        for name, payload in sections:
            nb = name.encode()
            buf.write(struct.pack("<I", len(nb)))
            buf.write(nb)
            buf.write(struct.pack("<Q", len(payload)))
            buf.write(payload)
        body = buf.getvalue()
        with open(path, "wb") as fh:
            fh.write(body)
            fh.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) < len(MAGIC) + 8 or raw[:len(MAGIC)] != MAGIC:
            raise FormatVersionMismatch(
                f"{path} does not start with the {MAGIC.decode()} header")
        body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
        if zlib.crc32(body) & 0xFFFFFFFF != crc:
            raise ChecksumFailure(f"{path} fails its CRC-32 check")
        off = len(MAGIC)
        (nsec,) = struct.unpack_from("<I", body, off)
        off += 4
        sections = {}
        for _ in range(nsec):
            (nlen,) = struct.unpack_from("<I", body, off)
            off += 4
            name = body[off:off + nlen].decode()
            off += nlen
            (plen,) = struct.unpack_from("<Q", body, off)
            off += 8
            sections[name] = body[off:off + plen]
            off += plen
        meta = json.loads(sections.pop("meta").decode())
        if meta.get("format") != 1:
            raise FormatVersionMismatch(
                f"{path} declares format {meta.get('format')!r}, expected 1")
        arrays = {}
        for name, payload in sections.items():
            arr = np.frombuffer(payload, dtype="<f8").astype(np.float64)
            arrays[name] = arr.reshape(meta["shapes"][name])
        axes = [arrays["axis0"]]
        if meta["kind"] == "cross":
            axes.append(arrays["axis1"])
        table = cls(meta["kind"], axes, arrays["samples"], meta=meta)
        for axis in range(len(axes)):
            redo = table.slopes(axis)
            if not np.allclose(redo, arrays[f"slopes{axis}"],
                               rtol=1e-10, atol=1e-12):
                raise ChecksumFailure(
                    f"{path}: stored slope table {axis} disagrees with the "
                    "samples")
        return table

    def dump_nodes_csv(self, path):
        """Deterministic CSV of the raw node samples, one node per row."""
        cols = (["rx", "ry"] if self.kind == "cross" else ["rs"]) + FIELD_NAMES
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            if self.kind == "cross":
                for i, r0 in enumerate(self.axes[0]):
                    for j, r1 in enumerate(self.axes[1]):
                        row = [r0, r1] + list(self.samples[i, j])
                        fh.write(",".join("%.17g" % v for v in row) + "\n")
            else:
                for i, r0 in enumerate(self.axes[0]):
                    row = [r0] + list(self.samples[i])
                    fh.write(",".join("%.17g" % v for v in row) + "\n")


def _build_table(kind, n, axes, cell_of, dmat, progress):
    shape = tuple(len(a) for a in axes)
    samples = np.empty(shape + (NFIELDS,))
    total = int(np.prod(shape))
    for flat, idx in enumerate(np.ndindex(*shape)):
        params = tuple(axes[d][idx[d]] for d in range(len(axes)))
        try:
            res = microcell.homogenize_cell(cell_of(n, *params), dmat)
        except PorosgpError as exc:
            raise type(exc)(f"{kind} node {params}: {exc}") from exc
        if np.linalg.eigvalsh(res["A"])[0] <= 0.0:
            raise NotPositiveDefinite(
                f"{kind} node {params} yields a non-definite stiffness")
        samples[idx] = pack_fields(res)
        if progress:
            progress(flat + 1, total, params)
    meta = {"n": n, "dmat": np.asarray(dmat).tolist()}
    return CellTable(kind, axes, samples, meta=meta)


def build_cross_table(n=32, nnodes=11, dmat=None, progress=None):
    """Homogenize the channel-cross family on an nnodes x nnodes radius grid."""
    if dmat is None:
        dmat = tn.iso_stiffness(SOLID_E, SOLID_NU)
    ax = np.linspace(microcell.CROSS_R_MIN, microcell.CROSS_R_MAX, nnodes)
    return _build_table("cross", n, [ax, ax.copy()],
                        microcell.cross_cell, dmat, progress)


def build_sphere_table(n=32, nnodes=30, dmat=None, progress=None):
    """Homogenize the spherical-void family on nnodes radii."""
    if dmat is None:
        dmat = tn.iso_stiffness(SOLID_E, SOLID_NU)
    ax = np.linspace(microcell.SPHERE_R_MIN, microcell.SPHERE_R_MAX, nnodes)
    return _build_table("sphere", n, [ax], microcell.sphere_cell, dmat, progress)


# ----------------------------------------------------------------------
# design space

def _effective(vec, viscosity, gamma, undrained, k_floor=None):
    """State tensors of one interpolated node before any rotation.

    Returns (A_state, B3, K_state, M, fields dict). A floor permeability
    replaces the raw one for the sealed family when k_floor is given.
    """
    f = unpack_fields(vec)
    amat = f["A"]
    bvec = f["C"].copy()
    bvec[:3] += f["phi"]
    b3 = tn.voigt_to_sym3(bvec)
    m = f["N"] + gamma * f["phi"]
    if undrained:
        if m <= 0.0:
            raise NotPositiveDefinite("undrained closure needs a positive M")
        amat = amat + np.outer(bvec, bvec) / m
    if k_floor is None:
        kmat = f["K"] / viscosity
    else:
        kmat = k_floor * np.eye(3)
    return amat, b3, kmat, m, f


def feature_row(a, b3, k3, labels, rho):
    """Scan feature row of one candidate from its oriented state tensors.

    Layout: weighted packed inverses of stiffness, coupling, permeability;
    labels and squared labels; weighted packed stiffness and half its
    squared norm; solid fraction.
    """
    f = np.empty(62)
    f[0:21] = tn.pack_sym(tn.spd_inverse(a)) * tn.W21
    f[21:27] = tn.pack_sym(tn.spd_inverse(b3, floor_rel=1e-12)) * tn.W6
    f[27:33] = tn.pack_sym(tn.spd_inverse(k3, floor_rel=1e-12)) * tn.W6
    f[33:36] = labels
    f[36:39] = np.asarray(labels) ** 2
    f[39:60] = tn.pack_sym(a) * tn.W21
    f[60] = 0.5 * tn.frobenius(a, a)
    f[61] = rho
    return f


class DesignSpace:
    """Discrete candidate set shared by the scan kernel and the state solves.

    Candidates are ordered channel-cross first (radius-grid major, angle
    minor: candidate g * n_angles + t sits at grid point g and angle index
    t), then the spherical-void radii. Ties in the scan resolve to the
    lowest candidate index, so this ordering is the tie-break rule.

    Feature columns (62): weighted packed inverse of the oriented stiffness
    (21), of the coupling (6) and of the permeability (6); the three
    normalized parameter labels and their squares (6); the weighted packed
    oriented stiffness (21) and half its squared norm (1) for the proximal
    globalization term; the solid fraction (1).
    """

    N_FEATURES = 62

    def __init__(self, cross_table=None, sphere_table=None, n_radii=28,
                 n_angles=180, n_sphere=60, viscosity=VISCOSITY, gamma=0.0,
                 undrained_impermeable=False, sphere_k_floor=SPHERE_K_FLOOR):
        if cross_table is None and sphere_table is None:
            raise InvalidParams("design space needs at least one cell table")
        self.cross_table = cross_table
        self.sphere_table = sphere_table
        self.viscosity = float(viscosity)
        self.gamma = float(gamma)
        self.undrained_impermeable = bool(undrained_impermeable)
        self.sphere_k_floor = float(sphere_k_floor)
        self.n_angles = int(n_angles)

        self._angles = np.arange(self.n_angles) * np.pi / 180.0
        self._qs = np.stack([tn.stress_rotation(tn.rotation_z(a))
                             for a in self._angles])
        self._qe = np.stack([tn.strain_rotation(tn.rotation_z(a))
                             for a in self._angles])
        self._r3 = np.stack([tn.rotation_z(a) for a in self._angles])

        if cross_table is not None:
            ax = np.linspace(microcell.CROSS_R_MIN, microcell.CROSS_R_MAX,
                             n_radii)
            self.cross_radii = ax
            grid = cross_table.evaluate(ax, ax)          # (nr, nr, 36)
            self._cross_vals = grid.reshape(-1, NFIELDS)
            r0, r1 = np.meshgrid(ax, ax, indexing="ij")
            self._cross_r = np.stack([r0.ravel(), r1.ravel()], axis=1)
            self.n_cross = self._cross_vals.shape[0] * self.n_angles
        else:
            self._cross_vals = np.zeros((0, NFIELDS))
            self._cross_r = np.zeros((0, 2))
            self.n_cross = 0

        if sphere_table is not None:
            ax = np.linspace(microcell.SPHERE_R_MIN, microcell.SPHERE_R_MAX,
                             n_sphere)
            self.sphere_radii = ax
            self._sphere_vals = sphere_table.evaluate(ax)
        else:
            self._sphere_vals = np.zeros((0, NFIELDS))
        self.n_sphere = self._sphere_vals.shape[0]
        self.n_candidates = self.n_cross + self.n_sphere
        self._features = None

    # -- per-candidate data ---------------------------------------------

    def _cross_base(self):
        """Unrotated state and inverse tensors at every cross grid point."""
        ng = self._cross_vals.shape[0]
        a = np.empty((ng, 6, 6))
        inva = np.empty((ng, 6, 6))
        b3 = np.empty((ng, 3, 3))
        invb = np.empty((ng, 3, 3))
        keff = np.empty((ng, 3, 3))
        invk = np.empty((ng, 3, 3))
        for g in range(ng):
            amat, bmat, kmat, _, f = _effective(
                self._cross_vals[g], self.viscosity, self.gamma, False)
            try:
                a[g] = amat
                inva[g] = tn.spd_inverse(amat)
                b3[g] = bmat
                invb[g] = tn.spd_inverse(bmat, floor_rel=1e-12)
                keff[g] = kmat
                invk[g] = tn.spd_inverse(kmat, floor_rel=1e-12)
            except NotPositiveDefinite as exc:
                r0, r1 = self._cross_r[g]
                raise NotPositiveDefinite(
                    f"cross candidate (r0={r0:g}, r1={r1:g}) has a "
                    f"singular state tensor; the catalogue resolution "
                    f"does not resolve this channel ({exc})") from exc
        return a, inva, b3, invb, keff, invk

    def _sphere_base(self):
        ns = self._sphere_vals.shape[0]
        a = np.empty((ns, 6, 6))
        inva = np.empty((ns, 6, 6))
        invb = np.empty((ns, 3, 3))
        k = np.empty((ns, 3, 3))
        invk = np.empty((ns, 3, 3))
        for s in range(ns):
            amat, bmat, kmat, _, f = _effective(
                self._sphere_vals[s], self.viscosity, self.gamma,
                self.undrained_impermeable, k_floor=self.sphere_k_floor)
            a[s] = amat
            inva[s] = tn.spd_inverse(amat)
            # the coupling vanishes in the dry state equations, but the
            # separable model still wants a finite reciprocal, so it leans
            # on the homogenized coupling of the wet cell
            invb[s] = tn.spd_inverse(bmat, floor_rel=1e-12)
            k[s] = kmat
            invk[s] = np.eye(3) / self.sphere_k_floor
        return a, inva, invb, k, invk

    def features(self):
        """The (n_candidates, 62) feature matrix, built once and cached."""
        if self._features is not None:
            return self._features
        feat = np.empty((self.n_candidates, self.N_FEATURES))
        iu6 = np.triu_indices(6)
        iu3 = np.triu_indices(3)
        if self.n_cross:
            a, inva, b3, invb, keff, invk = self._cross_base()
            qs, qe, r3 = self._qs, self._qe, self._r3
            # oriented tensors for all (grid, angle) pairs at once
            a_rot = np.einsum("tio,gop,tjp->gtij", qs, a, qs)
            inva_rot = np.einsum("tio,gop,tjp->gtij", qe, inva, qe)
            invb_rot = np.einsum("tio,gop,tjp->gtij", r3, invb, r3)
            invk_rot = np.einsum("tio,gop,tjp->gtij", r3, invk, r3)
            ng = a.shape[0]
            nt = self.n_angles
            block = feat[:self.n_cross]
            block[:, 0:21] = (inva_rot[..., iu6[0], iu6[1]]
                              * tn.W21).reshape(-1, 21)
            block[:, 21:27] = (invb_rot[..., iu3[0], iu3[1]]
                               * tn.W6).reshape(-1, 6)
            block[:, 27:33] = (invk_rot[..., iu3[0], iu3[1]]
                               * tn.W6).reshape(-1, 6)
            span = microcell.CROSS_R_MAX - microcell.CROSS_R_MIN
            lab = np.empty((ng, nt, 3))
            lab[..., 0] = ((self._cross_r[:, 0] - microcell.CROSS_R_MIN)
                           / span)[:, None]
            lab[..., 1] = ((self._cross_r[:, 1] - microcell.CROSS_R_MIN)
                           / span)[:, None]
            lab[..., 2] = np.sin(2.0 * self._angles)[None, :]
            block[:, 33:36] = lab.reshape(-1, 3)
            block[:, 36:39] = (lab ** 2).reshape(-1, 3)
            block[:, 39:60] = (a_rot[..., iu6[0], iu6[1]]
                               * tn.W21).reshape(-1, 21)
            block[:, 60] = 0.5 * np.einsum("gtij,gtij->gt", a_rot,
                                           a_rot).reshape(-1)
            block[:, 61] = np.repeat(self._cross_vals[:, 35], nt)
        if self.n_sphere:
            a, inva, invb, k, invk = self._sphere_base()
            block = feat[self.n_cross:]
            block[:, 0:21] = inva[:, iu6[0], iu6[1]] * tn.W21
            block[:, 21:27] = invb[:, iu3[0], iu3[1]] * tn.W6
            block[:, 27:33] = invk[:, iu3[0], iu3[1]] * tn.W6
            lab = np.full((self.n_sphere, 3), -1.0)
            block[:, 33:36] = lab
            block[:, 36:39] = lab ** 2
            block[:, 39:60] = a[:, iu6[0], iu6[1]] * tn.W21
            block[:, 60] = 0.5 * np.einsum("sij,sij->s", a, a)
            block[:, 61] = self._sphere_vals[:, 35]
        self._features = np.ascontiguousarray(feat)
        return self._features

    def split_id(self, cand):
        """Candidate id -> (kind, grid index, angle index or -1)."""
        if cand < self.n_cross:
            return "cross", int(cand) // self.n_angles, int(cand) % self.n_angles
        return "sphere", int(cand) - self.n_cross, -1

    def candidate_params(self, cands):
        """Readable parameters (kind, r0, r1, angle_deg) per candidate id."""
        out = []
        for c in np.asarray(cands, dtype=np.int64):
            kind, g, t = self.split_id(c)
            if kind == "cross":
                r0, r1 = self._cross_r[g]
                out.append((kind, float(r0), float(r1), float(t)))
            else:
                out.append((kind, float(self.sphere_radii[g]), np.nan, np.nan))
        return out

    def state_for_ids(self, cands):
        """Oriented state tensors of the selected candidates.

        Returns a dict with 'A' (m, 6, 6), 'B' plain-Voigt (m, 6) as used
        by the coupling term (zero for dry spherical voids), 'K' (m, 3, 3),
        'rho' (m,) and 'labels' (m, 3).
        """
        cands = np.asarray(cands, dtype=np.int64)
        m = cands.size
        out = {"A": np.empty((m, 6, 6)), "B": np.zeros((m, 6)),
               "K": np.empty((m, 3, 3)), "rho": np.empty(m),
               "labels": np.empty((m, 3))}
        span = microcell.CROSS_R_MAX - microcell.CROSS_R_MIN
        for i, c in enumerate(cands):
            kind, g, t = self.split_id(c)
            if kind == "cross":
                amat, b3, kmat, _, f = _effective(
                    self._cross_vals[g], self.viscosity, self.gamma, False)
                rot = self._r3[t]
                out["A"][i] = self._qs[t] @ amat @ self._qs[t].T
                out["B"][i] = tn.sym3_to_voigt(rot @ b3 @ rot.T)
                out["K"][i] = rot @ kmat @ rot.T
                out["rho"][i] = f["rho"]
                r0, r1 = self._cross_r[g]
                out["labels"][i] = ((r0 - microcell.CROSS_R_MIN) / span,
                                    (r1 - microcell.CROSS_R_MIN) / span,
                                    np.sin(2.0 * self._angles[t]))
            else:
                amat, b3, kmat, _, f = _effective(
                    self._sphere_vals[g], self.viscosity, self.gamma,
                    self.undrained_impermeable, k_floor=self.sphere_k_floor)
                out["A"][i] = amat
                out["K"][i] = kmat
                out["rho"][i] = f["rho"]
                out["labels"][i] = (-1.0, -1.0, -1.0)
        return out

    def rho(self):
        """Solid fraction per candidate (a view into the feature matrix)."""
        return self.features()[:, 61]

    def offgrid_cross(self, r0, r1, angle_deg=0.0):
        """Feature row and state tensors for an arbitrary cross design.

        Used for starting designs that need not sit on the candidate grid.
        Returns (feature_row, state_dict_like_state_for_ids_entry).
        """
        if self.cross_table is None:
            raise InvalidParams("no cross table in this design space")
        vec = self.cross_table.evaluate(float(r0), float(r1))
        amat, b3, kmat, _, f = _effective(vec, self.viscosity, self.gamma,
                                          False)
        ang = np.deg2rad(angle_deg)
        qs = tn.stress_rotation(tn.rotation_z(ang))
        rot = tn.rotation_z(ang)
        span = microcell.CROSS_R_MAX - microcell.CROSS_R_MIN
        lab = np.array([(r0 - microcell.CROSS_R_MIN) / span,
                        (r1 - microcell.CROSS_R_MIN) / span,
                        np.sin(2.0 * ang)])
        a_rot = qs @ amat @ qs.T
        b_rot = rot @ b3 @ rot.T
        k_rot = rot @ kmat @ rot.T
        feat = feature_row(a_rot, b_rot, k_rot, lab, f["rho"])
        state = {"A": a_rot, "B": tn.sym3_to_voigt(b_rot), "K": k_rot,
                 "rho": float(f["rho"]), "labels": lab}
        return feat, state

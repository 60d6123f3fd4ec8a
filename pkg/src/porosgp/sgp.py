"""Sequential global programming over a catalogue of oriented cells.

Each outer iteration linearizes the objective around the incumbent design,
builds a separable model that is exact at the expansion point (reciprocal
in the material tensors, quadratic in the filter labels), and minimizes it
by an exhaustive scan over all candidates per element. A solid-fraction
budget enters through a scalar multiplier found by bisection; a proximal
term on the stiffness tensor is ratcheted up until the accepted step
decreases the true merit.
"""

import numpy as np

from . import adjoint, filters, kernels, macrofem
from . import tensors as tn
from .errors import BisectionBracketFailure, NonDescentAfterMaxRetries

#: acceptance window on the mean solid fraction in the bisection
RHO_TOL = 1e-3
_MAX_BRACKET = 60
_MAX_HALVINGS = 60
_SYM3 = np.array([[0, 5, 4], [5, 1, 3], [4, 3, 2]])


class Design:
    """Per-element candidate choice with its oriented state tensors."""

    def __init__(self, ids, feats, a, bv, k, rho, labels):
        self.ids = ids
        self.feats = feats
        self.a = a
        self.bv = bv
        self.k = k
        self.rho = rho
        self.labels = labels

    @property
    def solid_fraction(self):
        return float(self.rho.mean())

    @classmethod
    def from_ids(cls, space, ids):
        ids = np.asarray(ids, dtype=np.int64)
        st = space.state_for_ids(ids)
        return cls(ids, space.features()[ids], st["A"], st["B"], st["K"],
                   st["rho"], st["labels"])

    @classmethod
    def uniform_cross(cls, space, n_el, r0=0.15, r1=0.15, angle_deg=0.0):
        """Homogeneous starting design; need not sit on the candidate grid."""
        feat, st = space.offgrid_cross(r0, r1, angle_deg)
        ones = np.ones(n_el)
        return cls(np.full(n_el, -1, dtype=np.int64),
                   np.tile(feat, (n_el, 1)),
                   np.tile(st["A"], (n_el, 1, 1)),
                   np.tile(st["B"], (n_el, 1)),
                   np.tile(st["K"], (n_el, 1, 1)),
                   st["rho"] * ones,
                   np.tile(st["labels"], (n_el, 1)))


class ModelSnapshot:
    """Separable model of one outer iteration, for consistency checks."""

    def __init__(self, k, weights, const, design, j_value, sens):
        self.k = k
        self.weights = weights
        self.const = const
        self.design = design
        self.j_value = j_value
        self.sens = sens

    def model_value(self, feats):
        """Model objective of a full design given its feature rows."""
        return self.const + float(np.sum(self.weights * feats))


class SgpResult:
    def __init__(self, design, state, history, status, iterations):
        self.design = design
        self.state = state
        self.history = history
        self.status = status
        self.iterations = iterations


def build_weights(design, sens, lop=None, lam_reg=0.0, lam_g=0.0):
    """Per-element scan weights against the candidate feature layout.

    The resource column (61) is left zero; the bisection fills it in.
    """
    ga, gb, gk = sens
    n_el = design.a.shape[0]
    b3 = design.bv[:, _SYM3]
    w = np.zeros((n_el, 62))
    w[:, 0:21] = -tn.pack_sym(np.einsum("mij,mjk,mkl->mil", design.a, ga,
                                        design.a))
    w[:, 21:27] = -tn.pack_sym(np.einsum("mij,mjk,mkl->mil", b3, gb, b3))
    w[:, 27:33] = -tn.pack_sym(np.einsum("mij,mjk,mkl->mil", design.k, gk,
                                         design.k))
    if lam_reg and lop is not None:
        a_sw, b_sw = lop.swap_coefficients(design.labels)
        w[:, 33:36] = lam_reg * b_sw
        w[:, 36:39] = lam_reg * a_sw[:, None]
    if lam_g:
        w[:, 39:60] = -lam_g * tn.pack_sym(design.a)
        w[:, 60] = lam_g
    return w


def _subsolve(weights, feats, rho_c, rho_budget, threads, rho_tol=RHO_TOL):
    """Scan with a bisected solid-fraction multiplier.

    Returns (candidate ids, multiplier). The multiplier is zero when the
    unconstrained scan already fits the budget; otherwise the bisection
    targets |mean rho - budget| <= rho_tol and falls back to the feasible
    bracket endpoint if the interval collapses first.
    """
    n_el = weights.shape[0]
    w = weights.copy()

    def scan(lam):
        w[:, 61] = lam / n_el
        ids, _ = kernels.scan_scores(w, feats, threads)
        return ids, float(rho_c[ids].mean())

    ids, rho = scan(0.0)
    if rho_budget is None or rho <= rho_budget + rho_tol:
        return ids, 0.0

    lam_hi = 1.0
    for _ in range(_MAX_BRACKET):
        ids_hi, rho_hi = scan(lam_hi)
        if rho_hi <= rho_budget:
            break
        lam_hi *= 2.0
    else:
        raise BisectionBracketFailure(
            "solid-fraction budget %.3f unreachable (mean rho %.3f at "
            "multiplier %g)" % (rho_budget, rho_hi, lam_hi))
    if abs(rho_hi - rho_budget) <= rho_tol:
        return ids_hi, lam_hi

    lam_lo = 0.0
    best = (ids_hi, lam_hi)
    for _ in range(_MAX_HALVINGS):
        mid = 0.5 * (lam_lo + lam_hi)
        ids_m, rho_m = scan(mid)
        if abs(rho_m - rho_budget) <= rho_tol:
            return ids_m, mid
        if rho_m > rho_budget:
            lam_lo = mid
        else:
            lam_hi = mid
            best = (ids_m, mid)
    return best


def run_sgp(problem, space, lam_phi=1.0, lam_psi=0.0, lam_reg=0.0,
            rho_budget=None, k_max=50, eps_j=0.0, max_retries=10,
            filter_radius=1.3, rho_tol=RHO_TOL, threads=1, start=None,
            on_model=None, on_iterate=None, raise_on_stall=False):
    """Minimize lam_phi*Phi + lam_psi*Psi + lam_reg*Xi over the catalogue.

    Returns an SgpResult whose history holds one record per accepted
    design (the starting design is record 0). status is 'converged' when
    an iteration no longer improves the merit, 'stalled' when the proximal
    ratchet ran out of retries (raised instead if raise_on_stall), and
    'max_iterations' otherwise.
    """
    n_el = problem.mesh.n_elems
    feats_c = space.features()
    rho_c = space.rho()
    lop = filters.ConeFilter(problem.mesh.centers, filter_radius)

    cur = start if start is not None else Design.uniform_cross(space, n_el)
    cur_state = macrofem.solve_state(problem, cur.a, cur.bv, cur.k)
    cur_j = (lam_phi * cur_state.phi + lam_psi * cur_state.psi
             + lam_reg * lop.roughness(cur.labels))

    def record(k, state, j, xi, rho, lam_rho, lam_g):
        return {"k": k, "J": j, "Phi": state.phi, "Psi": state.psi,
                "Xi": xi, "rho": rho, "lambda_rho": lam_rho,
                "lambda_g": lam_g}

    history = [record(0, cur_state, cur_j, lop.roughness(cur.labels),
                      cur.solid_fraction, 0.0, 0.0)]
    if on_iterate is not None:
        on_iterate(0, history[0], cur)

    status = "max_iterations"
    iterations = 0
    for k in range(1, k_max + 1):
        sens = adjoint.adjoint_sensitivities(cur_state, lam_phi, lam_psi)
        lam_g = 0.0
        lam_g0 = None
        accepted = False
        for retry in range(max_retries + 1):
            w = build_weights(cur, sens, lop, lam_reg, lam_g)
            if on_model is not None and retry == 0:
                const = cur_j - float(np.sum(w * cur.feats))
                on_model(ModelSnapshot(k, w, const, cur, cur_j, sens))
            ids, lam_rho = _subsolve(w, feats_c, rho_c, rho_budget, threads,
                                     rho_tol)
            cand = Design.from_ids(space, ids)
            cand_state = macrofem.solve_state(problem, cand.a, cand.bv,
                                              cand.k)
            cand_xi = lop.roughness(cand.labels)
            cand_j = (lam_phi * cand_state.phi + lam_psi * cand_state.psi
                      + lam_reg * cand_xi)
            delta = ((cur_j + lam_rho * cur.solid_fraction)
                     - (cand_j + lam_rho * cand.solid_fraction))
            if delta >= 0.0:
                accepted = True
                break
            if lam_g0 is None:
                scale = float(np.einsum("mij,mij->", cur.a, cur.a)) / n_el
                lam_g0 = 1e-3 * max(abs(cur_j), 1e-12) / max(scale, 1e-12)
            lam_g = max(10.0 * lam_g, lam_g0)
        if not accepted:
            if raise_on_stall:
                raise NonDescentAfterMaxRetries(
                    "no descent step after %d proximal retries at "
                    "iteration %d" % (max_retries, k))
            status = "stalled"
            break

        iterations = k
        row = record(k, cand_state, cand_j, cand_xi, cand.solid_fraction,
                     lam_rho, lam_g)
        history.append(row)
        cur, cur_state, cur_j = cand, cand_state, cand_j
        if on_iterate is not None:
            on_iterate(k, row, cur)
        if delta <= eps_j:
            status = "converged"
            break

    return SgpResult(cur, cur_state, history, status, iterations)

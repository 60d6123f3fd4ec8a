"""Adjoint solves and per-element sensitivities of the macro objectives.

For the weighted objective lam_phi * Phi + lam_psi * Psi the derivatives
with respect to each element's material tensors are assembled by Gauss-point
accumulation. Three adjoint fields are needed: the elastic adjoint of the
compliance (same operator as the state, so its factorization is reused),
and two pressure adjoints carrying the coupling of Phi and the boundary
functional Psi into the conductivity.

The returned arrays pair with symmetric tensor perturbations through the
plain Frobenius product: d(objective) = <G_A, dA> + <G_B, dB> + <G_K, dK>
per element, where dA perturbs the 6x6 engineering-Voigt stiffness
symmetrically and dB, dK perturb the symmetric 3x3 tensors.
"""

import numpy as np

from . import tensors as tn


def adjoint_sensitivities(state, lam_phi, lam_psi):
    """Per-element gradients (G_A, G_B, G_K) of lam_phi*Phi + lam_psi*Psi.

    state is a MacroState. Shapes: (n_elems, 6, 6), (n_elems, 3, 3),
    (n_elems, 3, 3).
    """
    prob = state.problem
    mesh = prob.mesh
    fu, fp = prob.free_u, prob.free_p

    theta = np.zeros_like(state.u)
    theta[fu] = state.lu_a.solve(-prob.f_g[fu])

    q1 = np.zeros_like(state.p)
    q1[fp] = state.lu_p.solve((state.cmat.T @ theta)[fp])

    q2 = np.zeros_like(state.p)
    q2[fp] = state.lu_p.solve((state.kp @ prob.p_flux)[fp])

    b, dn, n, w = mesh.bmats, mesh.shape_dn, mesh.shape_n, mesh.weights
    u_el = state.u[mesh.elem_dofs]
    th_el = theta[mesh.elem_dofs]
    eps_u = np.einsum("gsd,md->mgs", b, u_el)
    eps_t = np.einsum("gsd,md->mgs", b, th_el)

    outer = np.einsum("g,mgi,mgj->mij", w, eps_u, eps_t)
    g_a = lam_phi * 0.5 * (outer + outer.transpose(0, 2, 1))

    p_el = state.p[mesh.elem_nodes]
    p_gp = p_el @ n.T                                  # (m, 8)
    g_b = -lam_phi * np.einsum("g,mg,mgij->mij", w, p_gp,
                               _strain_tensor(eps_t))

    grad_p = np.einsum("gdn,mn->mgd", dn, p_el)
    grad_q1 = np.einsum("gdn,mn->mgd", dn, q1[mesh.elem_nodes])
    grad_q2 = np.einsum("gdn,mn->mgd", dn, q2[mesh.elem_nodes])
    grad_pt = np.einsum("gdn,mn->mgd", dn, prob.p_flux[mesh.elem_nodes])
    g_k = (lam_phi * _sym_outer(grad_p, grad_q1, w)
           + lam_psi * (_sym_outer(grad_p, grad_q2, w)
                        - _sym_outer(grad_pt, grad_p, w)))
    return g_a, g_b, g_k


def _strain_tensor(eps):
    """Engineering strain vectors (m, g, 6) to true tensors (m, g, 3, 3)."""
    out = np.empty(eps.shape[:2] + (3, 3))
    out[..., 0, 0] = eps[..., 0]
    out[..., 1, 1] = eps[..., 1]
    out[..., 2, 2] = eps[..., 2]
    out[..., 1, 2] = out[..., 2, 1] = 0.5 * eps[..., 3]
    out[..., 0, 2] = out[..., 2, 0] = 0.5 * eps[..., 4]
    out[..., 0, 1] = out[..., 1, 0] = 0.5 * eps[..., 5]
    return out


def _sym_outer(ga, gb, w):
    m = np.einsum("g,mgi,mgj->mij", w, ga, gb)
    return 0.5 * (m + m.transpose(0, 2, 1))

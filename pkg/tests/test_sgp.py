"""Filter, separable model and outer loop on synthetic affine tables."""

import numpy as np
import pytest

from porosgp import filters, macrofem, sgp
from porosgp import tensors as tn
from porosgp.catalogue import DesignSpace
from porosgp.errors import BisectionBracketFailure

from conftest import affine_cross_table, affine_sphere_table


class TestConeFilter:
    def test_homogeneous_field_is_exactly_zero(self):
        rng = np.random.default_rng(0)
        centers = np.stack(np.meshgrid(*map(np.arange, (4, 3, 2)),
                                       indexing="ij"), -1).reshape(-1, 3)
        lop = filters.ConeFilter(centers + 0.5)
        labels = np.tile(rng.standard_normal(3), (centers.shape[0], 1))
        assert lop.roughness(labels) == 0.0

    def test_line_of_three_hand_values(self):
        # weights: self 1.3, distance-one neighbor 0.3; rows normalized
        lop = filters.ConeFilter(np.array([[0.0], [1.0], [2.0]]))
        r = lop.residual(np.array([[0.0], [1.0], [2.0]]))
        np.testing.assert_allclose(r.ravel(),
                                   [-0.3 / 1.6, 0.0, 0.3 / 1.6],
                                   rtol=0, atol=1e-15)
        assert lop.roughness(np.array([[0.0], [1.0], [2.0]])) == \
            pytest.approx((0.3 / 1.6) ** 2, rel=1e-14)

    def test_difference_form_matches_matrix(self):
        rng = np.random.default_rng(1)
        centers = rng.uniform(0, 3, size=(25, 3))
        lop = filters.ConeFilter(centers)
        labels = rng.standard_normal((25, 3))
        np.testing.assert_allclose(lop.residual(labels),
                                   lop.residual_matrix @ labels,
                                   rtol=0, atol=1e-13)

    def test_single_swap_is_the_stated_quadratic(self):
        rng = np.random.default_rng(2)
        centers = np.stack(np.meshgrid(*map(np.arange, (3, 3, 2)),
                                       indexing="ij"), -1).reshape(-1, 3)
        lop = filters.ConeFilter(centers + 0.5)
        labels = rng.standard_normal((18, 3))
        a_sw, b_sw = lop.swap_coefficients(labels)
        for e in (0, 7, 17):
            new = rng.standard_normal(3)
            swapped = labels.copy()
            swapped[e] = new
            got = lop.roughness(swapped) - lop.roughness(labels)
            want = float(np.sum(a_sw[e] * (new ** 2 - labels[e] ** 2)
                                + b_sw[e] * (new - labels[e])))
            assert got == pytest.approx(want, rel=1e-10, abs=1e-12)


def small_space():
    return DesignSpace(affine_cross_table(), affine_sphere_table(),
                       n_radii=6, n_angles=180, n_sphere=10)


def small_problem():
    return macrofem.default_problem(3, 2, 1, traction=1.0)


def feature_row(a, b3, k3, labels, rho):
    """Candidate feature row from oriented state tensors."""
    f = np.zeros(DesignSpace.N_FEATURES)
    f[0:21] = tn.pack_sym(tn.spd_inverse(a)) * tn.W21
    f[21:27] = tn.pack_sym(tn.spd_inverse(b3, floor_rel=1e-12)) * tn.W6
    f[27:33] = tn.pack_sym(tn.spd_inverse(k3, floor_rel=1e-12)) * tn.W6
    f[33:36] = labels
    f[36:39] = labels ** 2
    f[39:60] = tn.pack_sym(a) * tn.W21
    f[60] = 0.5 * tn.frobenius(a, a)
    f[61] = rho
    return f


@pytest.fixture(scope="module")
def snapshots():
    out = []
    sgp.run_sgp(small_problem(), small_space(), lam_phi=1.0,
                lam_psi=-5.0, lam_reg=0.02, k_max=3,
                on_model=out.append)
    assert out
    return out


class TestModelConsistency:
    def test_zeroth_order_exact_at_every_expansion(self, snapshots):
        for snap in snapshots:
            got = snap.model_value(snap.design.feats)
            assert got == pytest.approx(snap.j_value, rel=1e-12, abs=1e-12)

    def test_first_order_matches_tensor_differences(self, snapshots):
        snap = snapshots[0]
        design = snap.design
        e = 3
        a = design.a[e]
        b3 = tn.voigt_to_sym3(design.bv[e])
        k3 = design.k[e]
        lab = design.labels[e]
        rho = design.rho[e]
        ga, gb, gk = snap.sens

        def model_with(**kw):
            feats = design.feats.copy()
            feats[e] = feature_row(kw.get("a", a), kw.get("b3", b3),
                                   kw.get("k3", k3), kw.get("lab", lab),
                                   rho)
            return snap.model_value(feats)

        h = 1e-6
        cases = []
        for i, j in ((0, 0), (2, 2), (0, 1), (3, 5)):
            d = np.zeros((6, 6))
            d[i, j] = d[j, i] = 1.0
            fd = (model_with(a=a + h * d) - model_with(a=a - h * d)) / (2 * h)
            cases.append((fd, tn.frobenius(ga[e], d)))
        for i, j in ((0, 0), (1, 1), (0, 2)):
            d = np.zeros((3, 3))
            d[i, j] = d[j, i] = 1.0
            fd = (model_with(b3=b3 + h * d)
                  - model_with(b3=b3 - h * d)) / (2 * h)
            cases.append((fd, tn.frobenius(gb[e], d)))
            fd = (model_with(k3=k3 + h * d)
                  - model_with(k3=k3 - h * d)) / (2 * h)
            cases.append((fd, tn.frobenius(gk[e], d)))
        for fd, want in cases:
            assert fd == pytest.approx(want, rel=1e-6, abs=1e-6)

    def test_label_slots_carry_the_swap_quadratic(self, snapshots):
        snap = snapshots[0]
        design = snap.design
        lop = filters.ConeFilter(small_problem().mesh.centers)
        a_sw, b_sw = lop.swap_coefficients(design.labels)
        e, ell, h = 2, 1, 1e-4
        lab = design.labels[e]
        step = np.zeros(3)
        step[ell] = h

        def model_with(lab):
            feats = design.feats.copy()
            feats[e] = feature_row(design.a[e], tn.voigt_to_sym3(
                design.bv[e]), design.k[e], lab, design.rho[e])
            return snap.model_value(feats)

        fd = (model_with(lab + step) - model_with(lab - step)) / (2 * h)
        want = 0.02 * (b_sw[e, ell] + 2.0 * a_sw[e] * lab[ell])
        assert fd == pytest.approx(want, rel=1e-8, abs=1e-10)


class TestSubsolver:
    def test_returned_ids_minimize_the_scored_model(self):
        space = small_space()
        rng = np.random.default_rng(5)
        weights = rng.standard_normal((6, 62))
        ids, lam = sgp._subsolve(weights, space.features(), space.rho(),
                                 None, 1)
        assert lam == 0.0
        scores = weights @ space.features().T
        np.testing.assert_array_equal(ids, np.argmin(scores, axis=1))

    def test_budget_activates_the_multiplier(self):
        space = small_space()
        feats = space.features()
        rho_c = space.rho()
        # reward a large stiffness norm so the scan favors heavy cells
        weights = np.zeros((6, 62))
        weights[:, 60] = -1.0
        ids0, lam0 = sgp._subsolve(weights, feats, rho_c, None, 1)
        heavy = float(rho_c[ids0].mean())
        budget = heavy - 0.05
        ids, lam = sgp._subsolve(weights, feats, rho_c, budget, 1)
        got = float(rho_c[ids].mean())
        assert lam0 == 0.0 and lam > 0.0
        assert got <= budget + sgp.RHO_TOL
        # at the returned multiplier the ids are again exactly the argmin
        w_full = weights.copy()
        w_full[:, 61] = lam / 6.0
        scores = w_full @ feats.T
        np.testing.assert_array_equal(ids, np.argmin(scores, axis=1))

    def test_unreachable_budget_raises(self):
        space = small_space()
        weights = np.zeros((6, 62))
        weights[:, 60] = -1.0
        with pytest.raises(BisectionBracketFailure):
            sgp._subsolve(weights, space.features(), space.rho(),
                          float(space.rho().min()) - 0.01, 1)


class TestRunSgp:
    def test_descends_and_converges(self):
        res = sgp.run_sgp(small_problem(), small_space(), lam_phi=1.0,
                          k_max=25)
        assert res.status == "converged"
        js = [row["J"] for row in res.history]
        assert all(b <= a + 1e-12 for a, b in zip(js, js[1:]))
        assert js[-1] < js[0]
        assert res.history[-1]["Phi"] == pytest.approx(res.state.phi)

    def test_budget_run_lands_on_the_budget(self):
        space = small_space()
        free = sgp.run_sgp(small_problem(), space, lam_phi=1.0, k_max=25)
        budget = free.design.solid_fraction - 0.03
        res = sgp.run_sgp(small_problem(), space, lam_phi=1.0,
                          rho_budget=budget, k_max=25)
        assert res.status == "converged"
        assert res.design.solid_fraction <= budget + sgp.RHO_TOL
        assert any(row["lambda_rho"] > 0 for row in res.history)

    def test_history_is_deterministic(self):
        space = small_space()
        runs = [sgp.run_sgp(small_problem(), space, lam_phi=1.0,
                            lam_psi=-5.0, lam_reg=0.01, k_max=25)
                for _ in range(2)]
        h0, h1 = runs[0].history, runs[1].history
        assert len(h0) == len(h1)
        for r0, r1 in zip(h0, h1):
            assert r0 == r1

    def test_offgrid_start_is_recorded_before_iterating(self):
        space = small_space()
        problem = small_problem()
        start = sgp.Design.uniform_cross(space, problem.mesh.n_elems)
        assert (start.ids == -1).all()
        st = macrofem.solve_state(problem, start.a, start.bv, start.k)
        res = sgp.run_sgp(problem, space, lam_phi=1.0, k_max=2, start=start)
        assert res.history[0]["k"] == 0
        assert res.history[0]["Phi"] == st.phi
        assert res.history[0]["Xi"] == 0.0

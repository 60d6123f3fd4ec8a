import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from porosgp import NotPositiveDefinite
from porosgp import tensors as tn


def random_rotation(seed):
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0.0:
        q[:, 0] = -q[:, 0]
    return q


def random_spd(seed, n=6):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n))
    return m @ m.T + n * np.eye(n)


def test_iso_stiffness_lame_entries():
    e, nu = 1.0, 0.3
    lam = e * nu / ((1 + nu) * (1 - 2 * nu))
    mu = e / (2 * (1 + nu))
    a = tn.iso_stiffness(e, nu)
    assert np.allclose(a[0, 0], lam + 2 * mu)
    assert np.allclose(a[0, 1], lam)
    assert np.allclose(a[3, 3], mu)
    assert np.allclose(a, a.T)


def test_stress_rotation_identity_and_composition():
    assert np.allclose(tn.stress_rotation(np.eye(3)), np.eye(6))
    qa = tn.stress_rotation(tn.rotation_z(0.3))
    qb = tn.stress_rotation(tn.rotation_z(0.5))
    qab = tn.stress_rotation(tn.rotation_z(0.8))
    assert np.allclose(qa @ qb, qab, atol=1e-12)


def test_rotation_matches_fourth_order_tensor_rule():
    # entries of the rotated Voigt matrix must equal the rotated tensor
    a = random_spd(3)
    a = 0.5 * (a + a.T)
    rot = random_rotation(7)
    t = tn.voigt6_to_tensor4(a)
    t_rot = np.einsum("ip,jq,kr,ls,pqrs->ijkl", rot, rot, rot, rot, t)
    assert np.allclose(tn.rotate_stiffness(a, rot),
                       tn.tensor4_to_voigt6(t_rot), atol=1e-12)


def test_strain_rotation_is_inverse_transpose():
    rot = random_rotation(11)
    q = tn.stress_rotation(rot)
    qe = tn.strain_rotation(rot)
    assert np.allclose(qe, np.linalg.inv(q).T, atol=1e-12)


def test_compliance_rotation_consistent_with_stiffness():
    a = random_spd(5)
    rot = random_rotation(6)
    s_rot = tn.rotate_compliance(np.linalg.inv(a), rot)
    assert np.allclose(s_rot, np.linalg.inv(tn.rotate_stiffness(a, rot)),
                       atol=1e-10)


def test_isotropic_stiffness_is_rotation_invariant():
    a = tn.iso_stiffness(10.0, 0.25)
    rot = random_rotation(9)
    assert np.allclose(tn.rotate_stiffness(a, rot), a, atol=1e-12)


def test_quarter_turn_exchanges_axes():
    a = np.diag([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    ar = tn.rotate_stiffness(a, tn.rotation_z(np.pi / 2))
    assert np.allclose(np.diag(ar), [2.0, 1.0, 3.0, 5.0, 4.0, 6.0], atol=1e-12)


def test_sym3_rotation_and_voigt_round_trip():
    rng = np.random.default_rng(2)
    m = rng.normal(size=(3, 3))
    m = m + m.T
    rot = random_rotation(4)
    assert np.allclose(tn.rotate_sym3(m, rot),
                       np.einsum("ip,jq,pq->ij", rot, rot, m), atol=1e-12)
    assert np.allclose(tn.voigt_to_sym3(tn.sym3_to_voigt(m)), m)


def test_pack_unpack_and_weighted_products():
    x = random_spd(13)
    y = random_spd(14)
    assert np.allclose(tn.unpack_sym(tn.pack_sym(x), 6), x)
    assert np.allclose(np.dot(tn.W21 * tn.pack_sym(x), tn.pack_sym(y)),
                       tn.frobenius(x, y))
    x3, y3 = random_spd(15, 3), random_spd(16, 3)
    assert np.allclose(np.dot(tn.W6 * tn.pack_sym(x3), tn.pack_sym(y3)),
                       tn.frobenius(x3, y3))


def test_pack_sym_batched():
    ms = np.stack([random_spd(s, 3) for s in range(4)])
    packed = tn.pack_sym(ms)
    assert packed.shape == (4, 6)
    assert np.allclose(tn.unpack_sym(packed, 3), ms)


def test_spd_inverse_round_trip_and_floor():
    a = random_spd(21)
    assert np.allclose(tn.spd_inverse(a) @ a, np.eye(6), atol=1e-10)
    # floored inverse is the exact inverse of the shifted matrix
    shift = 1e-6 * np.trace(a) / 6
    assert np.allclose(tn.spd_inverse(a, floor_rel=1e-6),
                       np.linalg.inv(a + shift * np.eye(6)), atol=1e-10)


def test_spd_inverse_rejects_bad_input():
    with pytest.raises(NotPositiveDefinite):
        tn.spd_inverse(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotPositiveDefinite):
        tn.spd_inverse(-np.eye(3))
    with pytest.raises(NotPositiveDefinite):
        # definite but below the floor
        tn.spd_inverse(np.diag([1e-14, 1.0, 1.0]), floor_rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10.0, 10.0), st.floats(-10.0, 10.0))
def test_z_rotation_composition_property(a, b):
    qa = tn.stress_rotation(tn.rotation_z(a))
    qb = tn.stress_rotation(tn.rotation_z(b))
    assert np.allclose(qa @ qb, tn.stress_rotation(tn.rotation_z(a + b)),
                       atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_rotation_preserves_spectrum_property(seed):
    # congruence with an orthogonal-similar matrix keeps A SPD and, because
    # Q is not orthogonal in the engineering convention, we check instead
    # that the rotated tensor stays symmetric positive definite
    a = random_spd(seed)
    ar = tn.rotate_stiffness(a, random_rotation(seed + 1))
    assert np.allclose(ar, ar.T, atol=1e-9)
    assert np.linalg.eigvalsh(ar)[0] > 0.0

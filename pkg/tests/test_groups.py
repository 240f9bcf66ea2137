import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lieforge.errors import ChartError, InvalidElementError, UsageError
from lieforge.groups import GROUP_NAMES, GroupOp, commutator, get_group, group_op, random_pair
from lieforge.proximal import spectrum_symmetry_defect

from conftest import GROUPS

coords3 = st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3)
coords8 = st.lists(st.floats(-0.8, 0.8), min_size=8, max_size=8)


def test_registry_names():
    for name in GROUP_NAMES:
        gs = get_group(name)
        assert gs.name == name
    assert get_group("SU2") is get_group("su2")
    with pytest.raises(UsageError):
        get_group("gl7")


def test_dimensions():
    dims = {"su2": (2, 3), "so3": (3, 3), "sl2r": (2, 3), "sl3r": (3, 8), "aff1": (2, 2)}
    for name, (d, n) in dims.items():
        gs = get_group(name)
        assert (gs.matrix_dim, gs.algebra_dim) == (d, n)
    assert not get_group("aff1").semisimple
    assert get_group("su2").compact and not get_group("sl2r").compact


@pytest.mark.parametrize("name", GROUP_NAMES)
def test_basis_orthonormal_and_jacobi(name, rng):
    gs = get_group(name)
    G = np.real(np.einsum("iab,jab->ij", gs.basis.conj(), gs.basis))
    assert np.allclose(G, np.eye(gs.algebra_dim), atol=1e-12)
    x, y, z = rng.standard_normal((3, gs.algebra_dim))
    jac = gs.bracket(x, gs.bracket(y, z)) + gs.bracket(y, gs.bracket(z, x)) + gs.bracket(z, gs.bracket(x, y))
    assert np.linalg.norm(jac) < 1e-12
    # bracket agrees with the matrix commutator
    X, Y = gs.from_coords(x), gs.from_coords(y)
    assert np.allclose(gs.from_coords(gs.bracket(x, y)), X @ Y - Y @ X, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(coords3, st.sampled_from(["su2", "so3", "sl2r", "aff1"]))
def test_exp_log_roundtrip_small(v, name):
    gs = get_group(name)
    v = np.array(v[: gs.algebra_dim])
    g = gs.exp(v)
    assert gs.membership_residual(g) < 1e-10
    assert np.allclose(gs.log(g), v, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(coords8)
def test_exp_log_roundtrip_sl3r(v):
    gs = get_group("sl3r")
    v = np.array(v) * 0.5
    g = gs.exp(v)
    assert gs.membership_residual(g) < 1e-10
    assert np.allclose(gs.log(g), v, atol=1e-8)


@pytest.mark.parametrize("name", GROUPS)
def test_inverse_and_adjoint_homomorphism(name, rng):
    gs = get_group(name)
    a = gs.exp(gs.random_algebra(rng, scale=0.7))
    b = gs.exp(gs.random_algebra(rng, scale=0.7))
    assert np.allclose(a @ gs.inverse(a), np.eye(gs.matrix_dim), atol=1e-12)
    assert np.allclose(gs.adjoint(a @ b), gs.adjoint(a) @ gs.adjoint(b), atol=1e-10)
    x = gs.random_algebra(rng)
    assert np.allclose(gs.from_coords(gs.adjoint(a) @ x), a @ gs.from_coords(x) @ gs.inverse(a), atol=1e-10)


@pytest.mark.parametrize("name", GROUPS)
def test_distance_is_symmetric_and_left_invariant(name, rng):
    gs = get_group(name)
    a, b, c = (gs.exp(gs.random_algebra(rng, scale=0.4)) for _ in range(3))
    assert gs.distance(a, b) == pytest.approx(gs.distance(b, a), rel=1e-9, abs=1e-12)
    assert gs.distance(c @ a, c @ b) == pytest.approx(gs.distance(a, b), rel=1e-8, abs=1e-12)
    assert gs.distance(a, a) < 1e-12


def test_log_near_identity_matches_log(rng):
    for name in GROUPS:
        gs = get_group(name)
        v = gs.random_algebra(rng, scale=1e-5)
        g = gs.exp(v)
        assert np.allclose(gs.log_near_identity(g - np.eye(gs.matrix_dim)), v, rtol=1e-9, atol=1e-18)


def test_so3_log_refuses_half_turn():
    gs = get_group("so3")
    g = gs.exp(np.array([0.0, 0.0, gs.chart_radius]))  # rotation by pi
    with pytest.raises(ChartError):
        gs.log(g)


def test_sl2r_log_refuses_negative_trace():
    gs = get_group("sl2r")
    with pytest.raises(ChartError):
        gs.log(np.diag([-2.0, -0.5]))


@pytest.mark.parametrize("name", GROUPS)
def test_spectrum_symmetry(name, rng):
    gs = get_group(name)
    for _ in range(5):
        g = gs.exp(gs.random_algebra(rng, scale=1.0))
        assert spectrum_symmetry_defect(gs, g) < 1e-8


def test_group_op_validates():
    gs = get_group("so3")
    a = gs.element(gs.exp(np.array([0.1, 0.2, 0.3])))
    b = gs.element(gs.exp(np.array([0.3, -0.1, 0.0])))
    c = group_op(a, b, GroupOp.COMM)
    assert np.allclose(c.matrix, commutator(gs, a.matrix, b.matrix))
    assert np.allclose(group_op(a, None, "inv").matrix, a.matrix.T)
    with pytest.raises(InvalidElementError):
        gs.element(2 * np.eye(3))
    other = get_group("sl3r").element(np.eye(3))
    with pytest.raises(UsageError):
        group_op(a, other, GroupOp.MUL)


def test_random_pair_reproducible():
    gs = get_group("su2")
    assert np.array_equal(random_pair(gs, 3), random_pair(gs, 3))
    assert not np.array_equal(random_pair(gs, 3), random_pair(gs, 4))
    norms = [gs.norm_from_identity(m) for m in random_pair(gs, 3)]
    assert all(0.5 < n < 1.5 for n in norms)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lieforge.dynamics import assemble_psi
from lieforge.errors import UsageError
from lieforge.groups import get_group
from lieforge.netgen import build_base_net
from lieforge.relations import (
    BOUND_FACTOR,
    RESIDUAL_TOL,
    affine_gap_constant,
    affine_limit_error,
    affine_relation_sequence,
    anchor_word,
    find_relation_commutator_power,
    find_relation_net_newton,
    iterated_length_bound,
    newton_correct,
    pair_distance,
    relation_rate_curve,
    seed_words,
    solvable_lift,
)
from lieforge.sk import build_levels
from lieforge.words import ElementTuple, commutator_word, concat, evaluate, generator, iterated_commutator, parse, reduce


@pytest.fixture(scope="module")
def su2_state(su2_pair):
    net = build_base_net(su2_pair, 10, dedup_radius=0.01, samples=3000)
    return build_levels(net, 2, measure_count=50, calib_samples=500)


@pytest.fixture(scope="module")
def sl2r_spec(sl2r_pair):
    return assemble_psi(sl2r_pair, seed=0)


def test_seed_words(su2_pair):
    seeds = seed_words(su2_pair, 10)
    assert seeds and seeds == sorted(seeds)
    gs = su2_pair.group
    for w in seeds:
        assert len(w) == 12
        assert gs.norm_from_identity(evaluate(w, su2_pair)) <= 0.9


def test_net_newton_certificate(su2_pair, su2_state):
    gs = su2_pair.group
    for level in (1, 2):
        c = find_relation_net_newton(su2_pair, su2_state, level)
        assert c.method == "NetNewton" and c.level == level
        assert len(reduce(c.word)) == len(c.word) > 0
        assert c.residual <= RESIDUAL_TOL
        assert gs.norm_from_identity(evaluate(c.word, c.perturbed_pair)) <= RESIDUAL_TOL
        assert c.checks["non_identical"] and c.checks["probe_dist"] >= 1e-4
        assert c.pair_dist <= BOUND_FACTOR * c.checks["first_step_bound"]
        assert c.pair_dist == pytest.approx(pair_distance(c.perturbed_pair, su2_pair))
        d = c.to_dict()
        assert d["pair_dist"] == c.pair_dist and d["word"] == list(c.word.letters)


def test_newton_fixed_point(su2_pair, su2_state):
    c = find_relation_net_newton(su2_pair, su2_state, 1)
    again, res, hist = newton_correct(c.word, c.perturbed_pair)
    assert pair_distance(again, c.perturbed_pair) <= 1e-15
    assert len(hist) == 1


def test_relation_curve(su2_pair, su2_state):
    curve = relation_rate_curve(su2_pair, su2_state)
    assert not curve.failures
    d = [c.pair_dist for c in curve.certificates]
    assert d[1] < d[0]
    assert np.isfinite(curve.kappa_hat) and curve.c_hat > 0
    with pytest.raises(UsageError):
        relation_rate_curve(su2_pair, su2_state, levels=[1])


def test_level_out_of_range(su2_pair, su2_state):
    with pytest.raises(UsageError):
        find_relation_net_newton(su2_pair, su2_state, 3)


def test_commutator_power_relation(sl2r_spec):
    w, u0 = anchor_word(sl2r_spec)
    certs = [find_relation_commutator_power(sl2r_spec, k, w) for k in (8, 16, 32)]
    for c in certs:
        assert c.residual <= RESIDUAL_TOL
        assert c.checks["non_identical"] and c.checks["nontrivial"]
        assert c.method == "CommutatorPower"
        assert c.word is None and c.checks["numeric_realization"]
    assert certs[0].pair_dist > certs[1].pair_dist > certs[2].pair_dist
    assert certs[0].checks["u_norm"] > certs[2].checks["u_norm"]


def test_commutator_power_materialized(sl2r_pair):
    spec = assemble_psi(sl2r_pair, seed=7)
    c = find_relation_commutator_power(spec, 4)
    assert c.word is not None and len(c.word) == c.word_length
    assert spec.group.norm_from_identity(evaluate(c.word, c.perturbed_pair)) < 1e-9


def test_iterated_length_bound():
    g, h = parse("a b"), parse("b a B")
    for k in range(6):
        assert len(iterated_commutator(g, h, k)) <= iterated_length_bound(len(g), len(h), k)


def test_solvable_lift_base_case():
    w = parse("b a B")
    assert solvable_lift(w, 0) == commutator_word(generator(1), w)
    # a power of a uses b instead
    assert solvable_lift(parse("a a"), 0) == commutator_word(generator(2), parse("a a"))
    with pytest.raises(UsageError):
        solvable_lift(parse("1"), 1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from([1, -1, 2, -2]), min_size=1, max_size=12), st.integers(0, 4))
def test_solvable_lift_bound_and_nontrivial(raw, s):
    w = reduce(raw)
    if not w:
        return
    lift = solvable_lift(w, s)
    assert len(lift) > 0
    assert len(lift) <= 4 ** (s + 1) * len(w)


def test_solvable_lift_kills_translations():
    gs = get_group("aff1")
    pair = ElementTuple(gs, np.array([gs.exp(np.array([0.4, 0.3])), gs.exp(np.array([-0.2, 0.7]))]))
    w = parse("a b A B")  # a commutator: a translation in Aff1
    val = evaluate(w, pair)
    assert abs(val[0, 0] - 1) < 1e-12 and abs(val[0, 1]) > 1e-3
    lifted = solvable_lift(w, 1)
    assert np.allclose(evaluate(lifted, pair), np.eye(2), atol=1e-12)
    # a non-translation word is not killed
    assert not np.allclose(evaluate(solvable_lift(parse("a"), 1), pair), np.eye(2), atol=1e-6)


def test_affine_table():
    steps = affine_relation_sequence(0.3, 40)
    assert [(s.k, s.m_k) for s in steps[:3]] == [(1, 3), (2, 11), (3, 37)]
    assert steps[0].s_k == pytest.approx(1 / 3, abs=1e-15)
    assert steps[1].s_k == pytest.approx(11 ** -0.5, abs=1e-15)
    assert steps[2].s_k == pytest.approx(37 ** (-1 / 3), abs=1e-15)
    for s in steps:
        assert abs(s.m_k * s.s_k**s.k - 1) < 1e-12
        assert s.relation_residual <= 1e-10
        assert s.gap <= affine_gap_constant(steps) / s.k
    errs = [affine_limit_error(0.3, k) for k in (10, 20, 40)]
    assert errs[0] > errs[1] > errs[2]


def test_affine_errors_and_ties():
    with pytest.raises(UsageError):
        affine_relation_sequence(1.5, 3)
    steps = affine_relation_sequence(0.5, 4)
    assert all(s.floor_tie for s in steps)
    assert [s.m_k for s in steps] == [2, 4, 8, 16]

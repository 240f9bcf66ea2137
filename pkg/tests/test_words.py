import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lieforge.errors import SizeError, UsageError
from lieforge.words import (
    Word,
    commutator_word,
    concat,
    count_reduced,
    enumerate_reduced,
    evaluate,
    evaluate_many,
    from_json,
    generator,
    invert,
    is_nontrivial,
    iterated_commutator,
    nested_product_commutator,
    parse,
    power,
    reduce,
    to_json,
    word_derivative,
    word_jacobian,
)

raw_words = st.lists(st.sampled_from([1, -1, 2, -2]), max_size=30)


@given(raw_words)
def test_reduce_is_idempotent_and_reduced(raw):
    w = reduce(raw)
    assert reduce(w) == w
    assert all(x != -y for x, y in zip(w.letters, w.letters[1:]))


@given(raw_words)
def test_word_times_inverse_is_trivial(raw):
    w = reduce(raw)
    assert not concat(w, invert(w))
    assert not is_nontrivial(concat(invert(w), w))


@given(raw_words, raw_words)
def test_evaluation_is_a_homomorphism(r1, r2):
    from conftest import make_pair

    t = make_pair("so3")
    u, v = reduce(r1), reduce(r2)
    assert np.allclose(evaluate(concat(u, v), t), evaluate(u, t) @ evaluate(v, t), atol=1e-10)


@given(raw_words)
def test_string_and_json_roundtrip(raw):
    w = reduce(raw)
    assert parse(str(w)) == w
    assert from_json(to_json(w)) == w
    assert json.loads(to_json(w)) == list(w.letters)


def test_human_form():
    assert str(parse("a b A B")) == "a b A B"
    assert str(Word()) == "1"
    assert parse("1") == Word()
    assert str(commutator_word(generator(1), generator(2))) == "a b A B"
    with pytest.raises(UsageError):
        Word((1, -1))
    with pytest.raises(UsageError):
        Word((3,), 2)


def test_shortlex_order():
    words = [Word(x) for x in enumerate_reduced(3)]
    assert words == sorted(words)
    assert [str(w) for w in words[:5]] == ["1", "a", "A", "b", "B"]


def test_count_reduced():
    for L in range(6):
        assert len(enumerate_reduced(L)) == count_reduced(L) == 2 * 3**L - 1
    assert count_reduced(8) == 13121


def test_power_and_negative_power():
    w = parse("a b")
    assert power(w, 3) == parse("a b a b a b")
    assert power(w, -1) == parse("B A")
    assert power(w, 0) == Word()


def test_evaluate_many_matches_evaluate(so3_pair):
    ws = [Word(x) for x in enumerate_reduced(4)]
    many = evaluate_many(ws, so3_pair)
    for w, m in zip(ws, many):
        assert np.allclose(m, evaluate(w, so3_pair))


@pytest.mark.parametrize("name", ["su2", "so3", "sl2r", "sl3r"])
def test_word_jacobian_matches_finite_differences(name, rng):
    from conftest import make_pair

    t = make_pair(name)
    gs = t.group
    n = gs.algebra_dim
    w = reduce(rng.choice([1, -1, 2, -2], size=15))
    d = rng.standard_normal((2, n))
    h = 1e-6
    plus = np.array([a @ gs.exp(h * x) for a, x in zip(t.mats, d)])
    minus = np.array([a @ gs.exp(-h * x) for a, x in zip(t.mats, d)])
    from lieforge.words import ElementTuple

    W = evaluate(w, t)
    fp = gs.log(gs.inverse(W) @ evaluate(w, ElementTuple(gs, plus)))
    fm = gs.log(gs.inverse(W) @ evaluate(w, ElementTuple(gs, minus)))
    fd = (fp - fm) / (2 * h)
    an = word_derivative(w, t, d)
    assert np.linalg.norm(fd - an) <= 1e-5 * max(1.0, np.linalg.norm(an))
    assert word_jacobian(w, t).shape == (n, 2 * n)


def test_iterated_commutator():
    g, h = parse("a"), parse("b")
    assert iterated_commutator(g, h, 0) == h
    assert iterated_commutator(g, h, 1) == parse("a b A B")
    assert iterated_commutator(g, h, 2) == commutator_word(g, parse("a b A B"))
    with pytest.raises(SizeError):
        iterated_commutator(g, h, 31)


def test_nested_product_commutator():
    a, b, c = parse("a"), parse("b"), parse("a b")
    assert nested_product_commutator([a, b]) == commutator_word(a, b)
    assert nested_product_commutator([a, b, c]) == commutator_word(commutator_word(a, b), c)
    with pytest.raises(UsageError):
        nested_product_commutator([a])


def test_element_tuple_rejects_non_members():
    from lieforge.groups import get_group
    from lieforge.words import ElementTuple

    with pytest.raises(UsageError):
        ElementTuple(get_group("sl2r"), np.array([np.eye(2) * 2, np.eye(2)]))

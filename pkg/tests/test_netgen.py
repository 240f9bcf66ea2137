import json

import numpy as np
import pytest

from lieforge.errors import IntegrityError, MigrationRequiredError, ReduciblePairError, SizeError
from lieforge.groups import get_group
from lieforge.netgen import (
    Region,
    build_base_net,
    build_or_load,
    compose_nets,
    irrationality_screen,
    linear_scan,
    load_net,
    nearest,
    nearest_many,
    pair_hash,
    product_search,
    save_net,
    validate,
    _bfs,
)
from lieforge.words import ElementTuple, Word, enumerate_reduced, evaluate, evaluate_many


def test_bfs_matches_enumeration(so3_pair):
    parents, lasts, lens, mats = _bfs(so3_pair, 4)
    words = [Word(x) for x in enumerate_reduced(4)]
    assert len(mats) == len(words)
    assert np.allclose(mats, evaluate_many(words, so3_pair))
    with pytest.raises(SizeError):
        _bfs(so3_pair, 21)


def test_entries_are_shortlex_and_deduplicated(so3_pair):
    net = build_base_net(so3_pair, 6, dedup_radius=0.05, samples=500)
    assert net.words == sorted(net.words)
    gs = net.group
    for i in range(0, len(net), 37):
        d = gs.distances(net.mats[i], net.mats)
        d[i] = np.inf
        assert d.min() > 0.05


@pytest.mark.parametrize("fixture", ["so3_small_net", "sl2r_small_net"])
def test_nearest_matches_linear_scan(fixture, request, rng):
    net = request.getfixturevalue(fixture)
    gs = net.group
    for _ in range(40):
        t = gs.exp(gs.random_ball(rng, 1, 1.0)[0])
        w1, _, d1 = nearest(net, t)
        w2, _, d2 = linear_scan(net, t)
        assert w1 == w2 and d1 == pytest.approx(d2, abs=1e-12)


def test_nearest_many_agrees(so3_small_net, rng):
    gs = so3_small_net.group
    ts = gs.exp(gs.random_ball(rng, 30, 1.0))
    idx, d = nearest_many(so3_small_net, ts)
    for t, i, di in zip(ts, idx, d):
        _, _, ref = linear_scan(so3_small_net, t)
        assert di == pytest.approx(ref, abs=1e-12)


def test_covering_radius_matches_exhaustive(so3_pair):
    net = build_base_net(so3_pair, 5, dedup_radius=0.0, samples=1000)
    gs = net.group
    val, d = validate(net, 1000, 0)
    # exhaustive: every enumerated word, full scan, same samples
    words = [Word(x) for x in enumerate_reduced(5)]
    mats = evaluate_many(words, so3_pair)
    pts = net.region.sample(gs, np.random.default_rng(0), 1000)
    brute = np.array([gs.distances(p, mats).min() for p in pts])
    assert np.allclose(np.sort(d), np.sort(brute), atol=1e-12)


def test_screen_rejects_commuting_pair():
    gs = get_group("so3")
    a = gs.exp(np.array([0.3, 0.1, 0.2]))
    pair = ElementTuple(gs, np.array([a, a @ a]))
    with pytest.raises(ReduciblePairError):
        irrationality_screen(pair)


def test_identity_pair_gives_degenerate_net():
    gs = get_group("su2")
    pair = ElementTuple(gs, np.array([np.eye(2), np.eye(2)]))
    net = build_base_net(pair, 4)
    assert net.degenerate and len(net) == 1


def test_partial_flag(so3_pair):
    net = build_base_net(so3_pair, 3, target_delta=1e-3, samples=500)
    assert "partial" in net.flags


def test_cache_roundtrip(tmp_path, so3_small_net, rng):
    p = str(tmp_path / "net.json")
    save_net(so3_small_net, p)
    back = load_net(p, expected_pair_hash=pair_hash(so3_small_net.pair))
    assert back.words == so3_small_net.words
    assert np.array_equal(back.mats, so3_small_net.mats)
    gs = back.group
    for _ in range(50):
        t = gs.exp(gs.random_ball(rng, 1, 1.0)[0])
        assert nearest(back, t)[0] == nearest(so3_small_net, t)[0]


def test_cache_roundtrip_complex(tmp_path, su2_pair):
    net = build_base_net(su2_pair, 4, samples=300)
    p = str(tmp_path / "su2.json")
    save_net(net, p)
    back = load_net(p)
    assert np.array_equal(back.mats, net.mats)


def test_cache_errors(tmp_path, so3_small_net, sl2r_small_net):
    p = str(tmp_path / "net.json")
    save_net(so3_small_net, p)
    with pytest.raises(IntegrityError):
        load_net(p, expected_pair_hash=pair_hash(sl2r_small_net.pair))
    data = json.loads(open(p).read())
    data["entries"][3][1][0] += 1e-3
    open(p, "w").write(json.dumps(data))
    with pytest.raises(IntegrityError, match="digest"):
        load_net(p)
    data["version"] = 99
    open(p, "w").write(json.dumps(data))
    with pytest.raises(MigrationRequiredError):
        load_net(p)
    open(p, "w").write("{not json")
    with pytest.raises(IntegrityError):
        load_net(p)


def test_empty_net_roundtrip(tmp_path, so3_small_net):
    from lieforge.netgen import _subset

    empty = _subset(so3_small_net, np.array([], dtype=int))
    p = str(tmp_path / "empty.json")
    save_net(empty, p)
    back = load_net(p)
    assert len(back) == 0 and back.degenerate


def test_build_or_load_uses_cache(tmp_path, so3_pair):
    a = build_or_load(so3_pair, 4, cache_dir=str(tmp_path), samples=300)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    b = build_or_load(so3_pair, 4, cache_dir=str(tmp_path), samples=300)
    assert a.words == b.words
    build_or_load(so3_pair, 4, cache_dir=str(tmp_path), samples=200)
    assert len(list(tmp_path.iterdir())) == 2


def test_compose_nets_refines(so3_pair):
    outer = build_base_net(so3_pair, 5, samples=1000)
    inner = build_base_net(so3_pair, 5, Region(outer.claimed_radius * 1.05), samples=1000, dedup_radius=0.01)
    both = compose_nets(outer, inner, samples=1000)
    assert both.claimed_radius < outer.claimed_radius
    assert both.max_word_length == 10


def test_product_search(sl2r_pair):
    gs = sl2r_pair.group
    target = gs.exp(np.array([0.05, -0.02, 0.03]))
    w, d = product_search(sl2r_pair, target, 6)
    assert d == pytest.approx(gs.distance(evaluate(w, sl2r_pair), target), abs=1e-12)
    best = product_search(sl2r_pair, target, 6, top=5)
    assert best[0][1] == pytest.approx(d) and len(best) == 5

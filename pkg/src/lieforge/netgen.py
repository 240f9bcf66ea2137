"""Finite nets of word values over a ball, with nearest-word queries and a JSON cache.

Compact groups (su2, so3) are indexed by a KD-tree on raw matrix entries: the Frobenius
distance there is a monotone function of the geodesic distance, so the KD-tree argmin is
the exact metric argmin. Other groups use a KD-tree on chart coordinates as a prefilter
for statistical validation and an exact linear scan for single queries.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import IntegrityError, MigrationRequiredError, ReduciblePairError, SizeError, UsageError
from .groups import GroupSpec, get_group
from .words import ElementTuple, Word, concat, count_reduced, letter_key, word_jacobian

log = logging.getLogger(__name__)

CACHE_VERSION = 1
SCREEN_LENGTH = 8
SCREEN_TOL = 1e-8
VALIDATION_SAMPLES = 10_000
VALIDATION_QUANTILE = 0.99
MAX_BFS_WORDS = 20_000_000
PREFILTER_MARGIN = 0.5
TIE_TOL = 1e-13


@dataclass(frozen=True)
class Region:
    """Ball of given radius around ``center`` (identity when None)."""

    radius: float = 1.0
    center: np.ndarray | None = field(default=None, compare=False)

    def center_matrix(self, gs):
        return gs.identity() if self.center is None else np.asarray(self.center)

    def sample(self, gs, rng, size):
        pts = gs.exp(gs.random_ball(rng, size, self.radius))
        return self.center_matrix(gs) @ pts


def fro_from_geodesic(d):
    """Frobenius distance between su2/so3 elements at geodesic distance d."""
    return 2 * np.sqrt(2) * np.sin(np.minimum(d, np.pi * np.sqrt(2)) / (2 * np.sqrt(2)))


def _flat(gs, mats):
    mats = np.asarray(mats)
    flat = mats.reshape(len(mats), int(np.prod(mats.shape[1:])))
    if gs.is_complex:
        flat = np.hstack([flat.real, flat.imag])
    return np.ascontiguousarray(flat)


@dataclass(eq=False)
class WordNet:
    pair: ElementTuple
    words: list
    mats: np.ndarray
    region: Region
    claimed_radius: float
    max_word_length: int
    validation: dict = field(default_factory=dict)
    flags: tuple = ()
    seed: int = 0
    dedup_radius: float = 0.0
    max_derivative_norm: float = float("nan")
    _index: object = field(default=None, repr=False)

    @property
    def group(self):
        return self.pair.group

    def __len__(self):
        return len(self.words)

    @property
    def degenerate(self):
        return "degenerate" in self.flags

    @property
    def coords(self):
        """Chart coordinates of the entries around the region center (NaN outside the chart)."""
        gs = self.group
        c = self.region.center_matrix(gs)
        v, ok = gs.log_batch(gs.inverse(c) @ self.mats)
        return np.where(np.asarray(ok)[..., None], v, np.nan)

    def index(self):
        if self._index is None and len(self.words):
            gs = self.group
            if gs.compact:
                self._index = cKDTree(_flat(gs, self.mats))
            else:
                self._index = cKDTree(np.nan_to_num(self.coords, nan=1e6))
        return self._index


# -- enumeration --------------------------------------------------------------------


def _bfs(pair, max_len):
    """All reduced words up to max_len in shortlex order: (parents, last letters, lengths, mats)."""
    gs = pair.group
    M = pair.M
    if max_len > 20:
        raise SizeError("max_len above 20 is not supported")
    total = count_reduced(max_len, M)
    if total > MAX_BFS_WORDS:
        raise SizeError(f"{total} words up to length {max_len} exceed the enumeration budget")
    letters = np.array(sorted([i for i in range(1, M + 1)] + [-i for i in range(1, M + 1)], key=letter_key))
    table = pair.letter_matrices()
    lmats = np.array([table[int(x)] for x in letters])
    eye = gs.identity()[None]
    parents = [np.array([-1])]
    lasts = [np.array([0])]
    mats = [eye]
    cur, cur_last, offset = eye, np.array([0]), 0
    for _ in range(max_len):
        P = len(cur)
        par = np.repeat(np.arange(P), len(letters))
        li = np.tile(np.arange(len(letters)), P)
        ok = cur_last[par] != -letters[li]
        par, li = par[ok], li[ok]
        let = letters[li]
        nxt = cur[par] @ lmats[li]
        parents.append(par + offset)
        lasts.append(let)
        offset += P
        mats.append(nxt)
        cur, cur_last = nxt, let
    lens = np.concatenate([np.full(len(p), i) for i, p in enumerate(parents)])
    return np.concatenate(parents), np.concatenate(lasts), lens, np.concatenate(mats)


def _word_at(parents, lasts, i, M):
    out = []
    while parents[i] >= 0:
        out.append(int(lasts[i]))
        i = parents[i]
    return Word(tuple(reversed(out)), M)


def irrationality_screen(pair, max_len=SCREEN_LENGTH, tol=SCREEN_TOL):
    """Raise ReduciblePairError if a nonempty reduced word of length <= max_len is within tol of I."""
    gs = pair.group
    parents, lasts, _, mats = _bfs(pair, max_len)
    dev = np.linalg.norm(mats[1:] - gs.identity(), axis=(1, 2))
    bad = np.flatnonzero(dev < tol)
    if len(bad):
        w = _word_at(parents, lasts, bad[0] + 1, pair.M)
        raise ReduciblePairError(f"short relation found: {w} (|w - I| = {dev[bad[0]]:.3g})", best=w)


def _is_identity_pair(pair):
    return all(np.allclose(m, pair.group.identity(), atol=1e-14) for m in pair.mats)


# -- metric helpers -----------------------------------------------------------------------


def _dedup_order(gs, mats, radius, order_keys=None):
    """Greedy dedup in the given order: keep an entry unless a kept one lies within radius."""
    N = len(mats)
    if radius <= 0 or N < 2:
        return np.arange(N)
    if gs.compact:
        tree = cKDTree(_flat(gs, mats))
        nbrs = tree.query_ball_point(_flat(gs, mats), fro_from_geodesic(radius) * (1 + 1e-12))
    else:
        v, ok = gs.log_batch(mats)
        tree = cKDTree(np.where(np.asarray(ok)[:, None], v, 1e6))
        # chart distance is not the metric; widen and verify below
        nbrs = tree.query_ball_point(np.where(np.asarray(ok)[:, None], v, 1e6), 3 * radius)
    removed = np.zeros(N, dtype=bool)
    keep = []
    for i in range(N):
        if removed[i]:
            continue
        keep.append(i)
        js = [j for j in nbrs[i] if j > i and not removed[j]]
        if not js:
            continue
        js = np.array(js)
        if not gs.compact:
            js = js[gs.distances(mats[i], mats[js]) <= radius]
        removed[js] = True
    return np.array(keep)


def nearest_many(net, targets):
    """Indices and distances of the nearest entries for a batch of targets."""
    gs = net.group
    targets = np.asarray(targets)
    if len(net) == 0:
        raise UsageError("empty net")
    tree = net.index()
    if gs.compact:
        _, idx = tree.query(_flat(gs, targets), k=1)
    else:
        c = net.region.center_matrix(gs)
        v, ok = gs.log_batch(gs.inverse(c) @ targets)
        q = np.where(np.asarray(ok)[:, None], v, 1e6)
        k = min(16, len(net))
        _, cand = tree.query(q, k=k)
        cand = cand.reshape(len(targets), k)
        idx = np.empty(len(targets), dtype=int)
        for t in range(len(targets)):
            d = gs.distances(targets[t], net.mats[cand[t]])
            idx[t] = cand[t][int(np.argmin(d))]
    idx = np.asarray(idx)
    d = gs.norm_from_identity(gs.inverse(targets) @ net.mats[idx])
    return idx, d


def _pick(net, target, cand):
    gs = net.group
    d = gs.distances(target, net.mats[cand])
    dmin = d.min()
    tied = cand[d <= dmin + TIE_TOL]
    best = min(tied, key=lambda i: net.words[i].key)
    return int(best), float(d[list(cand).index(best)])


def nearest(net, target):
    """(word, element, dist) of the metric-nearest entry; shortlex-smaller word on ties."""
    gs = net.group
    if len(net) == 0:
        raise UsageError("empty net")
    target = np.asarray(target)
    if gs.compact:
        k = min(8, len(net))
        _, cand = net.index().query(_flat(gs, target[None]), k=k)
        cand = np.atleast_1d(np.asarray(cand).reshape(-1))
    else:
        cand = np.arange(len(net))
    i, d = _pick(net, target, cand)
    if d > net.claimed_radius and gs.distance(net.region.center_matrix(gs), target) <= net.region.radius:
        log.debug("net defect: nearest distance %.3g exceeds claimed radius %.3g", d, net.claimed_radius)
    return net.words[i], net.mats[i], d


def linear_scan(net, target):
    """Reference nearest by scanning all entries (for validation)."""
    if len(net) == 0:
        raise UsageError("empty net")
    i, d = _pick(net, np.asarray(target), np.arange(len(net)))
    return net.words[i], net.mats[i], d


def product_search(pair, target, max_len, candidates=2000, neighbors=4, top=1):
    """Best products u v of two reduced words of length <= max_len for a single target.

    Meet-in-the-middle: every u proposes v near u^-1 target through a KD-tree on the log
    coordinates of all words; the most promising proposals are re-ranked by the true
    distance. Returns (word, achieved_dist), or a list of the ``top`` best such pairs
    (distinct words, closest first) when top > 1.
    """
    gs = pair.group
    target = np.asarray(target)
    parents, lasts, lens, mats = _bfs(pair, max_len)
    X, ok = gs.log_batch(mats)
    idx = np.flatnonzero(ok)
    tree = cKDTree(X[idx])
    Y, okq = gs.log_batch(gs.inverse(mats) @ target)
    Y[~okq] = 0.0
    dd, jj = tree.query(Y, k=neighbors)
    dd[~okq] = np.inf
    found = {}
    for i in np.argsort(dd[:, 0], kind="stable")[:candidates]:
        if not np.isfinite(dd[i, 0]):
            break
        for j in jj[i]:
            if j >= len(idx):
                continue
            d = float(gs.distance(mats[i] @ mats[idx[j]], target))
            w = concat(_word_at(parents, lasts, int(i), pair.M), _word_at(parents, lasts, int(idx[j]), pair.M))
            if w.letters not in found or d < found[w.letters][1]:
                found[w.letters] = (w, d)
    if not found:
        raise UsageError("no word pair has a chart image near the target")
    ranked = sorted(found.values(), key=lambda x: (x[1], x[0].key))
    return ranked[0] if top == 1 else ranked[:top]


def validate(net, samples=VALIDATION_SAMPLES, seed=0):
    """Covering statistics over uniform chart samples of the region."""
    gs = net.group
    rng = np.random.default_rng(seed)
    pts = net.region.sample(gs, rng, samples)
    _, d = nearest_many(net, pts)
    q = float(np.quantile(d, VALIDATION_QUANTILE, method="higher"))
    return {
        "samples": int(samples),
        "seed": int(seed),
        "quantile": VALIDATION_QUANTILE,
        "radius_q99": q,
        "max_dist": float(d.max()),
        "median_dist": float(np.median(d)),
        "defect_rate": float(np.mean(d > q)),
    }, d


def _derivative_norm(net, limit=500):
    if len(net) == 0:
        return 0.0
    step = max(1, len(net) // limit)
    return float(max(np.linalg.norm(word_jacobian(w, net.pair), 2) for w in net.words[::step]))


def _finish(net, samples, seed):
    gs = net.group
    val, _ = validate(net, samples, seed)
    claimed = val["radius_q99"]
    c = net.region.center_matrix(gs)
    dc = gs.distances(c, net.mats)
    keep = np.flatnonzero(dc <= net.region.radius + claimed)
    if len(keep) < len(net):
        net = _subset(net, keep)
        val, _ = validate(net, samples, seed)
    net.validation = val
    net.claimed_radius = val["radius_q99"]
    net.max_derivative_norm = _derivative_norm(net)
    return net


def _subset(net, idx):
    return WordNet(
        pair=net.pair,
        words=[net.words[i] for i in idx],
        mats=net.mats[idx],
        region=net.region,
        claimed_radius=net.claimed_radius,
        max_word_length=net.max_word_length,
        validation=dict(net.validation),
        flags=net.flags,
        seed=net.seed,
        dedup_radius=net.dedup_radius,
    )


def degenerate_net(pair, region, max_len=0, seed=0):
    return WordNet(
        pair=pair,
        words=[Word((), pair.M)],
        mats=pair.group.identity()[None],
        region=region,
        claimed_radius=float(region.radius),
        max_word_length=max_len,
        validation={"samples": 0, "radius_q99": float(region.radius)},
        flags=("degenerate",),
        seed=seed,
    )


def build_base_net(
    pair,
    max_len,
    region=None,
    target_delta=0.0,
    seed=0,
    dedup_radius=None,
    samples=VALIDATION_SAMPLES,
    screen=True,
):
    """Breadth-first net of reduced words up to ``max_len`` over a ball.

    Words are added one length at a time; after each length the net is validated and the
    search stops early once the measured covering radius reaches ``target_delta``. Entries
    within ``dedup_radius`` (default target_delta / 4) of an earlier shortlex word are
    dropped. A run that ends above ``target_delta`` is returned flagged ``partial``.
    """
    gs = pair.group
    region = region or Region(1.0)
    if _is_identity_pair(pair):
        return degenerate_net(pair, region, 0, seed)
    if screen:
        irrationality_screen(pair, min(SCREEN_LENGTH, 8))
    if dedup_radius is None:
        dedup_radius = target_delta / 4.0
    parents, lasts, lens, mats = _bfs(pair, max_len)
    c = region.center_matrix(gs)
    dc = gs.distances(c, mats)
    inside = dc <= region.radius + PREFILTER_MARGIN
    net = None
    for L in range(1, max_len + 1):
        sel = np.flatnonzero(inside & (lens <= L))
        keep = sel[_dedup_order(gs, mats[sel], dedup_radius)]
        words = [_word_at(parents, lasts, i, pair.M) for i in keep]
        net = WordNet(pair, words, mats[keep], region, np.inf, L, seed=seed, dedup_radius=dedup_radius)
        val, _ = validate(net, samples, seed)
        if target_delta > 0 and val["radius_q99"] <= target_delta:
            break
    net = _finish(net, samples, seed)
    if target_delta > 0 and net.claimed_radius > target_delta:
        net.flags = net.flags + ("partial",)
    return net


def compose_nets(outer, inner, samples=VALIDATION_SAMPLES, seed=0, dedup_radius=None, chunk=256):
    """Products w * w' of outer and inner entries, filtered to the outer region.

    The inner net must be a ball at the identity of radius at least the outer claimed
    radius; the result covers the outer region at roughly the inner radius.
    """
    gs = outer.group
    if inner.group is not gs or not np.array_equal(outer.pair.mats, inner.pair.mats):
        raise UsageError("nets are built on different tuples")
    if inner.region.center is not None and not np.allclose(inner.region.center, gs.identity()):
        raise UsageError("inner net must be centered at the identity")
    if inner.region.radius < outer.claimed_radius - 1e-12:
        raise UsageError(
            f"inner region radius {inner.region.radius:.3g} < outer claimed radius {outer.claimed_radius:.3g}"
        )
    delta2 = inner.claimed_radius
    c = outer.region.center_matrix(gs)
    cand_words, cand_mats = [], []
    for s in range(0, len(outer), chunk):
        prod = outer.mats[s : s + chunk, None] @ inner.mats[None]
        flat = prod.reshape((-1,) + prod.shape[2:])
        ok = np.flatnonzero(gs.distances(c, flat) <= outer.region.radius + delta2)
        for k in ok:
            i, j = divmod(int(k), len(inner))
            cand_words.append(concat(outer.words[s + i], inner.words[j]))
            cand_mats.append(flat[k])
    order = sorted(range(len(cand_words)), key=lambda i: cand_words[i].key)
    mats = np.array([cand_mats[i] for i in order])
    words = [cand_words[i] for i in order]
    if dedup_radius is None:
        dedup_radius = delta2 / 4.0
    keep = _dedup_order(gs, mats, dedup_radius)
    net = WordNet(
        outer.pair,
        [words[i] for i in keep],
        mats[keep],
        outer.region,
        np.inf,
        outer.max_word_length + inner.max_word_length,
        seed=seed,
        dedup_radius=dedup_radius,
    )
    return _finish(net, samples, seed)


# -- persistence ----------------------------------------------------------------------------


def pair_hash(pair):
    h = hashlib.sha256()
    h.update(pair.group.name.encode())
    h.update(json.dumps([repr(float(x)) for x in _flat(pair.group, pair.mats).ravel()]).encode())
    return h.hexdigest()


def cache_key(group, phash, max_len, radius, seed, target_delta=0.0, extra=""):
    raw = f"{group}|{phash}|{max_len}|{radius!r}|{seed}|{target_delta!r}|{extra}|v{CACHE_VERSION}"
    return hashlib.sha256(raw.encode()).hexdigest()[:24]


def cache_path(cache_dir, net_or_args):
    if isinstance(net_or_args, WordNet):
        n = net_or_args
        key = cache_key(n.group.name, pair_hash(n.pair), n.max_word_length, n.region.radius, n.seed)
    else:
        key = cache_key(*net_or_args)
    return os.path.join(cache_dir, f"net-{key}.json")


def _payload(header, entries):
    return json.dumps({"header": header, "entries": entries}, sort_keys=True, separators=(",", ":"))


def net_to_dict(net):
    gs = net.group
    header = {
        "group": gs.name,
        "M": net.pair.M,
        "pair": _flat(gs, net.pair.mats).ravel().tolist(),
        "pair_hash": pair_hash(net.pair),
        "region_radius": float(net.region.radius),
        "region_center": None if net.region.center is None else _flat(gs, net.region.center[None]).ravel().tolist(),
        "claimed_radius": float(net.claimed_radius),
        "max_word_length": int(net.max_word_length),
        "seed": int(net.seed),
        "dedup_radius": float(net.dedup_radius),
        "validation": net.validation,
        "flags": list(net.flags),
        "max_derivative_norm": float(net.max_derivative_norm),
    }
    entries = [[list(w.letters), row.tolist()] for w, row in zip(net.words, _flat(gs, net.mats))]
    digest = hashlib.sha256(_payload(header, entries).encode()).hexdigest()
    return {"version": CACHE_VERSION, "header": header, "entries": entries, "sha256": digest}


def _unflat(gs, rows):
    rows = np.asarray(rows, dtype=float)
    d = gs.matrix_dim
    if gs.is_complex:
        half = rows.shape[1] // 2
        return (rows[:, :half] + 1j * rows[:, half:]).reshape(-1, d, d)
    return rows.reshape(-1, d, d)


def save_net(net, path):
    data = net_to_dict(net)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, separators=(",", ":"))
        fh.write("\n")
    os.replace(tmp, path)
    return path


def load_net(path, expected_pair_hash=None):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise IntegrityError(f"cannot read net cache {path}: {exc}") from exc
    if not isinstance(data, dict) or "version" not in data:
        raise IntegrityError(f"{path}: not a net cache file")
    if data["version"] != CACHE_VERSION:
        raise MigrationRequiredError(f"{path}: cache version {data['version']}, expected {CACHE_VERSION}")
    try:
        header, entries = data["header"], data["entries"]
        digest = hashlib.sha256(_payload(header, entries).encode()).hexdigest()
    except (KeyError, TypeError) as exc:
        raise IntegrityError(f"{path}: malformed cache ({exc})") from exc
    if digest != data.get("sha256"):
        raise IntegrityError(f"{path}: digest mismatch (stored {data.get('sha256')}, computed {digest})")
    if expected_pair_hash is not None and header["pair_hash"] != expected_pair_hash:
        raise IntegrityError(f"{path}: cache built for a different pair")
    gs = get_group(header["group"])
    pair = ElementTuple(gs, _unflat(gs, np.array(header["pair"]).reshape(header["M"], -1)))
    center = header["region_center"]
    region = Region(header["region_radius"], None if center is None else _unflat(gs, [center])[0])
    M = header["M"]
    words = [Word(tuple(e[0]), M) for e in entries]
    mats = _unflat(gs, [e[1] for e in entries]) if entries else np.zeros((0, gs.matrix_dim, gs.matrix_dim))
    flags = tuple(header["flags"])
    if not entries and "degenerate" not in flags:
        flags = flags + ("degenerate",)
    return WordNet(
        pair=pair,
        words=words,
        mats=mats,
        region=region,
        claimed_radius=header["claimed_radius"],
        max_word_length=header["max_word_length"],
        validation=header["validation"],
        flags=flags,
        seed=header["seed"],
        dedup_radius=header["dedup_radius"],
        max_derivative_norm=header["max_derivative_norm"],
    )


def build_or_load(pair, max_len, region=None, target_delta=0.0, seed=0, cache_dir=None, **kw):
    """Build a base net, reusing a cached copy keyed by group, pair, length, region and seed."""
    region = region or Region(1.0)
    if cache_dir and region.center is None:
        extra = ",".join(f"{k}={kw[k]!r}" for k in sorted(kw))
        key = (pair.group.name, pair_hash(pair), max_len, region.radius, seed, target_delta, extra)
        path = cache_path(cache_dir, key)
        if os.path.exists(path):
            return load_net(path, expected_pair_hash=key[1])
        net = build_base_net(pair, max_len, region, target_delta, seed, **kw)
        os.makedirs(cache_dir, exist_ok=True)
        save_net(net, path)
        return net
    return build_base_net(pair, max_len, region, target_delta, seed, **kw)

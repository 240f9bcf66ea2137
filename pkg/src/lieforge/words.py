"""Free-group words over M symbols: reduction, evaluation and left-trivialized derivatives.

Letters are nonzero integers; ``k`` stands for the k-th generator and ``-k`` for its
inverse. Words are canonicalized by free reduction, and ordered shortlex with
``1 < -1 < 2 < -2 < ...``.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass

import numpy as np

from .errors import SizeError, UsageError
from .groups import GroupSpec, MEMBERSHIP_TOL

MAX_ITERATION_DEPTH = 30
MAX_SYMBOLIC_LETTERS = 50_000_000


def letter_key(letter):
    return 2 * abs(letter) - (letter > 0)


def _reduce_letters(raw, M):
    out = []
    for x in raw:
        x = int(x)
        if x == 0 or abs(x) > M:
            raise UsageError(f"letter {x} out of range for alphabet of size {M}")
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


@dataclass(frozen=True)
class Word:
    """A freely reduced word. Build through :func:`reduce` or the helpers below."""

    letters: tuple = ()
    M: int = 2

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(int(x) for x in self.letters))
        for x, y in zip(self.letters, self.letters[1:]):
            if x == -y:
                raise UsageError("Word letters are not reduced; use reduce()")
        for x in self.letters:
            if x == 0 or abs(x) > self.M:
                raise UsageError(f"letter {x} out of range for alphabet of size {self.M}")

    def __len__(self):
        return len(self.letters)

    def __bool__(self):
        return bool(self.letters)

    def __mul__(self, other):
        return concat(self, other)

    def __invert__(self):
        return invert(self)

    def __str__(self):
        return to_str(self)

    @property
    def key(self):
        """Shortlex sort key."""
        return (len(self.letters), tuple(letter_key(x) for x in self.letters))

    def __lt__(self, other):
        return self.key < other.key


def reduce(raw, M=2):
    """Free reduction of a raw letter sequence (or a Word)."""
    if isinstance(raw, Word):
        return Word(_reduce_letters(raw.letters, raw.M), raw.M)
    return Word(_reduce_letters(raw, M), M)


def generator(i, M=2):
    return reduce([i], M)


def concat(*words):
    M = max(w.M for w in words)
    raw = [x for w in words for x in w.letters]
    return reduce(raw, M)


def invert(w):
    return Word(tuple(-x for x in reversed(w.letters)), w.M)


def power(w, m):
    if m < 0:
        return power(invert(w), -m)
    return reduce(list(w.letters) * m, w.M)


def commutator_word(u, v):
    """[u, v] = u v u^-1 v^-1."""
    return concat(u, v, invert(u), invert(v))


def is_nontrivial(w):
    return len(reduce(w)) > 0


def to_str(w):
    """Human-readable form: a b A B (capitals are inverses); the empty word prints as 1."""
    if not w.letters:
        return "1"
    alphabet = string.ascii_lowercase
    return " ".join(alphabet[x - 1] if x > 0 else alphabet[-x - 1].upper() for x in w.letters)


def parse(text, M=2):
    """Inverse of :func:`to_str`; whitespace is optional between letters."""
    s = "".join(text.split())
    if s in ("", "1"):
        return Word((), M)
    raw = []
    for ch in s:
        if not ch.isalpha():
            raise UsageError(f"bad letter {ch!r} in word {text!r}")
        i = string.ascii_lowercase.index(ch.lower()) + 1
        raw.append(i if ch.islower() else -i)
    return reduce(raw, M)


def to_json(w):
    return json.dumps(list(w.letters))


def from_json(text, M=2):
    return reduce(json.loads(text), M)


@dataclass(frozen=True, eq=False)
class ElementTuple:
    """M elements of one group, stored as an (M, d, d) array."""

    group: GroupSpec
    mats: np.ndarray

    def __post_init__(self):
        mats = np.array(self.mats, dtype=self.group.dtype)
        d = self.group.matrix_dim
        if mats.ndim != 3 or mats.shape[1:] != (d, d):
            raise UsageError(f"expected an (M, {d}, {d}) array of {self.group.name} elements")
        for m in mats:
            res = self.group.membership_residual(m)
            if not res <= MEMBERSHIP_TOL:
                raise UsageError(f"tuple element not in {self.group.name} (residual {res:.3g})")
        mats.setflags(write=False)
        object.__setattr__(self, "mats", mats)

    @property
    def M(self):
        return len(self.mats)

    def inverses(self):
        return self.group.inverse(self.mats)

    def letter_matrices(self):
        """Dict letter -> matrix, covering generators and inverses."""
        inv = self.inverses()
        out = {}
        for i in range(self.M):
            out[i + 1] = self.mats[i]
            out[-(i + 1)] = inv[i]
        return out


def as_tuple(group, mats):
    if isinstance(mats, ElementTuple):
        return mats
    return ElementTuple(group, np.asarray(mats))


def _letters(w):
    return w.letters if isinstance(w, Word) else tuple(w)


def evaluate(w, t):
    """Value of the word at the tuple, multiplying letters left to right."""
    letters = _letters(w)
    if letters and max(abs(x) for x in letters) > t.M:
        raise UsageError("word alphabet larger than the tuple")
    table = t.letter_matrices()
    out = np.eye(t.group.matrix_dim, dtype=t.group.dtype)
    for x in letters:
        out = out @ table[x]
    return out


def evaluate_many(words, t):
    """Evaluate a list of words; shares work across common prefixes via a dict cache."""
    table = t.letter_matrices()
    eye = np.eye(t.group.matrix_dim, dtype=t.group.dtype)
    cache = {(): eye}
    out = []
    for w in words:
        letters = _letters(w)
        # find the longest cached prefix
        k = len(letters)
        while letters[:k] not in cache:
            k -= 1
        m = cache[letters[:k]]
        for j in range(k, len(letters)):
            m = m @ table[letters[j]]
            cache[letters[: j + 1]] = m
        out.append(m)
    return np.array(out) if out else np.zeros((0,) + eye.shape, dtype=eye.dtype)


def word_jacobian(w, t):
    """Left-trivialized Jacobian of the word map at the tuple, shape (n, M*n).

    Column block i is the derivative with respect to a left-trivialized perturbation
    a_i -> a_i exp(d_i): the value moves to w(t) exp(J d + O(|d|^2)).
    """
    gs = t.group
    n = gs.algebra_dim
    letters = _letters(w)
    adj = gs.adjoint(t.mats)
    adj_inv = gs.adjoint(t.inverses())
    J = np.zeros((n, t.M * n))
    R = np.eye(n)
    for x in reversed(letters):
        i = abs(x) - 1
        blk = slice(i * n, (i + 1) * n)
        if x > 0:
            J[:, blk] += R
            R = R @ adj_inv[i]
        else:
            J[:, blk] -= R @ adj[i]
            R = R @ adj[i]
    return J


def word_derivative(w, t, direction):
    """Left-trivialized derivative of u -> w(a_i exp(u d_i)) at u = 0.

    ``direction`` is an (M, n) array of algebra coordinates, one row per generator.
    """
    d = np.asarray(direction, dtype=float).reshape(-1)
    return word_jacobian(w, t) @ d


def iterated_commutator(g, h, k):
    """Word for phi_g^k(h), where phi_g(x) = g x g^-1 x^-1."""
    if k < 0:
        raise UsageError("k must be nonnegative")
    projected = 2 * k * len(g) + 2**k * (len(h) + 2 * len(g))
    if k > MAX_ITERATION_DEPTH or projected > MAX_SYMBOLIC_LETTERS:
        raise SizeError(f"iterated commutator depth {k} would reach ~{projected} letters")
    w = reduce(h)
    for _ in range(k):
        w = commutator_word(g, w)
    return w


def nested_product_commutator(ws):
    """Left-nested commutator [...[[w1, w2], w3], ..., ws]."""
    ws = list(ws)
    if len(ws) < 2:
        raise UsageError("need at least two words")
    out = ws[0]
    for w in ws[1:]:
        out = commutator_word(out, w)
    return out


def enumerate_reduced(max_len, M=2):
    """All reduced words of length <= max_len in shortlex order (as letter tuples)."""
    letters = sorted([i for i in range(1, M + 1)] + [-i for i in range(1, M + 1)], key=letter_key)
    level = [()]
    out = [()]
    for _ in range(max_len):
        nxt = []
        for w in level:
            for x in letters:
                if w and w[-1] == -x:
                    continue
                nxt.append(w + (x,))
        out.extend(nxt)
        level = nxt
    return out


def count_reduced(max_len, M=2):
    """Number of reduced words of length <= max_len (including the empty word)."""
    total, cur = 1, 2 * M
    for _ in range(max_len):
        total += cur
        cur *= 2 * M - 1
    return total

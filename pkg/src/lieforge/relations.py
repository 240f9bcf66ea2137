"""Relation certificates: nearby pairs at which a nontrivial word evaluates to the identity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CorrectionError, RegimeError, SearchError, UsageError
from .dynamics import PsiSpec, grid_points, iterate_dev, multiplicities, omega_eval, psi_eval
from .netgen import product_search
from .sk import KAPPA_WEAK, approximate, fit_rate
from .words import (
    ElementTuple,
    Word,
    commutator_word,
    concat,
    enumerate_reduced,
    evaluate,
    generator,
    invert,
    iterated_commutator,
    power,
    reduce,
    word_jacobian,
)

RESIDUAL_TOL = 1e-10
PROBE_DISTANCE = 0.1
PROBE_THRESHOLD = 1e-4
NEWTON_ITERS = 50
SYMBOLIC_LIMIT = 2_000_000

SEED_COUNT = 8
SEED_RADIUS = 0.9
BOUND_FACTOR = 10.0


@dataclass
class RelationCertificate:
    base_pair: ElementTuple
    word: Word | None
    word_length: int
    perturbed_pair: ElementTuple
    residual: float
    pair_dist: float
    l_k: int
    level: int
    method: str
    checks: dict = field(default_factory=dict)
    word_expr: str = ""

    def to_dict(self):
        gs = self.base_pair.group

        def mats(t):
            m = np.asarray(t.mats)
            if gs.is_complex:
                return {"re": m.real.tolist(), "im": m.imag.tolist()}
            return m.tolist()

        return {
            "method": self.method,
            "level": self.level,
            "word": None if self.word is None else list(self.word.letters),
            "word_str": None if self.word is None else str(self.word),
            "word_expr": self.word_expr,
            "word_length": self.word_length,
            "group": gs.name,
            "base_pair": mats(self.base_pair),
            "pair": mats(self.perturbed_pair),
            "residual": self.residual,
            "pair_dist": self.pair_dist,
            "l_k": self.l_k,
            "checks": self.checks,
        }


def pair_distance(a, b):
    """Product metric: sum of component distances."""
    gs = a.group
    return float(sum(gs.distance(x, y) for x, y in zip(a.mats, b.mats)))


def retract(t, steps):
    """a_i -> a_i exp(step_i) for left-trivialized steps given as (M, n)."""
    gs = t.group
    return ElementTuple(gs, np.array([a @ gs.exp(s) for a, s in zip(t.mats, steps)]))


def non_identical_probe(word, t, seed=0, distance=PROBE_DISTANCE):
    """d(w(pair'), I) at a random pair at product distance ``distance`` from t."""
    gs = t.group
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((t.M, gs.algebra_dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    probe = retract(t, dirs * (distance / t.M))
    return float(gs.norm_from_identity(evaluate(word, probe)))


def newton_correct(word, t, max_iter=NEWTON_ITERS, tol=1e-13):
    """Least-norm Newton steps on the pair until word(pair) = I.

    Returns (pair, residual, history). Each step solves J d = -Log w(pair) with the
    pseudo-inverse of the left-trivialized word Jacobian and halves on residual increase.
    """
    gs = t.group
    n = gs.algebra_dim
    cur = t
    res = float(gs.norm_from_identity(evaluate(word, cur)))
    hist = [res]
    for _ in range(max_iter):
        if res <= tol:
            break
        F = gs.log(evaluate(word, cur))
        J = word_jacobian(word, cur)
        step = -np.linalg.pinv(J) @ F
        lam = 1.0
        while lam > 1e-4:
            trial = retract(cur, (lam * step).reshape(t.M, n))
            r = float(gs.norm_from_identity(evaluate(word, trial)))
            if r < res:
                break
            lam /= 2
        if r >= res:
            break
        cur, res = trial, r
        hist.append(res)
    return cur, res, hist


def seed_words(pair, min_len, count=SEED_COUNT, radius=SEED_RADIUS, part_len=3):
    """Commutators [u, v] of short words, longer than ``min_len``, with value in the radius ball.

    Seeds longer than every base-net word cannot cancel against their own level-1
    approximation.
    """
    gs = pair.group
    parts = [Word(x, pair.M) for x in enumerate_reduced(part_len, pair.M)[1:]]
    out, seen = [], set()
    for u in parts:
        for v in parts:
            w = commutator_word(u, v)
            if len(w) <= min_len or w.letters in seen:
                continue
            seen.add(w.letters)
            if gs.norm_from_identity(evaluate(w, pair)) <= radius:
                out.append(w)
    out.sort()
    return out[:count]


def find_relation_net_newton(pair, state, level, seeds=None, probe_seed=0):
    """Relation certificate w' = reduce(w_r omega) corrected onto the identity by Newton.

    omega approximates w_r(pair)^-1 at the given SK level; the pair then moves by a
    least-norm Newton correction until w'(pair') = I. Seeds are tried in order; a seed is
    skipped if w' is trivial, Newton stalls, or the correction exceeds
    BOUND_FACTOR times the first-order bound residual_0 / sigma_min(J).
    """
    gs = pair.group
    if level < 1 or level > state.level:
        raise UsageError(f"level {level} not built (have {state.level})")
    seeds = seeds or seed_words(pair, state.l1)
    tried, best_res = [], np.inf
    for wr in seeds:
        val = evaluate(wr, pair)
        if gs.norm_from_identity(val) > SEED_RADIUS:
            tried.append((str(wr), "outside seed ball"))
            continue
        omega, _ = approximate(state, gs.inverse(val), level)
        w = concat(wr, omega)
        if not w:
            tried.append((str(wr), "trivial"))
            continue
        res0 = float(gs.norm_from_identity(evaluate(w, pair)))
        sig = np.linalg.svd(word_jacobian(w, pair), compute_uv=False)
        bound = res0 / sig[-1] if sig[-1] > 0 else np.inf
        new, res, hist = newton_correct(w, pair)
        best_res = min(best_res, res)
        if res > RESIDUAL_TOL:
            tried.append((str(wr), f"stalled at {res:.3g}"))
            continue
        dist = pair_distance(new, pair)
        if dist > BOUND_FACTOR * bound:
            tried.append((str(wr), f"pair_dist {dist:.3g} above {BOUND_FACTOR} x bound {bound:.3g}"))
            continue
        probe = non_identical_probe(w, new, probe_seed)
        if probe < PROBE_THRESHOLD:
            tried.append((str(wr), f"identical near pair ({probe:.3g})"))
            continue
        checks = {
            "nontrivial": bool(len(reduce(w)) > 0),
            "residual_ok": res <= RESIDUAL_TOL,
            "probe_dist": probe,
            "non_identical": True,
            "initial_residual": res0,
            "jacobian_sigma_min": float(sig[-1]),
            "first_step_bound": float(bound),
            "newton_iterations": len(hist) - 1,
            "seed_word": str(wr),
            "seed_length": len(wr),
            "skipped_seeds": tried,
        }
        return RelationCertificate(
            base_pair=pair,
            word=w,
            word_length=len(w),
            perturbed_pair=new,
            residual=res,
            pair_dist=dist,
            l_k=len(w),
            level=level,
            method="NetNewton",
            checks=checks,
        )
    if any("stalled" in r for _, r in tried):
        raise CorrectionError(f"no seed converged: {tried}", best_residual=float(best_res))
    raise SearchError(f"all seed words failed: {tried}")


@dataclass
class RelationCurve:
    certificates: list
    kappa_hat: float
    c_hat: float
    passed: bool
    failures: list


def relation_rate_curve(pair, state, levels=None, seeds=None):
    """One certificate per level with the fitted rate shape pair_dist_k <= exp(-(c l_k)^kappa).

    The seed that served the previous level is tried first, so levels share a seed
    whenever possible.
    """
    levels = levels or list(range(1, state.level + 1))
    if len(levels) < 2:
        raise UsageError("need at least two levels")
    seeds = list(seeds or seed_words(pair, state.l1))
    certs, failures = [], []
    for k in levels:
        try:
            cert = find_relation_net_newton(pair, state, k, seeds=seeds)
        except (CorrectionError, SearchError) as exc:
            failures.append((k, str(exc)))
            continue
        certs.append(cert)
        used = next(w for w in seeds if str(w) == cert.checks["seed_word"])
        seeds = [used] + [w for w in seeds if w is not used]
    kh, ch, ok = float("nan"), float("nan"), False
    if len(certs) >= 2:
        fit = fit_rate([c.l_k for c in certs], [c.pair_dist for c in certs], KAPPA_WEAK)
        kh, ch, ok = fit.kappa_hat, fit.c_hat, fit.passed and not failures
    return RelationCurve(certs, kh, ch, ok, failures)


# -- commutator-power relations -------------------------------------------------------------


def _fd_newton(F, x0, radius, tol=1e-12, max_iter=40, step=1e-7):
    x = np.asarray(x0, dtype=float)
    f = F(x)
    for _ in range(max_iter):
        if np.linalg.norm(f) <= tol:
            break
        n = len(x)
        J = np.zeros((len(f), n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = step
            J[:, i] = (F(x + e) - F(x - e)) / (2 * step)
        dx = -np.linalg.lstsq(J, f, rcond=None)[0]
        lam = 1.0
        while lam > 1e-4:
            xn = x + lam * dx
            fn = F(xn)
            if np.linalg.norm(fn) < np.linalg.norm(f):
                break
            lam /= 2
        if np.linalg.norm(fn) >= np.linalg.norm(f):
            break
        x, f = xn, fn
        if np.linalg.norm(x) > radius:
            raise RegimeError(f"Newton left the ball of radius {radius:.3g} (|u| = {np.linalg.norm(x):.3g})")
    return x, float(np.linalg.norm(f))


def psi_preimage(spec, target, radius=None):
    """u~ with Psi(u~) = target, by Newton from 0; RegimeError if it leaves D_radius."""
    gs = spec.group
    radius = 4 * spec.delta if radius is None else radius
    inv = gs.inverse(np.asarray(target))
    return _fd_newton(lambda u: gs.log(inv @ psi_eval(spec, u)), np.zeros(spec.dim), radius)


def iterated_length_bound(g_len, h_len, k):
    """Unreduced length of phi_g^k(h): L_0 = |h|, L_(i+1) = 2|g| + 2 L_i."""
    L = h_len
    for _ in range(k):
        L = 2 * g_len + 2 * L
    return L


def commutator_power_word(spec, k, w):
    """Symbolic w^-1 prod_j phi_{g_j}^k(h)^{m_jk} if it fits the symbolic budget.

    Returns (word or None, length, expression). The length is exact when the word is
    materialized and the unreduced upper bound otherwise.
    """
    ms = multiplicities(spec, k)
    depths = [k + int(l) for l in spec.offsets]
    bounds = [iterated_length_bound(len(g), len(spec.h_word), d) for g, d in zip(spec.g_words, depths)]
    total = len(w) + sum(m * b for m, b in zip(ms, bounds))
    expr = "w^-1 " + " ".join(f"phi^{d}[{g}]({spec.h_word})^{m}" for g, d, m in zip(spec.g_words, depths, ms))
    if total > SYMBOLIC_LIMIT:
        return None, total, expr
    parts = [iterated_commutator(g, spec.h_word, d) for g, d in zip(spec.g_words, depths)]
    word = concat(invert(w), *[power(p, m) for p, m in zip(parts, ms)])
    return word, len(word), expr


def anchor_word(spec, max_len=10, top=20):
    """A word w with w(pair) in Psi(D): among the closest product-search words to Psi(0),
    the one whose Psi-preimage is smallest. Returns (w, |u~_0|)."""
    cands = product_search(spec.pair, psi_eval(spec, np.zeros(spec.dim)), max_len, top=top)
    best = None
    for w, _ in cands:
        try:
            u0, r = psi_preimage(spec, evaluate(w, spec.pair))
        except RegimeError:
            continue
        if r <= 1e-10 and (best is None or np.linalg.norm(u0) < best[1]):
            best = (w, float(np.linalg.norm(u0)))
    if best is None:
        raise SearchError(f"no anchor word among {len(cands)} candidates has a Psi-preimage")
    return best


def find_relation_commutator_power(spec, k, w=None, radius=None, probe_points=3):
    """Solve w^-1 omega_k(alpha(u~/k)) = I for u~ near the Psi-preimage of w(pair).

    ``w`` must satisfy w(pair) in Psi(D_radius) (default: :func:`anchor_word`). omega_k is
    evaluated numerically; the symbolic word is materialized only when it is small.
    """
    gs = spec.group
    if w is None:
        w, _ = anchor_word(spec)
    radius = 4 * spec.delta if radius is None else radius
    u0, r0 = psi_preimage(spec, evaluate(w, spec.pair), radius)
    if r0 > 1e-8:
        raise RegimeError(f"w(pair) is not in Psi(D): preimage residual {r0:.3g}")

    def F(ut):
        t = spec.alpha_tuple(ut / k)
        return gs.log(gs.inverse(evaluate(w, t)) @ omega_eval(spec, k, ut / k))

    ut, res = _fd_newton(F, u0, radius)
    u = ut / k
    t = spec.alpha_tuple(u)
    residual = float(gs.norm_from_identity(gs.inverse(evaluate(w, t)) @ omega_eval(spec, k, u)))
    word, length, expr = commutator_power_word(spec, k, w)
    # the relation value must vary over the rescaled ball; a value away from I also
    # proves the free word nontrivial without materializing it
    pts = grid_points(spec.dim, radius, probe_points)
    vals = [float(gs.norm_from_identity(gs.inverse(evaluate(w, spec.alpha_tuple(p / k))) @ omega_eval(spec, k, p / k))) for p in pts]
    probe = max(vals)
    checks = {
        "u_tilde": ut.tolist(),
        "u_tilde_norm": float(np.linalg.norm(ut)),
        "u_norm": float(np.linalg.norm(u)),
        "radius": float(radius),
        "nontrivial": bool(probe > 0 if word is None else len(word) > 0),
        "residual_ok": residual <= RESIDUAL_TOL,
        "probe_max": probe,
        "probe_min": min(vals),
        "non_identical": probe >= PROBE_THRESHOLD,
        "numeric_realization": word is None,
        "multiplicities": [int(m) for m in multiplicities(spec, k)],
    }
    if not (checks["residual_ok"] and checks["non_identical"]):
        raise CorrectionError(f"commutator-power relation at k={k} failed its checks: {checks}", best_residual=residual)
    return RelationCertificate(
        base_pair=spec.pair,
        word=word,
        word_length=length,
        perturbed_pair=t,
        residual=residual,
        pair_dist=spec.pair_distance(u),
        l_k=length,
        level=k,
        method="CommutatorPower",
        checks=checks,
        word_expr=expr,
    )


# -- solvable quotients and the affine demonstration --------------------------------------------


def _is_power_of(w, i):
    return all(abs(x) == i for x in w.letters)


def solvable_lift(word, s, symbol=None):
    """sigma_{s,1} of the recursion sigma_{i+1,0} = [sigma_i0, sigma_i1], sigma_{i+1,1} = [sigma_i0, sigma_i1^-1].

    Starts from sigma_00 = w, sigma_01 = [a, w] with a a generator that w does not commute
    with as a free word. The result vanishes at any pair generating a solvable group
    in which w(pair) lies deep enough in the derived series.
    """
    w = reduce(word)
    if not w:
        raise UsageError("solvable_lift needs a nontrivial word")
    if s < 0:
        raise UsageError("s must be nonnegative")
    M = w.M
    order = [symbol] if symbol else []
    order += [i for i in range(1, M + 1) if i not in order]
    a = None
    for i in order:
        if not _is_power_of(w, i):
            a = i
            break
    if a is None:
        raise UsageError("word commutes with every generator")
    s0, s1 = w, commutator_word(generator(a, M), w)
    for _ in range(s):
        s0, s1 = commutator_word(s0, s1), commutator_word(s0, invert(s1))
    if not s1:
        raise AssertionError("solvable lift reduced to the empty word")
    if len(s1) > 4 ** (s + 1) * len(w):
        raise AssertionError("length bound 4^(s+1)|w| violated")
    return s1


@dataclass
class AffineStep:
    k: int
    m_k: int
    s_k: float
    gap: float
    relation_residual: float
    floor_tie: bool = False


def aff_scale(s):
    return np.array([[s, 0.0], [0.0, 1.0]])


def aff_translation(u=1.0):
    return np.array([[1.0, u], [0.0, 1.0]])


def affine_relation_sequence(s0, k_max):
    """m_k = floor(s0^-k), s_k = m_k^(-1/k), and the residual of (g^k t g^-k)^m_k = t."""
    if not 0 < s0 < 1:
        raise UsageError("s0 must lie in (0, 1)")
    out = []
    t = aff_translation()
    for k in range(1, k_max + 1):
        x = s0 ** (-k)
        m = int(math.floor(x))
        tie = abs(x - round(x)) < 1e-9 * x
        s_k = m ** (-1.0 / k)
        lam = s_k**k
        conj = aff_scale(lam) @ t @ aff_scale(1 / lam)
        if abs(conj[0, 0] - 1) > 1e-12:
            raise AssertionError("conjugate of a translation left the translation subgroup")
        # unipotent power in closed form; repeated squaring would amplify the diagonal rounding by m
        rel = np.array([[1.0, m * conj[0, 1]], [0.0, 1.0]])
        out.append(AffineStep(k, m, s_k, abs(s_k - s0), float(np.max(np.abs(rel - t))), tie))
    return out


def affine_limit_error(s0, k, grid=None):
    """sup over the grid of |m_k (s0 + u/k)^k - e^(u/s0)|."""
    grid = np.linspace(-1, 1, 201) if grid is None else np.asarray(grid)
    m = math.floor(s0 ** (-k))
    approx = m * (s0 + grid / k) ** k
    return float(np.max(np.abs(approx - np.exp(grid / s0))))


def affine_gap_constant(steps):
    """Smallest C with gap_k <= C / k over the given steps."""
    return float(max(st.gap * st.k for st in steps))

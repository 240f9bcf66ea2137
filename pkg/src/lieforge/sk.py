"""Recursive Solovay-Kitaev refinement over a base word net.

Level 1 answers with the nearest base word. Level m approximates the target at level
m - 1, factors the residual as one (strong) or two (weak) group commutators and replaces
every factor by its own level m - 1 approximation. Word lengths therefore obey
l_m = 9^(m-1) l_1 in weak mode and 5^(m-1) l_1 in strong mode.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm, qmc

from .commutator import Calibration, RootDecomposition, calibrate, group_commutator_factor, prepare_weak
from .errors import RegimeError, StagnationError, UsageError
from .netgen import WordNet, _subset, nearest
from .words import Word, concat, evaluate, invert, word_jacobian

log = logging.getLogger(__name__)

KAPPA_WEAK = math.log(1.5) / math.log(9)
KAPPA_STRONG = math.log(1.5) / math.log(5)
GROWTH = {"weak": 9, "strong": 5}
MEASURE_TARGETS = 500
C_PRIME_FACTOR = 1.2


def kappa_theory(mode):
    return KAPPA_WEAK if mode == "weak" else KAPPA_STRONG


def measurement_targets(gs, count, seed, radius=1.0):
    """Scrambled Sobol points mapped into the chart ball of the given radius."""
    n = gs.algebra_dim
    sob = qmc.Sobol(d=n + 1, scramble=True, seed=seed)
    u = sob.random_base2(max(1, math.ceil(math.log2(max(count, 2)))))[:count]
    u = np.clip(u, 1e-12, 1 - 1e-12)
    dirs = norm.ppf(u[:, :n])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    r = radius * u[:, n] ** (1.0 / n)
    return gs.exp(dirs * r[:, None])


@dataclass
class LevelRecord:
    m: int
    l_m: int
    max_err: float
    median_err: float
    words_max_len: int
    regime_fallbacks: int = 0


@dataclass(eq=False)
class SKLevelState:
    base: WordNet
    mode: str
    solver: object
    calibration: Calibration
    omega_tilde: WordNet
    tilde_radius: float
    c_prime: float
    levels: list = field(default_factory=list)
    flags: tuple = ()
    measure_seed: int = 0
    measure_count: int = MEASURE_TARGETS
    derivative_norm: float = float("nan")

    @property
    def group(self):
        return self.base.group

    @property
    def level(self):
        return len(self.levels)

    @property
    def l1(self):
        return self.base.max_word_length

    def l_m(self, m):
        return GROWTH[self.mode] ** (m - 1) * self.l1

    @property
    def deltas(self):
        return [r.max_err for r in self.levels]

    @property
    def degenerate(self):
        return "degenerate" in self.flags


def _solver_for(gs, mode, seed):
    if mode == "weak":
        return prepare_weak(gs, seed)
    if mode == "strong":
        if gs.name not in ("su2", "so3", "sl2r", "sl3r"):
            raise UsageError(f"no strong solver for {gs.name}")
        return gs
    raise UsageError(f"unknown mode {mode!r}")


class _Descent:
    """One descent pass; counts chart-regime fallbacks."""

    def __init__(self, state, depth):
        self.s = state
        self.gs = state.group
        self.fallbacks = 0

    def base(self, target, tilde):
        net = self.s.omega_tilde if tilde and len(self.s.omega_tilde) else self.s.base
        w, W, _ = nearest(net, target)
        return w, W

    def run(self, target, m, tilde=False):
        if m == 1:
            return self.base(target, tilde)
        gs = self.gs
        w, W = self.run(target, m - 1, tilde)
        r = gs.inverse(W) @ target
        try:
            pairs, _ = group_commutator_factor(self.s.solver, r, self.s.mode)
        except RegimeError:
            self.fallbacks += 1
            return w, W
        if not pairs:
            return w, W
        out_w, out_W = w, W
        for X, Y in pairs:
            wx, WX = self.run(X, m - 1, True)
            wy, WY = self.run(Y, m - 1, True)
            out_w = concat(out_w, wx, wy, invert(wx), invert(wy))
            out_W = out_W @ WX @ WY @ gs.inverse(WX) @ gs.inverse(WY)
        return out_w, out_W


def approximate(state, target, depth=None):
    """(word, achieved_dist) for the target at the given depth (default: deepest built level).

    The distance is recomputed from the word itself at the base pair.
    """
    depth = state.level if depth is None else depth
    if depth < 1 or depth > max(state.level, 1):
        raise UsageError(f"depth {depth} not in 1..{state.level}")
    word, dist, _ = _approximate(state, target, depth)
    return word, dist


def _approximate(state, target, depth):
    gs = state.group
    target = np.asarray(target)
    d = _Descent(state, depth)
    word, _ = d.run(target, depth)
    value = evaluate(word, state.base.pair)
    return word, gs.distance(value, target), d.fallbacks


def _measure(state, m, targets):
    errs, lens, fallbacks = [], [], 0
    for t in targets:
        w, dist, fb = _approximate(state, t, m)
        errs.append(dist)
        lens.append(len(w))
        fallbacks += fb
    errs = np.array(errs)
    return LevelRecord(m, state.l_m(m), float(errs.max()), float(np.median(errs)), int(max(lens)), fallbacks), errs


def init_levels(base, mode="weak", calibration=None, seed=0, measure_count=MEASURE_TARGETS, calib_samples=10_000):
    """Level-1 state over a base net on D_1; checks the contraction condition c'' delta^1.5 < delta."""
    gs = base.group
    if not gs.semisimple:
        raise UsageError(f"{gs.name} is not semisimple")
    solver = _solver_for(gs, mode, seed)
    if calibration is None:
        calibration = calibrate(solver, mode, samples=calib_samples, seed=seed)
    c_sol = calibration.c_w if mode == "weak" else calibration.c_strong
    c_prime = C_PRIME_FACTOR * c_sol
    delta = base.claimed_radius
    tilde_radius = 2 * c_prime * math.sqrt(delta)
    dists = gs.norm_from_identity(base.mats)
    omega_tilde = _subset(base, np.flatnonzero(dists <= tilde_radius))
    state = SKLevelState(
        base=base,
        mode=mode,
        solver=solver,
        calibration=calibration,
        omega_tilde=omega_tilde,
        tilde_radius=tilde_radius,
        c_prime=c_prime,
        measure_seed=seed,
        measure_count=measure_count,
    )
    if base.degenerate or len(base) <= 1:
        state.flags = ("degenerate",)
        state.levels = [LevelRecord(1, state.l1, float(base.claimed_radius), float(base.claimed_radius), 0)]
        return state
    c_dd = calibration.c_dd
    if not c_dd * delta**1.5 < delta:
        raise RegimeError(
            f"base net radius {delta:.3g} too coarse for contraction: c'' delta^1.5 = {c_dd * delta**1.5:.3g}; "
            "build a longer base net"
        )
    targets = measurement_targets(gs, measure_count, seed)
    rec, errs = _measure(state, 1, targets)
    state.levels = [rec]
    state.derivative_norm = base.max_derivative_norm
    return state


def refine_level(state):
    """Add one level; raises StagnationError if the measured accuracy does not improve."""
    if state.degenerate:
        return state
    gs = state.group
    m = state.level + 1
    targets = measurement_targets(gs, state.measure_count, state.measure_seed)
    new = replace(state, levels=list(state.levels))
    rec, errs = _measure(new, m, targets)
    if rec.words_max_len > rec.l_m:
        raise AssertionError(f"length law violated at level {m}: {rec.words_max_len} > {rec.l_m}")
    if rec.max_err >= state.levels[-1].max_err:
        raise StagnationError(
            f"level {m} error {rec.max_err:.3g} did not improve on {state.levels[-1].max_err:.3g} "
            f"(median {rec.median_err:.3g}, chart fallbacks {rec.regime_fallbacks})"
        )
    new.levels.append(rec)
    return new


def build_levels(base, levels, mode="weak", **kw):
    state = init_levels(base, mode, **kw)
    for _ in range(levels - 1):
        state = refine_level(state)
    return state


@dataclass
class RateFit:
    kappa_hat: float
    kappa_band: float
    c_hat: float
    c_ls: float
    passed: bool
    kappa_theory: float


def fit_rate(lengths, errors, kappa=KAPPA_WEAK):
    """Fit log(-log err) = kappa_hat log l + b, and the largest c with err_m <= exp(-(c l_m)^kappa).

    Errors >= 1 carry no rate information and are excluded.
    """
    L = np.asarray(lengths, dtype=float)
    E = np.asarray(errors, dtype=float)
    ok = (E > 0) & (E < 1)
    L, E = L[ok], E[ok]
    if len(L) < 2:
        raise UsageError("need at least two levels with errors in (0, 1)")
    x = np.log(L)
    y = np.log(-np.log(E))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    kappa_hat = float(coef[0])
    band = float("nan")
    if len(L) > 2:
        resid = y - A @ coef
        s2 = resid @ resid / (len(L) - 2)
        band = float(2 * math.sqrt(s2 / np.sum((x - x.mean()) ** 2)))
    per_level = (-np.log(E)) ** (1 / kappa) / L
    c_hat = float(per_level.min())
    c_ls = float(np.exp(np.mean(np.log(per_level))))
    passed = bool(np.all(E <= np.exp(-((c_hat * L) ** kappa)) * (1 + 1e-12)))
    return RateFit(kappa_hat, band, c_hat, c_ls, passed, kappa)


@dataclass
class RateReport:
    mode: str
    samples: int
    levels: list
    fit: RateFit
    contraction_slope: float
    c_dd_hat: float
    runtime: float

    def rows(self):
        """(m, l_m, max_err, median_err, kappa_hat, c_hat) per level."""
        return [(r.m, r.l_m, r.max_err, r.median_err, self.fit.kappa_hat, self.fit.c_hat) for r in self.levels]


def contraction_fit(deltas):
    """Slope of log delta_{m+1} vs log delta_m and the geometric-mean c'' of delta_{m+1}/delta_m^1.5."""
    d = np.asarray(deltas, dtype=float)
    if len(d) < 2:
        return float("nan"), float("nan")
    a, b = np.log(d[:-1]), np.log(d[1:])
    slope = float(np.polyfit(a, b, 1)[0]) if len(d) >= 3 else float(b[0] / a[0])
    c = float(np.exp(np.mean(b - 1.5 * a)))
    return slope, c


def rate_report(state, samples=200, seed=1):
    """Re-measure every level on fresh targets and fit the rate shape."""
    if state.level < 2:
        raise UsageError("rate report needs at least two levels")
    t0 = time.perf_counter()
    targets = measurement_targets(state.group, samples, seed)
    recs = [_measure(state, m, targets)[0] for m in range(1, state.level + 1)]
    fit = fit_rate([r.l_m for r in recs], [r.max_err for r in recs], kappa_theory(state.mode))
    slope, c = contraction_fit([r.max_err for r in recs])
    return RateReport(state.mode, samples, recs, fit, slope, c, time.perf_counter() - t0)


def state_derivative_norm(state, words):
    """Max operator norm of the word Jacobian at the base pair over the given words."""
    return max(np.linalg.norm(word_jacobian(w, state.base.pair), 2) for w in words)

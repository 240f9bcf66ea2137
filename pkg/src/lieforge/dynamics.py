"""Iterated commutator dynamics phi_g(h) = g h g^-1 h^-1 and the rescaled limit map Psi.

Iterates are tracked as deviations X = h - I so that tiny commutators keep full relative
precision: phi_g(I + X) - I = (g X g^-1 - X)(I + X)^-1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import RegimeError, SearchError, UsageError
from .groups import get_group
from .netgen import _bfs, _word_at, irrationality_screen
from .proximal import ProximalKind, classify_proximal
from .words import ElementTuple, Word, evaluate

BASIN_RADIUS = 0.2
STOP_NORM = 1e-13
FIT_START_NORM = 1e-4
FIT_WINDOW = 6
PSI_EPS = 0.05
PSI_SIGMA_MIN = 1e-4
FD_STEP = 1e-5


class BasinError(RegimeError):
    """Iterates leave the contraction basin."""


def phi_dev(gs, g, X):
    """Deviation of phi_g(I + X) from the identity."""
    h = np.eye(gs.matrix_dim) + X
    return (g @ X @ gs.inverse(g) - X) @ gs.inverse(h)


def iterate_dev(gs, g, X, k):
    for _ in range(k):
        X = phi_dev(gs, g, X)
    return X


def angle_to_plane(v, basis):
    """Angle between v and the span of the orthonormal columns of basis."""
    nv = np.linalg.norm(v)
    if nv == 0:
        return 0.0
    inside = np.linalg.norm(basis.T @ v)
    perp = np.linalg.norm(v - basis @ (basis.T @ v))
    return float(math.atan2(perp, inside))


@dataclass
class DynamicsReport:
    g: np.ndarray
    h: np.ndarray
    prox: object
    ks: list
    norms: list
    directions: list
    angles: list
    ratios: list
    v_estimate: np.ndarray
    v_plane: np.ndarray
    convergence_errors: list
    k0: int
    logs: list = field(repr=False, default_factory=list)

    def rows(self):
        """(k, norm, ratio, angle-to-L) per iterate; the ratio at k is norm_{k}/norm_{k-1}."""
        return [(k, n, r, a) for k, n, r, a in zip(self.ks, self.norms, self.ratios, self.angles)]


def _fit_v(prox, ks, logs):
    """Least squares c_k = S^k v + S^(2k) w on the L(g)-component of Log phi^k."""
    r = prox.eigen_plane.shape[1]
    rows, rhs = [], []
    for k, L in zip(ks, logs):
        sc = prox.abs_s ** (-k)
        c = prox.plane_coords(L) * sc
        rows.append(np.hstack([prox.mult_matrix(k), prox.mult_matrix(2 * k)]) * sc)
        rhs.append(c)
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    return sol[:r]


def _check_prox(prox):
    if prox.kind is ProximalKind.NEITHER:
        raise RegimeError("g is neither 1-proximal nor complex 1-proximal")
    if not prox.contracting:
        raise RegimeError(f"|s(g)| = {prox.abs_s:.4g} >= 1; g is not in the contracting set")


def run_dynamics(gs, g, h, k_max=60, prox=None, stop=STOP_NORM):
    """Iterate phi_g on h and estimate v_g(h) = lim s^-k Log phi_g^k(h)."""
    gs = get_group(gs) if isinstance(gs, str) else gs
    g = np.asarray(g)
    h = np.asarray(h)
    prox = prox or classify_proximal(gs, g)
    _check_prox(prox)
    d0 = gs.norm_from_identity(h)
    if d0 > BASIN_RADIUS:
        raise BasinError(f"d(h, I) = {d0:.3g} exceeds the basin proxy {BASIN_RADIUS}")
    n = gs.algebra_dim
    X = h - np.eye(gs.matrix_dim)
    ks, norms, dirs, angles, ratios, logs = [], [], [], [], [], []
    basis = prox.eigen_plane
    prev = None
    for k in range(0, k_max + 1):
        if k:
            X = phi_dev(gs, g, X)
        L = gs.log_near_identity(X) if np.linalg.norm(X) < 0.5 else gs.log(np.eye(gs.matrix_dim) + X)
        nrm = float(np.linalg.norm(L))
        if k and nrm > max(10 * d0, 1.0):
            raise BasinError(f"iterates grow: |Log phi^{k}| = {nrm:.3g}")
        ks.append(k)
        norms.append(nrm)
        logs.append(L)
        dirs.append(L / nrm if nrm > 0 else np.zeros(n))
        angles.append(angle_to_plane(L, basis) if nrm > 0 else 0.0)
        ratios.append(nrm / prev if prev else float("nan"))
        prev = nrm
        if nrm < stop or nrm == 0:
            break
    if norms[0] == 0:
        zero = np.zeros(n)
        return DynamicsReport(g, h, prox, ks, norms, dirs, angles, ratios, zero, zero[: basis.shape[1]], [0.0], 0, logs)
    start = next((i for i, v in enumerate(norms) if v < FIT_START_NORM), max(0, len(norms) - FIT_WINDOW))
    start = min(start, max(0, len(norms) - FIT_WINDOW))
    win = slice(start, start + FIT_WINDOW)
    v_plane = _fit_v(prox, ks[win], logs[win])
    v = basis @ v_plane
    errs = []
    for k, L in zip(ks, logs):
        pred = basis @ (prox.mult_matrix(k) @ v_plane)
        errs.append(float(np.linalg.norm(L - pred) / prox.abs_s**k))
    return DynamicsReport(g, h, prox, ks, norms, dirs, angles, ratios, v, v_plane, errs, ks[start], logs)


def estimate_v(gs, g, h, prox=None, k_max=80):
    return run_dynamics(gs, g, h, k_max, prox).v_estimate


def v_functional_residual(gs, g, h, prox=None):
    """|v(phi_g(h)) - s v(h)| / |s v(h)|."""
    prox = prox or classify_proximal(gs, g)
    rep = run_dynamics(gs, g, h, prox=prox)
    h1 = np.eye(gs.matrix_dim) + phi_dev(gs, g, h - np.eye(gs.matrix_dim))
    rep1 = run_dynamics(gs, g, h1, prox=prox)
    sv = prox.eigen_plane @ (prox.mult_matrix(1) @ rep.v_plane)
    return float(np.linalg.norm(rep1.v_estimate - sv) / np.linalg.norm(sv))


def estimate_dv_identity(gs, g, probe_count=10, t=1e-3, seed=0):
    """Max relative deviation of v_g(Exp(t xi)) from t xi over random unit xi in L(g)."""
    prox = classify_proximal(gs, g)
    _check_prox(prox)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probe_count):
        c = rng.standard_normal(prox.eigen_plane.shape[1])
        xi = prox.eigen_plane @ (c / np.linalg.norm(c))
        v = estimate_v(gs, g, gs.exp(t * xi), prox)
        worst = max(worst, float(np.linalg.norm(v - t * xi) / t))
    return worst


# -- Psi limit -----------------------------------------------------------------------------


def complex_scale(prox, c):
    """Matrix of multiplication by the complex number c on L(g) coordinates."""
    if prox.kind is ProximalKind.ONE:
        return np.array([[np.real(c)]])
    return np.real(c) * np.eye(2) + np.imag(c) * prox.complex_structure


@dataclass(eq=False)
class PsiSpec:
    group: object
    pair: ElementTuple
    g_words: list
    h_word: Word
    eps: float
    slice_P: np.ndarray  # (M, n, n): a_i(u) = a_i exp(slice_P[i] @ u)
    s0: np.ndarray  # complex s_j(0)
    sigma: np.ndarray  # (n_g, n) complex gradients of ln s_j at 0
    nu: np.ndarray  # (n_g, n) algebra vectors v_{g_j}(h)
    prox: list
    offsets: np.ndarray
    mode: str = "real"
    omega: np.ndarray | None = None
    sigma_min: float = 0.0

    @property
    def delta(self):
        """Radius of the u~ ball on which every exponent sigma_j . u~ stays below 1/2."""
        return 0.5 / float(np.max(np.linalg.norm(self.sigma, axis=1)))

    @property
    def dim(self):
        return self.group.algebra_dim

    def alpha(self, u):
        gs = self.group
        u = np.asarray(u, dtype=float)
        return np.array([a @ gs.exp(P @ u) for a, P in zip(self.pair.mats, self.slice_P)])

    def alpha_tuple(self, u):
        return ElementTuple(self.group, self.alpha(u))

    def pair_distance(self, u):
        """Product-metric distance between alpha(u) and the base pair."""
        gs = self.group
        return float(sum(gs.norm_from_identity(gs.exp(P @ np.asarray(u))) for P in self.slice_P))


def _log_s(gs, g, ref):
    """ln s(g) continued from the reference value."""
    p = classify_proximal(gs, g)
    if p.kind is ProximalKind.NEITHER:
        return None
    s = complex(p.s)
    if ref is not None and abs(np.conj(s) - ref) < abs(s - ref):
        s = np.conj(s)
    return np.log(s)


def _grad_log_s(gs, word, alpha, n, s_ref, step=FD_STEP):
    grad = np.zeros(n, dtype=complex)
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        lp = _log_s(gs, evaluate(word, alpha(e)), s_ref)
        lm = _log_s(gs, evaluate(word, alpha(-e)), s_ref)
        if lp is None or lm is None:
            return None
        grad[i] = (lp - lm) / (2 * step)
    return grad


def psi_omega(spec):
    """Sum_j nu_j sigma_j^T with complex sigma acting through the complex structures."""
    n = spec.dim
    Om = np.zeros((n, n))
    for p, nu, sig in zip(spec.prox, spec.nu, spec.sigma):
        c = p.plane_coords(nu)
        for i in range(n):
            Om[:, i] += p.eigen_plane @ (complex_scale(p, sig[i]) @ c)
    return Om


def psi_eval(spec, ut, eps=None):
    """Psi(u~) = prod_j exp(eps s_j^{l_j} e^{sigma_j . u~} nu_j)."""
    gs = spec.group
    eps = spec.eps if eps is None else eps
    out = np.eye(gs.matrix_dim, dtype=gs.dtype)
    for p, nu, sig, s, l in zip(spec.prox, spec.nu, spec.sigma, spec.s0, spec.offsets):
        c = eps * s**l * np.exp(sig @ np.asarray(ut, dtype=float))
        vec = p.eigen_plane @ (complex_scale(p, c) @ p.plane_coords(nu))
        out = out @ gs.exp(vec)
    return out


def psi_jacobian(spec, eps=None, step=1e-5):
    """Left-trivialized derivative of Psi at 0 by central differences."""
    gs = spec.group
    n = spec.dim
    base = psi_eval(spec, np.zeros(n), eps)
    inv = gs.inverse(base)
    J = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        lp = gs.log(inv @ psi_eval(spec, e, eps))
        lm = gs.log(inv @ psi_eval(spec, -e, eps))
        J[:, i] = (lp - lm) / (2 * step)
    return J


def multiplicities(spec, k, eps=None):
    eps = spec.eps if eps is None else eps
    return [int(math.floor(eps * abs(s) ** (-k))) for s in spec.s0]


def omega_eval(spec, k, u, eps=None):
    """omega_k(alpha(u)) = prod_j phi_{g_j}^{k + l_j}(h)^{m_jk}, evaluated numerically.

    Powers are realized as exp(m Log(.)) on the near-identity iterate, which equals the
    matrix power exactly in exact arithmetic.
    """
    gs = spec.group
    t = spec.alpha_tuple(u)
    H = evaluate(spec.h_word, t)
    X0 = H - np.eye(gs.matrix_dim)
    ms = multiplicities(spec, k, eps)
    out = np.eye(gs.matrix_dim, dtype=gs.dtype)
    for gw, m, l in zip(spec.g_words, ms, spec.offsets):
        G = evaluate(gw, t)
        X = iterate_dev(gs, G, X0, k + int(l))
        out = out @ gs.exp(m * gs.log_near_identity(X))
    return out


def grid_points(n, radius, per_axis=5):
    """per_axis^n grid of the cube inscribed in the ball of given radius."""
    a = radius / math.sqrt(n)
    ax = np.linspace(-a, a, per_axis)
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def verify_psi_limit(spec, k_list, radius=None, per_axis=5):
    """Sup over the grid of d(omega_k(alpha(u~/k)), Psi(u~)) for each k (grid in D_delta)."""
    gs = spec.group
    radius = spec.delta if radius is None else radius
    pts = grid_points(spec.dim, radius, per_axis)
    psi = [psi_eval(spec, p) for p in pts]
    table = []
    for k in k_list:
        err = max(gs.distance(omega_eval(spec, k, p / k), q) for p, q in zip(pts, psi))
        table.append((int(k), float(err)))
    return table


def psi_derivative_scaling(spec, eps_list=(0.1, 0.05, 0.025)):
    """(eps, |Psi'(0) - eps Omega|) and the log-log slope."""
    Om = psi_omega(spec)
    rows = []
    for e in eps_list:
        rows.append((e, float(np.linalg.norm(psi_jacobian(spec, e) - e * Om))))
    x = np.log([r[0] for r in rows])
    y = np.log([r[1] for r in rows])
    return rows, float(np.polyfit(x, y, 1)[0])


def find_kr(zetas, count=5, k_max=10_000, tol=None):
    """Increasing k with max_j dist(k zeta_j, 2 pi Z) small (cyclic / record search).

    If every zeta_j is a rational multiple p/q of 2 pi (detected to 1e-12), returns the
    exact multiples of the common period q. Otherwise returns successive record minima.
    """
    zetas = np.atleast_1d(np.asarray(zetas, dtype=float))
    fr = zetas / (2 * np.pi)
    qs = []
    for f in fr:
        q = Fraction(float(f)).limit_denominator(10_000)
        if abs(float(q) - f) < 1e-12:
            qs.append(q.denominator)
        else:
            qs = None
            break
    if qs:
        period = math.lcm(*qs)
        return [period * r for r in range(1, count + 1)], [0.0] * count
    ks, ds = [], []
    best = np.inf
    for k in range(1, k_max + 1):
        x = k * fr
        d = float(np.max(np.abs(x - np.round(x)))) * 2 * np.pi
        if d < best:
            best = d
            ks.append(k)
            ds.append(d)
            if len(ks) >= count and (tol is None or d <= tol):
                break
    return ks[-count:], ds[-count:]


def _short_words(pair, max_len):
    parents, lasts, lens, mats = _bfs(pair, max_len)
    words = [_word_at(parents, lasts, i, pair.M) for i in range(len(lens))]
    return words, mats


def assemble_psi(
    pair, seed=0, mode="real", eps=PSI_EPS, max_len=6, h_max_len=10, budget=2000, s_range=(0.25, 0.75)
):
    """Search short words g_1..g_n, h for which Psi is a local diffeomorphism at 0.

    Candidates g must be contracting (|s| in ``s_range``) of the requested kind; h is the
    shortest nonempty word within the basin radius with every nu_j = v_{g_j}(h) nonzero.
    The triple maximizing the smallest singular value of eps * Omega is accepted if that
    value is at least 1e-4.
    """
    gs = pair.group
    n = gs.algebra_dim
    want = ProximalKind.ONE if mode == "real" else ProximalKind.C1
    irrationality_screen(pair)
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((pair.M, n, n)) / math.sqrt(n)

    def alpha(u):
        return ElementTuple(gs, np.array([a @ gs.exp(Pi @ u) for a, Pi in zip(pair.mats, P)]))

    words, mats = _short_words(pair, max(max_len, h_max_len))
    dh = gs.norm_from_identity(mats)
    hs = [(words[i], mats[i]) for i in np.flatnonzero((dh > 0.02) & (dh <= BASIN_RADIUS))[:10]]
    keep = [i for i, w in enumerate(words) if len(w) <= max_len]
    words, mats = [words[i] for i in keep], mats[keep]
    if not hs:
        raise SearchError("no short word lies in the basin radius")
    cands = []
    tried = 0
    for w, m in zip(words, mats):
        if not len(w):
            continue
        tried += 1
        if tried > budget:
            break
        p = classify_proximal(gs, m)
        if p.kind is not want or not (s_range[0] <= p.abs_s <= s_range[1]) or p.spectral_gap > 0.8:
            continue
        sig = _grad_log_s(gs, w, alpha, n, complex(p.s))
        if sig is None:
            continue
        cands.append((w, p, sig))
        if len(cands) >= 24:
            break
    if len(cands) < n:
        raise SearchError(f"only {len(cands)} contracting candidates among {tried} words")
    for h_word, H in hs:
        nus = []
        for w, p, _ in cands:
            try:
                nus.append(estimate_v(gs, evaluate(w, pair), H, p))
            except RegimeError:
                nus.append(None)
        best = None
        for idx in itertools.combinations(range(len(cands)), n):
            if any(nus[i] is None or np.linalg.norm(nus[i]) < 1e-3 for i in idx):
                continue
            spec = PsiSpec(
                group=gs,
                pair=pair,
                g_words=[cands[i][0] for i in idx],
                h_word=h_word,
                eps=eps,
                slice_P=P,
                s0=np.array([complex(cands[i][1].s) for i in idx]),
                sigma=np.array([cands[i][2] for i in idx]),
                nu=np.array([nus[i] for i in idx]),
                prox=[cands[i][1] for i in idx],
                offsets=np.zeros(n, dtype=int),
                mode=mode,
            )
            Om = psi_omega(spec)
            smin = float(np.linalg.svd(eps * Om, compute_uv=False)[-1])
            if best is None or smin > best[0]:
                spec.omega = Om
                spec.sigma_min = smin
                best = (smin, spec)
        if best is not None and best[0] >= PSI_SIGMA_MIN:
            return best[1]
    raise SearchError("no candidate triple gives a nondegenerate Psi")

"""Lie-algebra commutator decompositions and group-level commutator factoring.

Weak mode writes z = [x1, y1] + [x2, y2] through a Cartan/root-space splitting; strong
mode writes z = [x, y]. Both return balanced parts, |x_j| = |y_j|.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DecompositionError, RegimeError, SearchError, SolverError, UsageError
from .groups import GroupSpec, commutator, get_group

ZERO_TOL = 1e-14
SPLIT_SIGMA_MIN = 1e-3
FACTOR_MAX_DELTA = 0.3


@dataclass(frozen=True, eq=False)
class RootDecomposition:
    group: GroupSpec
    regular_x: np.ndarray
    cartan_basis: np.ndarray  # (n, r) orthonormal columns
    complement_basis: np.ndarray  # (n, n - r) orthonormal columns
    projector_h: np.ndarray
    ad_condition: float
    splitting_g: np.ndarray | None = None
    split_sigma: float = 0.0
    # filled in together with splitting_g
    x2: np.ndarray | None = field(default=None, repr=False)
    e2_basis: np.ndarray | None = field(default=None, repr=False)
    t_basis: np.ndarray | None = field(default=None, repr=False)
    split_inverse: np.ndarray | None = field(default=None, repr=False)
    restricted_inverses: tuple | None = field(default=None, repr=False)

    @property
    def rank(self):
        return self.cartan_basis.shape[1]

    def conjugated(self, h):
        """The same decomposition transported by Ad_h (and g -> h g h^-1)."""
        gs = self.group
        A = gs.adjoint(h)
        rd = _make_rd(gs, A @ self.regular_x)
        if self.splitting_g is not None:
            rd = with_splitting(rd, h @ self.splitting_g @ gs.inverse(h))
        return rd


@dataclass(frozen=True, eq=False)
class SKSolution:
    mode: str
    parts: list
    residual: float
    norm_ratio: float

    def bracket_sum(self, gs):
        out = 0.0
        for x, y in self.parts:
            out = out + gs.bracket(x, y)
        return out


def _orth(cols, tol=1e-10):
    if cols.shape[1] == 0:
        return cols
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    k = int(np.sum(s > tol * max(s[0], 1e-300)))
    return u[:, :k]


def _kernel_dim(gs, x, tol=1e-8):
    s = np.linalg.svd(gs.ad(x), compute_uv=False)
    return int(np.sum(s <= tol * s[0])) if s[0] > 0 else gs.algebra_dim


def _make_rd(gs, x):
    n = gs.algebra_dim
    adx = gs.ad(x)
    u, s, vt = np.linalg.svd(adx)
    tol = 1e-8 * s[0]
    k = int(np.sum(s > tol))
    E = u[:, :k]
    H = vt[k:].T.copy()
    P = np.hstack([H, E])
    Pinv = np.linalg.inv(P)
    proj_h = H @ Pinv[: H.shape[1]]
    M = E.T @ adx @ E
    cond = float(np.linalg.cond(M)) if k else 1.0
    if H.shape[1] + E.shape[1] != n:
        raise DecompositionError("kernel and image do not span the algebra")
    return RootDecomposition(gs, np.asarray(x, dtype=float), H, E, proj_h, cond)


def root_decompose(group, seed, x=None, samples=20):
    """Cartan subalgebra ker(ad_x) and root-space complement for a regular x.

    Without an explicit ``x``, draws ``samples`` random unit elements, keeps those whose
    ad-kernel has the minimal dimension, and uses the best conditioned one.
    """
    gs = group if isinstance(group, GroupSpec) else get_group(group)
    if not gs.semisimple:
        raise UsageError(f"{gs.name} is not semisimple; no root decomposition")
    if x is not None:
        return _make_rd(gs, np.asarray(x, dtype=float))
    rng = np.random.default_rng(seed)
    cands = rng.standard_normal((samples, gs.algebra_dim))
    cands /= np.linalg.norm(cands, axis=1, keepdims=True)
    dims = np.array([_kernel_dim(gs, c) for c in cands])
    dmin = dims.min()
    good = np.flatnonzero(dims == dmin)
    if len(good) < samples // 2:
        raise DecompositionError(f"kernel dimension unstable across samples: {sorted(dims.tolist())}")
    best = None
    for i in good:
        rd = _make_rd(gs, cands[i])
        if best is None or rd.ad_condition < best.ad_condition:
            best = rd
    return best


def splitting_sigma(rd, g):
    """Smallest nonzero-index singular value (the n-th) of [E | Ad_g E]."""
    gs = rd.group
    E = rd.complement_basis
    E2 = gs.adjoint(g) @ E
    s = np.linalg.svd(np.hstack([E, E2]), compute_uv=False)
    n = gs.algebra_dim
    return float(s[n - 1]) if len(s) >= n else 0.0


def with_splitting(rd, g):
    """Attach a splitting element and precompute complement and restricted inverses."""
    gs = rd.group
    A = gs.adjoint(g)
    E1 = rd.complement_basis
    x2 = A @ rd.regular_x
    E2, _ = np.linalg.qr(A @ E1)
    r = rd.rank
    perp = np.eye(gs.algebra_dim) - E1 @ E1.T
    _, s, vt = np.linalg.svd(perp @ E2)
    T = E2 @ vt[:r].T
    B = np.hstack([E1, T])
    if np.linalg.svd(B, compute_uv=False)[-1] < 1e-12:
        raise SearchError("splitting element does not split the algebra")
    inv1 = E1 @ np.linalg.inv(E1.T @ gs.ad(rd.regular_x) @ E1) @ E1.T
    inv2 = E2 @ np.linalg.inv(E2.T @ gs.ad(x2) @ E2) @ E2.T
    return replace(
        rd,
        splitting_g=np.asarray(g),
        split_sigma=splitting_sigma(rd, g),
        x2=x2,
        e2_basis=E2,
        t_basis=T,
        split_inverse=np.linalg.inv(B),
        restricted_inverses=(inv1, inv2),
    )


def find_splitting_element(rd, seed, directions=50, max_trials=1000):
    """Search g = Exp(t v) maximizing the n-th singular value of [E | Ad_g E].

    Scans ``directions`` random unit v with t in 0.1, 0.2, ..., 2.0 and keeps the best;
    falls back to more directions up to ``max_trials`` evaluations if nothing passes.
    """
    gs = rd.group
    rng = np.random.default_rng(seed)
    ts = np.arange(1, 21) / 10.0
    best, best_s, trials = None, -1.0, 0
    while trials < max_trials:
        v = rng.standard_normal(gs.algebra_dim)
        v /= np.linalg.norm(v)
        for t in ts:
            g = gs.exp(t * v)
            s = splitting_sigma(rd, g)
            trials += 1
            if s > best_s:
                best, best_s = g, s
        if trials >= directions * len(ts) and best_s >= SPLIT_SIGMA_MIN:
            break
    if best_s < SPLIT_SIGMA_MIN:
        raise SearchError(f"no splitting element after {trials} trials (best sigma {best_s:.3g})")
    return with_splitting(rd, best)


def prepare_weak(group, seed=0):
    """Root decomposition with a splitting element, ready for :func:`weak_sk_solve`."""
    gs = group if isinstance(group, GroupSpec) else get_group(group)
    return find_splitting_element(root_decompose(gs, seed), seed + 1)


def _balance(x, y):
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        return np.zeros_like(x), np.zeros_like(y)
    lam = np.sqrt(ny / nx)
    return x * lam, y / lam


def _solution(gs, mode, parts, z):
    zn = np.linalg.norm(z)
    res = sum((gs.bracket(x, y) for x, y in parts), np.zeros_like(z)) - z
    ratio = max(np.linalg.norm(x) for x, _ in parts) / np.sqrt(zn) if zn > 0 else 0.0
    return SKSolution(mode, parts, float(np.linalg.norm(res)), float(ratio))


def weak_sk_solve(rd, z):
    """z = [x1, y1] + [x2, y2] with z1 in E, z2 in T, exact linear algebra."""
    if rd.splitting_g is None:
        raise UsageError("decomposition has no splitting element; call find_splitting_element")
    gs = rd.group
    z = np.asarray(z, dtype=float)
    n = gs.algebra_dim
    if np.linalg.norm(z) < ZERO_TOL:
        zero = np.zeros(n)
        return SKSolution("weak", [(zero, zero), (zero, zero)], float(np.linalg.norm(z)), 0.0)
    c = rd.split_inverse @ z
    k = rd.complement_basis.shape[1]
    z1 = rd.complement_basis @ c[:k]
    z2 = rd.t_basis @ c[k:]
    parts = []
    for xt, inv, zj in ((rd.regular_x, rd.restricted_inverses[0], z1), (rd.x2, rd.restricted_inverses[1], z2)):
        yt = inv @ zj
        parts.append(_balance(xt, yt))
    return _solution(gs, "weak", parts, z)


def _strong_closed_form(gs, z):
    zn = np.linalg.norm(z)
    zh = z / zn
    kappa = gs.structure[2, 0, 1]
    i = int(np.argmin(np.abs(zh)))
    a = np.eye(3)[i] - zh[i] * zh
    a /= np.linalg.norm(a)
    b = np.cross(zh, a) if kappa > 0 else np.cross(a, zh)
    alpha = np.sqrt(zn / abs(kappa))
    return alpha * a, alpha * b


def _strong_newton(gs, zh, rng, max_iter=200, restarts=20, keep=5, tol=1e-13):
    """Gauss-Newton on [x, y] = zh from random starts; returns the converged pair with
    the smallest |x||y| among the first ``keep`` successes."""
    n = gs.algebra_dim
    best = (np.inf, None)
    found = []
    for _ in range(restarts):
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        x /= np.linalg.norm(x)
        y /= np.linalg.norm(y)
        F = gs.bracket(x, y) - zh
        f = np.linalg.norm(F)
        for _ in range(max_iter):
            if f < tol:
                break
            J = np.hstack([-gs.ad(y), gs.ad(x)])
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
            t = 1.0
            while t > 1e-6:
                xn, yn = x + t * step[:n], y + t * step[n:]
                Fn = gs.bracket(xn, yn) - zh
                fn = np.linalg.norm(Fn)
                if fn < f:
                    break
                t /= 2
            if fn >= f:
                break
            x, y, F, f = xn, yn, Fn, fn
        if f < best[0]:
            best = (f, (x, y))
        if f < tol:
            found.append((np.linalg.norm(x) * np.linalg.norm(y), x, y))
            if len(found) >= keep:
                break
    if not found:
        raise SolverError(f"strong commutator solve did not converge (best residual {best[0]:.3g})", best=best[1])
    _, x, y = min(found, key=lambda t: t[0])
    return x, y


def strong_sk_solve(group, z, seed=0):
    """z = [x, y] with |x| = |y|: closed form on su2/so3, damped Gauss-Newton otherwise."""
    gs = group if isinstance(group, GroupSpec) else get_group(group)
    if gs.name == "aff1":
        raise UsageError("aff1 has no strong commutator solver")
    z = np.asarray(z, dtype=float)
    zn = np.linalg.norm(z)
    if zn < ZERO_TOL:
        zero = np.zeros(gs.algebra_dim)
        return SKSolution("strong", [(zero, zero)], float(zn), 0.0)
    if gs.name in ("su2", "so3"):
        x, y = _strong_closed_form(gs, z)
    else:
        # solve for the unit direction, then scale by sqrt|z|
        x, y = _strong_newton(gs, z / zn, np.random.default_rng(seed))
        x, y = x * np.sqrt(zn), y * np.sqrt(zn)
    x, y = _balance(x, y)
    return _solution(gs, "strong", [(x, y)], z)


def solve(solver, z, mode):
    if mode == "weak":
        return weak_sk_solve(solver, z)
    gs = solver.group if isinstance(solver, RootDecomposition) else solver
    return strong_sk_solve(gs, z)


def group_commutator_factor(solver, z, mode="weak"):
    """Factor a near-identity z as a product of one (strong) or two (weak) group commutators.

    Returns ``(pairs, achieved)`` where pairs are (Exp x_j, Exp y_j) and ``achieved`` is
    d(z, prod_j [Exp x_j, Exp y_j]).
    """
    gs = solver.group if isinstance(solver, RootDecomposition) else solver
    z = np.asarray(z)
    delta = gs.norm_from_identity(z)
    if delta > FACTOR_MAX_DELTA:
        raise RegimeError(f"d(z, I) = {delta:.3g} exceeds {FACTOR_MAX_DELTA}")
    if delta < ZERO_TOL:
        return [], 0.0
    v = gs.log(z)
    sol = solve(solver, v, mode)
    pairs = [(gs.exp(x), gs.exp(y)) for x, y in sol.parts]
    prod = np.eye(gs.matrix_dim, dtype=gs.dtype)
    for X, Y in pairs:
        prod = prod @ commutator(gs, X, Y)
    return pairs, gs.distance(z, prod)


@dataclass
class Calibration:
    group: str
    mode: str
    c_w: float
    c_strong: float
    c_factor: float
    c_dd: float
    samples: int
    seed: int

    def to_dict(self):
        return dict(self.__dict__)


def calibrate(solver, mode="weak", samples=10_000, seed=0, factor_samples=200):
    """Measure the solver constants used downstream.

    c_w / c_strong: max norm_ratio over ``samples`` random directions.
    c_factor: max achieved/delta^1.5 of exact commutator factoring.
    c_dd: same ratio when every factor is replaced by an approximation within delta,
    which is the contraction constant a recursive refinement actually sees.
    """
    gs = solver.group if isinstance(solver, RootDecomposition) else solver
    rng = np.random.default_rng(seed)
    zs = rng.standard_normal((samples, gs.algebra_dim))
    ratios = np.array([solve(solver, z, mode).norm_ratio for z in zs])
    c_sol = float(ratios.max())
    c_factor = 0.0
    c_dd = 0.0
    for i in range(factor_samples):
        delta = [0.1, 0.03, 0.01][i % 3]
        v = rng.standard_normal(gs.algebra_dim)
        z = gs.exp(delta * v / np.linalg.norm(v))
        pairs, got = group_commutator_factor(solver, z, mode)
        c_factor = max(c_factor, got / delta**1.5)
        pert = []
        for X, Y in pairs:
            ex, ey = rng.standard_normal((2, gs.algebra_dim))
            pert.append(
                (X @ gs.exp(delta * ex / np.linalg.norm(ex)), Y @ gs.exp(delta * ey / np.linalg.norm(ey)))
            )
        prod = np.eye(gs.matrix_dim, dtype=gs.dtype)
        for X, Y in pert:
            prod = prod @ commutator(gs, X, Y)
        c_dd = max(c_dd, gs.distance(z, prod) / delta**1.5)
    c_w = c_sol if mode == "weak" else float("nan")
    c_strong = c_sol if mode == "strong" else float("nan")
    return Calibration(gs.name, mode, c_w, c_strong, c_factor, c_dd, samples, seed)

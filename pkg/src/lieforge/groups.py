"""Matrix Lie groups: registry, exp/log charts, adjoint action and left-invariant distance.

Algebra elements are coordinate vectors in an orthonormal basis (real Frobenius pairing
``Re tr(A^H B)``). Group elements are plain square numpy arrays; :class:`GroupElement`
wraps one with its group tag where validation matters. Most functions accept a batch of
matrices with leading dimensions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import ChartError, InvalidElementError, UsageError

GROUP_NAMES = ("su2", "so3", "sl2r", "sl3r", "aff1")

# Log is refused once the rotation angle gets this close to pi.
CHART_MARGIN = 1e-6
MEMBERSHIP_TOL = 1e-8


def _gram_schmidt(mats):
    out = []
    for m in mats:
        v = np.array(m, dtype=complex)
        for b in out:
            v = v - np.real(np.vdot(b, v)) * b
        nrm = np.sqrt(np.real(np.vdot(v, v)))
        if nrm < 1e-12:
            raise ValueError("basis matrices are linearly dependent")
        out.append(v / nrm)
    return np.array(out)


def _raw_basis(name):
    if name == "su2":
        s1 = np.array([[0, 1], [1, 0]], dtype=complex)
        s2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
        s3 = np.array([[1, 0], [0, -1]], dtype=complex)
        return [1j * s1, 1j * s2, 1j * s3]
    if name == "so3":
        L1 = [[0, 0, 0], [0, 0, -1], [0, 1, 0]]
        L2 = [[0, 0, 1], [0, 0, 0], [-1, 0, 0]]
        L3 = [[0, -1, 0], [1, 0, 0], [0, 0, 0]]
        return [np.array(L, dtype=float) for L in (L1, L2, L3)]
    if name == "sl2r":
        return [np.diag([1.0, -1.0]), np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0, 0.0], [1.0, 0.0]])]
    if name == "sl3r":
        mats = [np.diag([1.0, -1.0, 0.0]), np.diag([0.0, 1.0, -1.0])]
        for i in range(3):
            for j in range(3):
                if i != j:
                    m = np.zeros((3, 3))
                    m[i, j] = 1.0
                    mats.append(m)
        return mats
    if name == "aff1":
        return [np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([[0.0, 1.0], [0.0, 0.0]])]
    raise UsageError(f"unknown group {name!r}; expected one of {', '.join(GROUP_NAMES)}")


@dataclass(frozen=True, eq=False)
class GroupSpec:
    """An immutable registered matrix group with a fixed orthonormal algebra basis."""

    name: str
    matrix_dim: int
    algebra_dim: int
    basis: np.ndarray = field(repr=False)
    structure: np.ndarray = field(repr=False)
    is_complex: bool = False
    semisimple: bool = True
    compact: bool = False
    chart_radius: float = np.pi * np.sqrt(2.0)

    @property
    def dtype(self):
        return complex if self.is_complex else float

    # -- algebra <-> matrices -------------------------------------------------
    def coords(self, X):
        X = np.asarray(X)
        return np.real(np.einsum("kij,...ij->...k", self.basis.conj(), X))

    def from_coords(self, v):
        v = np.asarray(v, dtype=float)
        M = np.einsum("...k,kij->...ij", v, self.basis)
        return M if self.is_complex else np.real(M)

    def bracket(self, x, y):
        return np.einsum("kij,...i,...j->...k", self.structure, x, y)

    def ad(self, x):
        """Matrix of y -> [x, y] in algebra coordinates."""
        return np.einsum("kij,...i->...kj", self.structure, np.asarray(x, dtype=float))

    # -- group ------------------------------------------------------------------
    def identity(self):
        return np.eye(self.matrix_dim, dtype=self.dtype)

    def inverse(self, g):
        g = np.asarray(g)
        if self.name == "su2":
            return np.conj(np.swapaxes(g, -1, -2))
        if self.name == "so3":
            return np.swapaxes(g, -1, -2)
        if self.name == "sl2r":
            out = np.empty_like(g)
            out[..., 0, 0] = g[..., 1, 1]
            out[..., 1, 1] = g[..., 0, 0]
            out[..., 0, 1] = -g[..., 0, 1]
            out[..., 1, 0] = -g[..., 1, 0]
            return out
        if self.name == "aff1":
            out = np.zeros_like(g)
            out[..., 0, 0] = 1.0 / g[..., 0, 0]
            out[..., 0, 1] = -g[..., 0, 1] / g[..., 0, 0]
            out[..., 1, 1] = 1.0
            return out
        return np.linalg.inv(g)

    def membership_residual(self, g):
        g = np.asarray(g)
        d = self.matrix_dim
        if g.shape[-2:] != (d, d):
            return np.inf
        if not np.all(np.isfinite(g)):
            return np.inf
        if self.name in ("su2", "so3"):
            gram = np.conj(np.swapaxes(g, -1, -2)) @ g
            res = np.max(np.abs(gram - np.eye(d)), axis=(-2, -1))
            return np.max(res + np.abs(np.linalg.det(g) - 1.0))
        if self.name in ("sl2r", "sl3r"):
            if np.iscomplexobj(g) and np.max(np.abs(np.imag(g))) > 0:
                return np.inf
            return np.max(np.abs(np.linalg.det(np.real(g)) - 1.0))
        # aff1
        res = np.abs(g[..., 1, 0]) + np.abs(g[..., 1, 1] - 1.0)
        bad = g[..., 0, 0] <= 0
        return np.inf if np.any(bad) else float(np.max(res))

    def element(self, matrix, tol=MEMBERSHIP_TOL):
        """Wrap and validate a matrix as a :class:`GroupElement`."""
        m = np.array(matrix, dtype=self.dtype)
        res = self.membership_residual(m)
        if not res <= tol:
            raise InvalidElementError(f"matrix is not in {self.name} (residual {res:.3g})")
        return GroupElement(self, m)

    # -- charts -------------------------------------------------------------------
    def exp(self, v):
        return _EXP[self.name](self, np.asarray(v, dtype=float))

    def log_batch(self, g):
        """Principal log of a batch; returns (coords, in_chart mask) without raising."""
        return _LOG[self.name](self, np.asarray(g))

    def log(self, g):
        g = np.asarray(g)
        v, ok = self.log_batch(g)
        if not np.all(ok):
            spectrum = np.linalg.eigvals(g)
            raise ChartError(f"{self.name}: element outside the principal chart", spectrum=spectrum)
        return v

    def log_near_identity(self, dev):
        """Log of ``I + dev`` keeping relative precision when ``dev`` is tiny."""
        dev = np.asarray(dev)
        nrm = np.linalg.norm(dev)
        if nrm > 1e-3:
            return self.log(np.eye(self.matrix_dim) + dev)
        acc = np.zeros_like(dev)
        term = np.eye(self.matrix_dim, dtype=dev.dtype)
        for k in range(1, 12):
            term = term @ dev
            acc = acc + ((-1) ** (k + 1) / k) * term
            if np.linalg.norm(term) < 1e-18 * nrm:
                break
        return self.coords(acc)

    # -- adjoint and metric -------------------------------------------------------
    def adjoint(self, g):
        g = np.asarray(g)
        gi = self.inverse(g)
        conj = np.einsum("...ab,kbc,...cd->...kad", g, self.basis, gi)
        return np.swapaxes(self.coords(conj), -1, -2)

    def distance(self, a, b):
        return float(self.distances(a, np.asarray(b)[None])[0])

    def distances(self, a, many):
        """d(a, b) for every b in ``many``: norm of log(a^-1 b), or the fallback outside the chart."""
        rel = self.inverse(np.asarray(a)) @ np.asarray(many)
        return self.norm_from_identity(rel)

    def norm_from_identity(self, g):
        v, ok = self.log_batch(g)
        d = np.linalg.norm(v, axis=-1)
        if not np.all(ok):
            fro = np.linalg.norm(g - np.eye(self.matrix_dim), axis=(-2, -1))
            d = np.where(ok, d, self.chart_radius + fro)
        return d

    # -- sampling ------------------------------------------------------------------
    def random_algebra(self, rng, size=None, scale=1.0):
        shape = (self.algebra_dim,) if size is None else (size, self.algebra_dim)
        return scale * rng.standard_normal(shape)

    def random_ball(self, rng, size, radius):
        """Uniform samples of the algebra ball of given radius (log-chart coordinates)."""
        n = self.algebra_dim
        dirs = rng.standard_normal((size, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        r = radius * rng.random(size) ** (1.0 / n)
        return dirs * r[:, None]

    def random_element(self, rng, scale=1.0):
        return self.exp(self.random_algebra(rng, scale=scale))


@dataclass(frozen=True, eq=False)
class GroupElement:
    group: GroupSpec
    matrix: np.ndarray

    def __matmul__(self, other):
        return group_op(self, other, GroupOp.MUL)


class GroupOp(enum.Enum):
    MUL = "mul"
    INV = "inv"
    CONJ = "conj"
    COMM = "comm"


def group_op(a, b, op):
    """Mul: ab; Inv: a^-1 (b ignored); Conj: a b a^-1; Comm: a b a^-1 b^-1."""
    op = GroupOp(op)
    gs = a.group
    if b is not None and b.group is not gs:
        raise UsageError(f"group mismatch: {gs.name} vs {b.group.name}")
    for x in (a, b):
        if x is None:
            continue
        res = gs.membership_residual(x.matrix)
        if not res <= MEMBERSHIP_TOL:
            raise InvalidElementError(f"input not in {gs.name} (residual {res:.3g})")
    A = a.matrix
    if op is GroupOp.INV:
        return GroupElement(gs, gs.inverse(A))
    B = b.matrix
    if op is GroupOp.MUL:
        out = A @ B
    elif op is GroupOp.CONJ:
        out = A @ B @ gs.inverse(A)
    else:
        out = A @ B @ gs.inverse(A) @ gs.inverse(B)
    return GroupElement(gs, out)


def commutator(gs, a, b):
    return a @ b @ gs.inverse(a) @ gs.inverse(b)


# -- closed-form charts -------------------------------------------------------------


def _sinc(x):
    return np.sinc(x / np.pi)


def _exp_su2(gs, v):
    X = gs.from_coords(v)
    theta = np.linalg.norm(v, axis=-1) / np.sqrt(2.0)
    c = np.cos(theta)[..., None, None]
    s = _sinc(theta)[..., None, None]
    return c * np.eye(2) + s * X


def _log_su2(gs, g):
    g = np.asarray(g, dtype=complex)
    cos_t = np.real(np.trace(g, axis1=-2, axis2=-1)) / 2.0
    S = (g - np.conj(np.swapaxes(g, -1, -2))) / 2.0
    cS = gs.coords(S)
    sin_t = np.linalg.norm(cS, axis=-1) / np.sqrt(2.0)
    theta = np.arctan2(sin_t, cos_t)
    ok = theta < np.pi - CHART_MARGIN
    return cS / _sinc(np.where(ok, theta, 0.0))[..., None], ok


def _exp_so3(gs, v):
    X = gs.from_coords(v)
    phi = np.linalg.norm(v, axis=-1) / np.sqrt(2.0)
    a = _sinc(phi)[..., None, None]
    half = _sinc(phi / 2.0)
    b = (0.5 * half * half)[..., None, None]
    return np.eye(3) + a * X + b * (X @ X)


def _log_so3(gs, g):
    g = np.asarray(g, dtype=float)
    cos_p = (np.trace(g, axis1=-2, axis2=-1) - 1.0) / 2.0
    S = (g - np.swapaxes(g, -1, -2)) / 2.0
    cS = gs.coords(S)
    sin_p = np.linalg.norm(cS, axis=-1) / np.sqrt(2.0)
    phi = np.arctan2(sin_p, cos_p)
    ok = phi < np.pi - CHART_MARGIN
    return cS / _sinc(np.where(ok, phi, 0.0))[..., None], ok


def _sl2_cs(delta):
    """cosh(sqrt(delta)) and sinh(sqrt(delta))/sqrt(delta), analytic in delta of either sign."""
    delta = np.asarray(delta, dtype=float)
    r = np.sqrt(np.abs(delta))
    small = np.abs(delta) < 1e-8
    rr = np.where(small, 1.0, r)
    C = np.where(delta >= 0, np.cosh(rr), np.cos(rr))
    S = np.where(delta >= 0, np.sinh(rr) / rr, np.sin(rr) / rr)
    C = np.where(small, 1.0 + delta / 2.0 + delta**2 / 24.0, C)
    S = np.where(small, 1.0 + delta / 6.0 + delta**2 / 120.0, S)
    return C, S


def _exp_sl2r(gs, v):
    X = gs.from_coords(v)
    delta = X[..., 0, 0] ** 2 + X[..., 0, 1] * X[..., 1, 0]
    C, S = _sl2_cs(delta)
    return C[..., None, None] * np.eye(2) + S[..., None, None] * X


def _log_sl2r(gs, g):
    g = np.real(np.asarray(g))
    c = (g[..., 0, 0] + g[..., 1, 1]) / 2.0
    cm1 = ((g[..., 0, 0] - 1.0) + (g[..., 1, 1] - 1.0)) / 2.0
    ok = c > -1.0
    hyper = c >= 1.0
    r = np.where(hyper, np.arccosh(np.maximum(c, 1.0)), np.arccos(np.clip(c, -1.0, 1.0)))
    ok &= hyper | (r < np.pi - CHART_MARGIN)
    delta = np.where(hyper, r * r, -r * r)
    near = np.abs(cm1) < 1e-6
    # series of the inverse of cosh(sqrt(d)) = 1 + cm1 near the identity
    delta = np.where(near, 2.0 * cm1 - cm1**2 / 3.0, delta)
    _, S = _sl2_cs(delta)
    S = np.where(ok, S, 1.0)
    X = (g - c[..., None, None] * np.eye(2)) / S[..., None, None]
    return gs.coords(X), ok


def _exp_sl3r(gs, v):
    X = gs.from_coords(v)
    if X.ndim == 2:
        return scipy.linalg.expm(X)
    flat = X.reshape(-1, 3, 3)
    return np.array([scipy.linalg.expm(m) for m in flat]).reshape(X.shape)


def _log_sl3r_one(gs, m):
    w = np.linalg.eigvals(m)
    if np.any((np.abs(np.imag(w)) < 1e-12 * np.maximum(1.0, np.abs(w))) & (np.real(w) <= 0)):
        return np.zeros(gs.algebra_dim), False
    L = scipy.linalg.logm(m)
    if np.iscomplexobj(L):
        if np.max(np.abs(np.imag(L))) > 1e-8:
            return np.zeros(gs.algebra_dim), False
        L = np.real(L)
    return gs.coords(L), True


def _log_sl3r(gs, g):
    g = np.real(np.asarray(g))
    if g.ndim == 2:
        v, ok = _log_sl3r_one(gs, g)
        return v, np.bool_(ok)
    flat = g.reshape(-1, 3, 3)
    out = [_log_sl3r_one(gs, m) for m in flat]
    v = np.array([o[0] for o in out]).reshape(g.shape[:-2] + (gs.algebra_dim,))
    ok = np.array([o[1] for o in out]).reshape(g.shape[:-2])
    return v, ok


def _exp_aff1(gs, v):
    a = v[..., 0]
    b = v[..., 1]
    small = np.abs(a) < 1e-12
    f = np.where(small, 1.0 + a / 2.0, np.expm1(a) / np.where(small, 1.0, a))
    out = np.zeros(v.shape[:-1] + (2, 2))
    out[..., 0, 0] = np.exp(a)
    out[..., 0, 1] = b * f
    out[..., 1, 1] = 1.0
    return out


def _log_aff1(gs, g):
    g = np.real(np.asarray(g))
    s = g[..., 0, 0]
    ok = s > 0
    a = np.log(np.where(ok, s, 1.0))
    small = np.abs(a) < 1e-12
    f = np.where(small, 1.0 - a / 2.0, a / np.where(small, 1.0, np.expm1(a)))
    v = np.stack([a, g[..., 0, 1] * f], axis=-1)
    return v, ok


_EXP = {"su2": _exp_su2, "so3": _exp_so3, "sl2r": _exp_sl2r, "sl3r": _exp_sl3r, "aff1": _exp_aff1}
_LOG = {"su2": _log_su2, "so3": _log_so3, "sl2r": _log_sl2r, "sl3r": _log_sl3r, "aff1": _log_aff1}


def get_group(name):
    """Registered group by name ("su2", "so3", "sl2r", "sl3r", "aff1"); case-insensitive.

    Returns one shared instance per group.
    """
    if isinstance(name, GroupSpec):
        return name
    return _build_group(str(name).lower())


@lru_cache(maxsize=None)
def _build_group(key):
    basis = _gram_schmidt(_raw_basis(key))
    is_complex = key == "su2"
    if not is_complex:
        basis = np.real(basis)
    n = len(basis)
    d = basis.shape[-1]
    # structure constants: [b_i, b_j] = sum_k C[k, i, j] b_k
    br = np.einsum("iab,jbc->ijac", basis, basis) - np.einsum("jab,ibc->ijac", basis, basis)
    C = np.real(np.einsum("kab,ijab->kij", basis.conj(), br))
    recon = np.einsum("kij,kab->ijab", C, basis)
    if np.max(np.abs(recon - br)) > 1e-12:
        raise ValueError(f"{key}: basis not closed under bracket")
    return GroupSpec(
        name=key,
        matrix_dim=d,
        algebra_dim=n,
        basis=basis,
        structure=C,
        is_complex=is_complex,
        semisimple=key != "aff1",
        compact=key in ("su2", "so3"),
    )


def random_pair(gs, seed, scale=None):
    """Seeded generating pair (A, B) = (exp a, exp b) with generic algebra directions.

    The norms are drawn in [0.6, 1.4] times ``scale`` (default 1 for compact groups and
    0.5 for the others) so both generators are moderately far from the identity.
    """
    rng = np.random.default_rng(seed)
    if scale is None:
        scale = 1.0 if gs.compact else 0.5
    mats = []
    for _ in range(2):
        v = rng.standard_normal(gs.algebra_dim)
        v *= scale * rng.uniform(0.6, 1.4) / np.linalg.norm(v)
        mats.append(gs.exp(v))
    return np.array(mats)

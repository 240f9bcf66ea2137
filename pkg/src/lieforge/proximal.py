"""Spectral classification of Ad_g - Id: 1-proximal, complex 1-proximal, or neither."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

GAP_TOL = 1e-8


class ProximalKind(enum.Enum):
    ONE = "OneProximal"
    C1 = "C1Proximal"
    NEITHER = "Neither"


@dataclass(frozen=True, eq=False)
class ProximalData:
    kind: ProximalKind
    s: complex
    eigen_plane: np.ndarray  # (n, r) orthonormal basis of L(g), r = 1 or 2 (empty for Neither)
    complex_structure: np.ndarray | None
    spectral_gap: float
    projector: np.ndarray | None  # spectral projector onto L(g) along the other eigenspaces
    degenerate: bool = False

    @property
    def abs_s(self):
        return abs(self.s)

    @property
    def in_pi(self):
        """g in Pi (real case) with |s| < 1."""
        return self.kind is ProximalKind.ONE and abs(self.s) < 1

    @property
    def in_pi_c1(self):
        return self.kind is ProximalKind.C1 and abs(self.s) < 1

    @property
    def contracting(self):
        return self.in_pi or self.in_pi_c1

    def mult_matrix(self, power=1):
        """Matrix of multiplication by s**power on L(g) coordinates (1x1 or 2x2)."""
        if self.kind is ProximalKind.ONE:
            return np.array([[np.real(self.s) ** power]])
        sp = complex(self.s) ** power
        return sp.real * np.eye(2) + sp.imag * self.complex_structure

    def plane_coords(self, v):
        """Coordinates in the eigen_plane basis of the L(g)-component of v (along the other eigenspaces)."""
        return self.eigen_plane.T @ (self.projector @ np.asarray(v))


def _neither(n, gap, degenerate):
    return ProximalData(ProximalKind.NEITHER, 0j, np.zeros((n, 0)), None, gap, None, degenerate)


def classify_proximal(gs, g, tol=GAP_TOL):
    """Classify g by the dominant eigenvalue(s) of Ad_g - Id."""
    n = gs.algebra_dim
    A = gs.adjoint(np.asarray(g)) - np.eye(n)
    lam, V = np.linalg.eig(A)
    order = np.argsort(-np.abs(lam), kind="stable")
    lam, V = lam[order], V[:, order]
    top = abs(lam[0])
    scale = max(1.0, np.max(np.abs(A)))
    if top <= 1e-12 * scale:
        return _neither(n, 1.0, False)
    is_real = abs(lam[0].imag) <= 1e-10 * max(top, 1e-300)
    dom = 1 if is_real else 2
    if not is_real and (len(lam) < 2 or abs(lam[1] - np.conj(lam[0])) > 1e-8 * top):
        return _neither(n, 1.0, True)
    nxt = abs(lam[dom]) if len(lam) > dom else 0.0
    gap = nxt / top
    if gap >= 1 - tol:
        return _neither(n, gap, True)
    Vinv = np.linalg.inv(V)
    P = np.real(V[:, :dom] @ Vinv[:dom, :])
    if is_real:
        u = np.real(V[:, 0])
        basis = (u / np.linalg.norm(u))[:, None]
        return ProximalData(ProximalKind.ONE, complex(lam[0].real), basis, None, gap, P)
    k = 0 if lam[0].imag > 0 else 1
    s = complex(lam[k])
    u = V[:, k]
    basis, _ = np.linalg.qr(np.column_stack([u.real, u.imag]))
    AL = basis.T @ A @ basis
    J = (AL - s.real * np.eye(2)) / s.imag
    return ProximalData(ProximalKind.C1, s, basis, J, gap, P)


def adjoint_spectrum(gs, g):
    return np.linalg.eigvals(gs.adjoint(np.asarray(g)))


def spectrum_symmetry_defect(gs, g):
    """Max mismatch of the best matching between the spectrum of Ad_g and its reciprocals."""
    lam = adjoint_spectrum(gs, g)
    cost = np.abs(lam[:, None] - 1.0 / lam[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max())

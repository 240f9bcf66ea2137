"""Iterated commutator dynamics for g = diag(x, 1/x) in SL2R and the Psi-limit check."""

import argparse

import numpy as np

from lieforge.dynamics import assemble_psi, psi_derivative_scaling, run_dynamics, v_functional_residual, verify_psi_limit
from lieforge.groups import get_group, random_pair
from lieforge.words import ElementTuple


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--x", type=float, default=1.2)
    ap.add_argument("--count", type=int, default=10)
    ap.add_argument("--radius", type=float, default=0.05)
    ap.add_argument("--pair-seed", type=int, default=7)
    args = ap.parse_args()
    gs = get_group("sl2r")
    g = np.diag([args.x, 1 / args.x])
    hs = gs.exp(gs.random_ball(np.random.default_rng(700), args.count, args.radius))
    print(" h  ratio_30    angle_25    v residual")
    for i, h in enumerate(hs):
        rep = run_dynamics(gs, g, h, k_max=40)
        print(f"{i:2d}  {rep.ratios[30]:.8f}  {rep.angles[25]:.3e}  {v_functional_residual(gs, g, h):.1e}")

    spec = assemble_psi(ElementTuple(gs, random_pair(gs, args.pair_seed)), seed=0)
    print(f"Psi: g words {[str(w) for w in spec.g_words]}, h = {spec.h_word}, sigma_min {spec.sigma_min:.3g}")
    for k, err in verify_psi_limit(spec, [8, 16, 32, 64]):
        print(f"  k {k:3d}: sup grid error {err:.4g}")
    rows, slope = psi_derivative_scaling(spec)
    print(f"  derivative deviation {[f'{e:.3g}' for _, e in rows]}, slope {slope:.3f}")


if __name__ == "__main__":
    main()

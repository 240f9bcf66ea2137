"""Affine relation sequence table and the rescaled limit errors."""

import argparse

from lieforge.relations import affine_gap_constant, affine_limit_error, affine_relation_sequence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--s0", type=float, default=0.3)
    ap.add_argument("--kmax", type=int, default=40)
    args = ap.parse_args()
    steps = affine_relation_sequence(args.s0, args.kmax)
    print(" k  m_k                     s_k                  gap       residual")
    for s in steps:
        print(f"{s.k:2d}  {s.m_k:<22d}  {s.s_k:.17f}  {s.gap:.3e}  {s.relation_residual:.1e}")
    print(f"gap <= C/k with C = {affine_gap_constant(steps):.4g}")
    for k in (10, 20, 40):
        print(f"sup error at k={k}: {affine_limit_error(args.s0, k):.4g}")


if __name__ == "__main__":
    main()

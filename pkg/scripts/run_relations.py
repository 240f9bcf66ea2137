"""Relation certificates: net-plus-Newton levels on a compact pair and commutator-power
relations on an SL2R pair."""

import argparse
from dataclasses import dataclass

from lieforge.dynamics import assemble_psi
from lieforge.groups import get_group, random_pair
from lieforge.netgen import build_base_net
from lieforge.relations import anchor_word, find_relation_commutator_power, relation_rate_curve
from lieforge.sk import build_levels
from lieforge.words import ElementTuple


@dataclass
class RelationConfig:
    group: str = "su2"
    pair_seed: int = 7
    max_len: int = 10
    levels: int = 3
    psi_seed: int = 0
    ks: str = "8,16,32"


def make_pair(name, seed):
    gs = get_group(name)
    return ElementTuple(gs, random_pair(gs, seed))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    for k, v in RelationConfig().__dict__.items():
        ap.add_argument(f"--{k.replace('_', '-')}", type=type(v), default=v)
    cfg = RelationConfig(**vars(ap.parse_args()))

    pair = make_pair(cfg.group, cfg.pair_seed)
    state = build_levels(build_base_net(pair, cfg.max_len, dedup_radius=0.01), cfg.levels)
    curve = relation_rate_curve(pair, state)
    print(f"{cfg.group} net-newton certificates")
    for c in curve.certificates:
        print(f"  level {c.level}: length {c.word_length:5d}  pair_dist {c.pair_dist:.4g}  residual {c.residual:.1e}  "
              f"probe {c.checks['probe_dist']:.3g}")
    d = [c.pair_dist for c in curve.certificates]
    if len(d) >= 2:
        print(f"  last/first = {d[-1] / d[0]:.4g}  kappa_hat = {curve.kappa_hat:.4g}")
    for k, msg in curve.failures:
        print(f"  level {k} failed: {msg}")

    spec = assemble_psi(make_pair("sl2r", cfg.pair_seed), seed=cfg.psi_seed)
    w, u0 = anchor_word(spec)
    print(f"sl2r commutator-power certificates (anchor {w}, |u0| = {u0:.3g})")
    for k in (int(x) for x in cfg.ks.split(",")):
        c = find_relation_commutator_power(spec, k, w)
        print(f"  k {k:3d}: length <= {c.word_length:.3g}  pair_dist {c.pair_dist:.4g}  residual {c.residual:.1e}")


if __name__ == "__main__":
    main()

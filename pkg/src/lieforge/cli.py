"""Command-line experiment runner.

Every command reads flags (optionally merged over a flat ``key = value`` config file),
writes its data output as CSV or JSON, and, when ``--out`` is given, a manifest next to it
with the config echo, versions, phase timings and sha256 digests of the outputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy

from . import __version__
from .commutator import calibrate, group_commutator_factor, prepare_weak
from .dynamics import assemble_psi, run_dynamics, v_functional_residual
from .errors import LieForgeError, UsageError
from .groups import GROUP_NAMES, get_group, random_pair
from .netgen import Region, build_base_net, build_or_load, nearest, net_to_dict
from .relations import affine_relation_sequence, anchor_word, find_relation_commutator_power, relation_rate_curve
from .sk import approximate, build_levels, measurement_targets, rate_report
from .words import ElementTuple, evaluate, parse

COMMANDS = ("net", "approx", "rate", "factor-commutator", "find-relation", "dynamics", "affine", "calibrate")

# (flag, type, default, help) shared by every command
COMMON = [
    ("group", str, "su2", "group name: " + ", ".join(GROUP_NAMES)),
    ("pair-seed", int, 7, "seed of the generating pair"),
    ("seed", int, 0, "search / sampling seed"),
    ("out", str, None, "output path (default: stdout, no manifest)"),
    ("cache-dir", str, None, "net cache directory (LIEFORGE_CACHE overrides)"),
    ("threads", int, 0, "thread-pool size (0: machine parallelism; runs are single-threaded deterministic)"),
]

NET_OPTS = [
    ("max-len", int, 10, "maximal base word length"),
    ("radius", float, 1.0, "radius of the covered ball around the identity"),
    ("target-delta", float, 0.0, "stop early once the covering radius reaches this"),
    ("dedup", float, 0.01, "drop entries within this distance of a shorter word"),
    ("samples", int, 10_000, "validation samples"),
]

ENGINE_OPTS = NET_OPTS[:2] + NET_OPTS[3:] + [
    ("mode", str, "weak", "weak (two commutators) or strong (one commutator)"),
    ("levels", int, 3, "number of refinement levels"),
    ("calib-samples", int, 2000, "solver calibration samples"),
    ("measure-count", int, 200, "targets measured per level while building"),
]

OPTIONS = {
    "net": NET_OPTS,
    "approx": ENGINE_OPTS + [("target", str, "random:50", "random:N, identity or coords:x,y,...")],
    "rate": ENGINE_OPTS + [("rate-samples", int, 200, "fresh targets for the rate fit")],
    "factor-commutator": [
        ("mode", str, "weak", "weak or strong"),
        ("deltas", str, "0.1,0.01,0.001", "comma-separated target distances"),
        ("count", int, 20, "targets per distance"),
    ],
    "find-relation": ENGINE_OPTS
    + [
        ("method", str, "net-newton", "net-newton or commutator-power (sl2r)"),
        ("k", str, "8,16,32", "commutator depths for commutator-power"),
    ],
    "dynamics": [
        ("g", str, "diag:1.2", "diag:x, word:<letters> or exp:c1,c2,..."),
        ("h-seed", int, 3, "seed of the random h"),
        ("h-radius", float, 0.05, "h is drawn with d(h, I) <= this"),
        ("kmax", int, 40, "number of iterations"),
    ],
    "affine": [
        ("s0", float, 0.3, "scaling factor in (0, 1)"),
        ("kmax", int, 40, "last k"),
    ],
    "calibrate": [
        ("mode", str, "weak", "weak or strong"),
        ("samples", int, 10_000, "random algebra directions"),
        ("factor-samples", int, 200, "group factoring samples"),
    ],
}

COMMAND_GROUP = {"dynamics": "sl2r", "affine": "aff1"}


def fmt(x):
    """17 significant digits for reals (exact double round trip); ints and strings as is."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def csv_bytes(header, rows):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([fmt(x) for x in r])
    return buf.getvalue().encode("utf-8")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def json_bytes(obj):
    return (json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n").encode("utf-8")


@dataclass
class ExperimentConfig:
    command: str
    group: str
    pair_seed: int
    seed: int
    out: str | None = None
    cache_dir: str | None = None
    threads: int = 0
    params: dict = field(default_factory=dict)


@dataclass
class RunManifest:
    config: dict
    versions: dict
    phases: dict
    outputs: dict

    def to_bytes(self):
        return json_bytes(asdict(self))


def _key(flag):
    return flag.replace("-", "_")


def read_config_file(path, command):
    """Flat key = value pairs; '#' starts a comment. Unknown keys are rejected."""
    allowed = {_key(f): t for f, t, _, _ in COMMON + OPTIONS[command]}
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key = value, got {raw.strip()!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        k = _key(k)
        if k not in allowed:
            raise UsageError(f"{path}:{no}: unknown key {k!r} for command {command}")
        try:
            out[k] = allowed[k](v)
        except ValueError as exc:
            raise UsageError(f"{path}:{no}: bad value for {k}: {exc}") from exc
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="lieforge", description="Word nets, Solovay-Kitaev refinement and relation finding on matrix Lie groups")
    p.add_argument("--version", action="version", version=f"lieforge {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", default=None, help="flat key = value file; flags win")
        for flag, typ, default, help_ in COMMON + OPTIONS[cmd]:
            sp.add_argument(f"--{flag}", type=typ, default=None, help=f"{help_} (default: {default})")
    return p


def parse_config(argv):
    args = build_parser().parse_args(argv)
    cmd = args.command
    values = {_key(f): d for f, _, d, _ in COMMON + OPTIONS[cmd]}
    if cmd in COMMAND_GROUP:
        values["group"] = COMMAND_GROUP[cmd]
    if args.config:
        values.update(read_config_file(args.config, cmd))
    for k in values:
        v = getattr(args, k)
        if v is not None:
            values[k] = v
    env = os.environ.get("LIEFORGE_CACHE")
    if env:
        values["cache_dir"] = env
    common = {k: values.pop(k) for k in ("group", "pair_seed", "seed", "out", "cache_dir", "threads")}
    return ExperimentConfig(command=cmd, params=values, **common)


# -- pipelines -------------------------------------------------------------------------------


class _Timer:
    def __init__(self):
        self.phases = {}

    def phase(self, name):
        timer = self

        class _P:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                timer.phases[name] = timer.phases.get(name, 0.0) + time.perf_counter() - self.t

        return _P()


def _pair(cfg):
    gs = get_group(cfg.group)
    return ElementTuple(gs, random_pair(gs, cfg.pair_seed))


def _net(cfg, pair):
    p = cfg.params
    kw = {"dedup_radius": p["dedup"]}
    if "samples" in p:
        kw["samples"] = p["samples"]
    if cfg.cache_dir:
        os.makedirs(cfg.cache_dir, exist_ok=True)
        return build_or_load(pair, p["max_len"], Region(p["radius"]), p.get("target_delta", 0.0), cfg.seed, cfg.cache_dir, **kw)
    return build_base_net(pair, p["max_len"], Region(p["radius"]), p.get("target_delta", 0.0), cfg.seed, **kw)


def _levels(cfg, pair, timer, levels=None):
    p = cfg.params
    with timer.phase("net"):
        net = _net(cfg, pair)
    with timer.phase("levels"):
        return build_levels(
            net,
            levels or p["levels"],
            mode=p["mode"],
            seed=cfg.seed,
            measure_count=p["measure_count"],
            calib_samples=p["calib_samples"],
        )


def cmd_net(cfg, timer):
    pair = _pair(cfg)
    with timer.phase("net"):
        net = _net(cfg, pair)
    return json_bytes(net_to_dict(net)), "json"


def _targets(gs, spec, seed):
    if spec == "identity":
        return gs.identity()[None]
    if spec.startswith("random:"):
        n = int(spec.split(":", 1)[1])
        if n < 1:
            raise UsageError("random:N needs N >= 1")
        return measurement_targets(gs, n, seed)
    if spec.startswith("coords:"):
        c = np.array([float(x) for x in spec.split(":", 1)[1].split(",")])
        if c.shape != (gs.algebra_dim,):
            raise UsageError(f"coords need {gs.algebra_dim} values")
        return gs.exp(c)[None]
    raise UsageError(f"bad target {spec!r}")


def cmd_approx(cfg, timer):

    pair = _pair(cfg)
    try:
        targets = _targets(pair.group, cfg.params["target"], cfg.seed)
    except ValueError as exc:
        raise UsageError(f"bad target: {exc}") from exc
    state = _levels(cfg, pair, timer)
    rows = []
    with timer.phase("approximate"):
        for i, t in enumerate(targets):
            for m in range(1, state.level + 1):
                w, d = approximate(state, t, m)
                rows.append((i, m, len(w), d, str(w)))
    return csv_bytes(["target", "level", "length", "dist", "word"], rows), "csv"


def cmd_rate(cfg, timer):
    if cfg.params["levels"] < 2:
        raise UsageError("rate needs --levels >= 2")
    pair = _pair(cfg)
    state = _levels(cfg, pair, timer)
    with timer.phase("rate"):
        rep = rate_report(state, cfg.params["rate_samples"], seed=cfg.seed + 1)
    return csv_bytes(["m", "l_m", "max_err", "median_err", "kappa_hat", "c_hat"], rep.rows()), "csv"


def cmd_factor(cfg, timer):
    gs = get_group(cfg.group)
    mode = cfg.params["mode"]
    try:
        deltas = [float(x) for x in cfg.params["deltas"].split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --deltas: {exc}") from exc
    with timer.phase("prepare"):
        solver = prepare_weak(gs, cfg.seed) if mode == "weak" else gs
    rng = np.random.default_rng(cfg.seed)
    rows = []
    with timer.phase("factor"):
        for delta in deltas:
            for i in range(cfg.params["count"]):
                v = rng.standard_normal(gs.algebra_dim)
                z = gs.exp(v / np.linalg.norm(v) * delta)
                _, achieved = group_commutator_factor(solver, z, mode)
                rows.append((delta, i, achieved, achieved / delta**1.5))
    return csv_bytes(["delta", "index", "achieved", "ratio"], rows), "csv"


def cmd_find_relation(cfg, timer):
    p = cfg.params
    pair = _pair(cfg)
    if p["method"] == "net-newton":
        state = _levels(cfg, pair, timer)
        with timer.phase("relations"):
            curve = relation_rate_curve(pair, state)
        out = {
            "method": "NetNewton",
            "certificates": [c.to_dict() for c in curve.certificates],
            "kappa_hat": curve.kappa_hat,
            "c_hat": curve.c_hat,
            "rate_pass": curve.passed,
            "failures": curve.failures,
        }
    elif p["method"] == "commutator-power":
        if pair.group.name != "sl2r":
            raise UsageError("commutator-power relations need --group sl2r")
        try:
            ks = [int(x) for x in p["k"].split(",")]
        except ValueError as exc:
            raise UsageError(f"bad --k: {exc}") from exc
        with timer.phase("psi"):
            spec = assemble_psi(pair, seed=cfg.seed)
        certs = []
        with timer.phase("relations"):

            w, _ = anchor_word(spec)
            for k in ks:
                certs.append(find_relation_commutator_power(spec, k, w).to_dict())
        out = {"method": "CommutatorPower", "anchor_word": str(w), "certificates": certs}
    else:
        raise UsageError(f"unknown method {p['method']!r}")
    return json_bytes(out), "json"


def _parse_element(gs, spec, pair_seed):
    kind, _, arg = spec.partition(":")
    try:
        if kind == "diag":
            if gs.name != "sl2r":
                raise UsageError("diag:x is an sl2r element")
            x = float(arg)
            if x <= 0:
                raise UsageError("diag:x needs x > 0")
            return np.diag([x, 1.0 / x])
        if kind == "exp":
            c = np.array([float(v) for v in arg.split(",")])
            if c.shape != (gs.algebra_dim,):
                raise UsageError(f"exp: needs {gs.algebra_dim} coordinates")
            return gs.exp(c)
        if kind == "word":
            pair = ElementTuple(gs, random_pair(gs, pair_seed))
            return evaluate(parse(arg, 2), pair)
    except ValueError as exc:
        raise UsageError(f"bad element {spec!r}: {exc}") from exc
    raise UsageError(f"bad element {spec!r}; use diag:x, exp:c1,... or word:<letters>")


def cmd_dynamics(cfg, timer):
    gs = get_group(cfg.group)
    p = cfg.params
    g = _parse_element(gs, p["g"], cfg.pair_seed)
    rng = np.random.default_rng(p["h_seed"])
    h = gs.exp(gs.random_ball(rng, 1, p["h_radius"])[0])
    with timer.phase("dynamics"):
        rep = run_dynamics(gs, g, h, p["kmax"])
    return csv_bytes(["k", "norm", "ratio", "angle"], rep.rows()), "csv"


def cmd_affine(cfg, timer):
    p = cfg.params
    with timer.phase("affine"):
        steps = affine_relation_sequence(p["s0"], p["kmax"])
    rows = [(s.k, s.m_k, s.s_k, s.gap, s.relation_residual, s.floor_tie) for s in steps]
    return csv_bytes(["k", "m_k", "s_k", "gap", "relation_residual", "floor_tie"], rows), "csv"


def cmd_calibrate(cfg, timer):
    gs = get_group(cfg.group)
    p = cfg.params
    with timer.phase("calibrate"):
        solver = prepare_weak(gs, cfg.seed) if p["mode"] == "weak" else gs
        cal = calibrate(solver, p["mode"], samples=p["samples"], seed=cfg.seed, factor_samples=p["factor_samples"])
    return json_bytes(cal.to_dict()), "json"


HANDLERS = {
    "net": cmd_net,
    "approx": cmd_approx,
    "rate": cmd_rate,
    "factor-commutator": cmd_factor,
    "find-relation": cmd_find_relation,
    "dynamics": cmd_dynamics,
    "affine": cmd_affine,
    "calibrate": cmd_calibrate,
}


def _versions():
    return {"lieforge": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def run(cfg, stdout=None):
    """Execute one configured command; returns the manifest."""
    if cfg.command not in HANDLERS:
        raise UsageError(f"unknown command {cfg.command!r}")
    if cfg.command not in COMMAND_GROUP:
        get_group(cfg.group)
    timer = _Timer()
    data, _ = HANDLERS[cfg.command](cfg, timer)
    outputs = {}
    if cfg.out:
        d = os.path.dirname(os.path.abspath(cfg.out))
        os.makedirs(d, exist_ok=True)
        with open(cfg.out, "wb") as fh:
            fh.write(data)
        outputs[cfg.out] = hashlib.sha256(data).hexdigest()
    else:
        (stdout or sys.stdout.buffer).write(data)
    manifest = RunManifest(asdict(cfg), _versions(), timer.phases, outputs)
    if cfg.out:
        with open(cfg.out + ".manifest.json", "wb") as fh:
            fh.write(manifest.to_bytes())
    return manifest


def main(argv=None):
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
        run(cfg)
    except LieForgeError as exc:
        print(f"lieforge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

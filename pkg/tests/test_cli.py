import csv
import hashlib
import io
import json

import pytest

from lieforge.cli import main, parse_config, read_config_file, run
from lieforge.errors import UsageError


def _run(argv, tmp_path, name="out.csv"):
    out = tmp_path / name
    assert main(argv + ["--out", str(out), "--cache-dir", str(tmp_path / "cache")]) == 0
    return out


def test_affine_rows(tmp_path):
    out = _run(["affine", "--s0", "0.3", "--kmax", "3"], tmp_path)
    rows = list(csv.reader(io.StringIO(out.read_text())))
    body = rows[1:]
    assert [(r[0], r[1]) for r in body] == [("1", "3"), ("2", "11"), ("3", "37")]
    assert [round(float(r[2]), 6) for r in body] == [0.333333, 0.301511, 0.3001]
    assert b"\r\n" not in out.read_bytes()


def test_manifest_digest(tmp_path):
    out = _run(["affine", "--kmax", "5"], tmp_path)
    man = json.loads((tmp_path / "out.csv.manifest.json").read_text())
    assert man["outputs"][str(out)] == hashlib.sha256(out.read_bytes()).hexdigest()
    assert man["config"]["command"] == "affine"
    assert {"numpy", "scipy", "lieforge"} <= set(man["versions"])


def test_exit_codes(tmp_path, capsys):
    assert main(["rate", "--levels", "1"]) == 2
    assert main(["no-such-command"]) == 2
    assert main(["affine", "--s0", "1.5"]) == 2
    assert main(["net", "--group", "nope"]) == 2


def test_config_merge(tmp_path, monkeypatch):
    monkeypatch.delenv("LIEFORGE_CACHE", raising=False)
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("# sweep\nmax-len = 6\nsamples = 500\ngroup = so3\n")
    cfg = parse_config(["net", "--config", str(cfgfile), "--max-len", "7"])
    assert cfg.group == "so3" and cfg.params["max_len"] == 7 and cfg.params["samples"] == 500
    assert parse_config(["dynamics"]).group == "sl2r"
    assert parse_config(["affine"]).group == "aff1"


def test_config_rejects_unknown_key(tmp_path):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("max_len = 6\nfoo = 1\n")
    with pytest.raises(UsageError, match=":2: unknown key"):
        read_config_file(str(cfgfile), "net")
    cfgfile.write_text("max_len six\n")
    with pytest.raises(UsageError):
        read_config_file(str(cfgfile), "net")


def test_env_cache_override(tmp_path, monkeypatch):
    monkeypatch.setenv("LIEFORGE_CACHE", str(tmp_path / "envcache"))
    cfg = parse_config(["net", "--cache-dir", str(tmp_path / "flag")])
    assert cfg.cache_dir == str(tmp_path / "envcache")


@pytest.mark.parametrize(
    "argv",
    [
        ["net", "--group", "so3", "--max-len", "5", "--samples", "300"],
        ["approx", "--group", "so3", "--max-len", "9", "--samples", "500", "--levels", "2", "--target", "random:5", "--calib-samples", "300", "--measure-count", "20"],
        ["factor-commutator", "--deltas", "0.1,0.01", "--count", "3"],
        ["affine", "--kmax", "10"],
    ],
)
def test_deterministic_bytes(argv, tmp_path, monkeypatch):
    monkeypatch.delenv("LIEFORGE_CACHE", raising=False)
    a = _run(argv, tmp_path, "a.out").read_bytes()
    b = _run(argv, tmp_path, "b.out").read_bytes()
    assert a == b and len(a) > 0


def test_stdout_output(tmp_path):
    buf = io.BytesIO()
    man = run(parse_config(["affine", "--kmax", "2"]), stdout=buf)
    assert buf.getvalue().startswith(b"k,")
    assert man.outputs == {}

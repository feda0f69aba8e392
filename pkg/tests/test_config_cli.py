import json
import subprocess
import sys
from pathlib import Path

import pytest

from quasiwalk.cli import EXIT_CAPACITY, EXIT_CHECK, EXIT_CONFIG, EXIT_OK, main
from quasiwalk.config import ConfigFieldError, apply_overrides, load_config, parse_config, require

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
BASE = {
    "group": {"kind": "free", "generators": ["a", "b"]},
    "measure": {"type": "simple-random-walk"},
    "quasimorphism": {"type": "brooks", "word": "a b"},
    "seed": 3,
}


def write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


def run(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_parse_defaults():
    cfg = parse_config(BASE)
    assert cfg.mode == "exact" and cfg.seed == 3 and cfg.output_dir == "out"
    G, mu, phi = cfg.build()
    assert G.rank == 2 and len(mu) == 4 and phi(G.parse("a b")) == 1


@pytest.mark.parametrize("patch,field", [
    ({"seed": -1}, "seed"),
    ({"seed": "x"}, "seed"),
    ({"mode": "fast"}, "mode"),
    ({"tau": 2}, "tau"),
    ({"bogus": 1}, "bogus"),
    ({"clt": 5}, "clt"),
])
def test_field_errors(patch, field):
    with pytest.raises(ConfigFieldError) as e:
        parse_config({**BASE, **patch})
    assert e.value.where == field


def test_bad_group_is_field_error():
    cfg = parse_config({**BASE, "quasimorphism": {"type": "brooks", "word": "a c"}})
    with pytest.raises(ConfigFieldError) as e:
        cfg.build()
    assert e.value.where == "quasimorphism"


def test_overrides():
    raw = apply_overrides(BASE, ["clt.n=128", "seed=9", "measure.type=simple-random-walk", "clt.tag=abc"])
    assert raw["clt"] == {"n": 128, "tag": "abc"} and raw["seed"] == 9
    assert "clt" not in BASE
    with pytest.raises(ConfigFieldError):
        apply_overrides(BASE, ["seed"])
    with pytest.raises(ConfigFieldError):
        apply_overrides(BASE, ["seed.x=1"])


def test_hash_ignores_outputs_and_threads():
    a = parse_config({**BASE, "outputs": {"dir": "x"}})
    b = parse_config({**BASE, "outputs": {"dir": "y"}, "threads": 4})
    c = parse_config({**BASE, "seed": 4})
    assert a.hash == b.hash != c.hash


def test_require():
    sec = {"n": 5, "x": 1}
    assert require(sec, "s", "n") == 5
    assert require(sec, "s", "x", float) == 1.0
    assert require(sec, "s", "m", int, 7) == 7
    with pytest.raises(ConfigFieldError, match="s.m"):
        require(sec, "s", "m")
    with pytest.raises(ConfigFieldError, match="s.n"):
        require(sec, "s", "n", int, minimum=10)


def test_json_syntax_error_reports_position(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seed": 1,\n  oops\n}')
    with pytest.raises(ConfigFieldError, match="line 3"):
        load_config(p)
    code, _, err = run(["walk", "--config", str(p)], capsys)
    assert code == EXIT_CONFIG and "line 3" in json.loads(err)["field"]


def test_unknown_subcommand(capsys):
    code, _, err = run(["dance", "--config", "x.json"], capsys)
    assert code == EXIT_CONFIG
    assert json.loads(err)["error"] == "usage"


def test_walk_outputs(tmp_path, capsys):
    cfg = write(tmp_path, {**BASE, "walk": {"n": 20, "trials": 3}})
    code, out, _ = run(["walk", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == EXIT_OK
    summary = json.loads(out)
    lines = (tmp_path / "o" / "walk.csv").read_text().splitlines()
    assert lines[0] == f"# config_hash={summary['config_hash']} seed=3"
    assert lines[1] == "trial,z,phi_zn" and len(lines) == 5


def test_harmonic_outputs(tmp_path, capsys):
    cfg = write(tmp_path, {**BASE, "harmonic": {"N": 4, "radius": 1}})
    code, out, _ = run(["harmonic", "--config", cfg, "--out", str(tmp_path), "--check"], capsys)
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "harmonic.json").read_text())
    assert rep["identity_gap"] <= 1e-9 and len(rep["residuals"]) == 5
    assert json.loads(out)["checks"] == {"identity": True, "right_bound": True}
    rows = (tmp_path / "harmonic.csv").read_text().splitlines()
    assert rows[1] == "g,phi_tilde,se" and rows[2].startswith("e,0")


def test_capacity_exit(tmp_path, capsys):
    cfg = write(tmp_path, {**BASE, "harmonic": {"N": 4, "radius": 30}})
    code, _, err = run(["harmonic", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == EXIT_CAPACITY and json.loads(err)["error"] == "capacity"


def test_failed_gate_exit(tmp_path, capsys):
    cfg = write(tmp_path, {**BASE, "clt": {"n": 64, "trials": 200, "check": {"sigma_range": [5, 6]}}})
    argv = ["clt", "--config", cfg, "--out", str(tmp_path)]
    assert run(argv, capsys)[0] == EXIT_OK
    code, _, err = run(argv + ["--check"], capsys)
    assert code == EXIT_CHECK and json.loads(err)["failed"] == ["sigma_range"]


def test_bad_seed_flag(tmp_path, capsys):
    cfg = write(tmp_path, BASE)
    code, _, err = run(["walk", "--config", cfg, "--seed", "-2"], capsys)
    assert code == EXIT_CONFIG and json.loads(err)["field"] == "seed"


def test_clt_thread_determinism(tmp_path, capsys):
    cfg = write(tmp_path, {**BASE, "clt": {"n": 128, "trials": 600}})
    texts = []
    for t in (1, 3):
        d = tmp_path / f"t{t}"
        assert run(["clt", "--config", cfg, "--out", str(d), "--threads", str(t)], capsys)[0] == EXIT_OK
        texts.append((d / "clt_samples.csv").read_bytes())
    assert texts[0] == texts[1]


def test_shipped_configs_parse():
    for p in sorted(CONFIGS.glob("*.json")):
        load_config(p).build()


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, {**BASE, "walk": {"n": 8, "trials": 2}})
    r = subprocess.run([sys.executable, "-m", "quasiwalk.cli", "walk", "--config", cfg, "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["subcommand"] == "walk"

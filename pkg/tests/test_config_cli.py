import json
import math
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knlab import cli, config
from knlab import experiments as E
from knlab.errors import ConfigError, FocalPointError

SMALL = """
seed = 2
output = "out"

[[families]]
family = "highest_weight"

[[families]]
family = "torus_wave"

[[experiments]]
name = "delta-table"

[[experiments]]
name = "verify-estimate-1"
family = "torus_wave"
k_range = [8, 12, 16, 24, 32]
"""


def test_round_trip_lossless():
    cfg = config.loads(SMALL)
    again = config.loads(cfg.to_toml())
    assert again == cfg
    assert again.to_toml() == cfg.to_toml()


def test_round_trip_infinite_exponent():
    cfg = config.loads(SMALL + '\n[[experiments]]\nname = "delta-table"\np = [2.0, inf]\n')
    assert config.loads(cfg.to_toml()).experiments[-1]["p"][-1] == math.inf


@given(seed=st.integers(0, 10 ** 6), scale=st.floats(0.5, 4.0))
@settings(max_examples=25)
def test_round_trip_property(seed, scale):
    cfg = config.loads(SMALL).with_overrides(seed=seed, resolution_scale=scale)
    assert config.loads(cfg.to_toml()) == cfg


def test_unknown_top_key_reports_line():
    with pytest.raises(ConfigError) as info:
        config.loads("seed = 1\nbogus = 3\n")
    assert info.value.key == "bogus" and info.value.line == 2


def test_unknown_parameter_reports_line():
    text = SMALL + "\n[[experiments]]\nname = \"kn-maximal\"\nfamily = \"torus_wave\"\nfoo = 1\n"
    with pytest.raises(ConfigError) as info:
        config.loads(text)
    assert info.value.key == "foo"
    assert text.splitlines()[info.value.line - 1].startswith("foo")


def test_unknown_experiment_and_family():
    with pytest.raises(ConfigError):
        config.loads('[[experiments]]\nname = "nope"\n')
    with pytest.raises(ConfigError):
        config.loads('[[experiments]]\nname = "kn-maximal"\nfamily = "zonal"\n')


def test_malformed_toml():
    with pytest.raises(ConfigError) as info:
        config.loads("seed = = 1\n")
    assert info.value.line == 1


def test_hash_ignores_output_and_jobs():
    cfg = config.loads(SMALL)
    h = cfg.config_hash()
    assert cfg.with_overrides(output="elsewhere", jobs=4).config_hash() == h
    assert cfg.with_overrides(seed=3).config_hash() != h
    assert cfg.with_overrides(resolution_scale=2.0).config_hash() != h
    explicit = config.loads(SMALL.replace('name = "delta-table"',
                                          'name = "delta-table"\np = [2.0, 3.0, 4.0, 6.0, 8.0, inf]'))
    assert explicit.config_hash() == h


def test_random_family_default_seeds():
    cfg = config.loads('seed = 10\n[[families]]\nfamily = "random_harmonic"\n')
    assert cfg.family_specs()["random_harmonic"].seeds == tuple(range(11, 19))


def test_run_writes_artifacts(tmp_path):
    cfg = config.loads(SMALL).with_overrides(output=str(tmp_path))
    assert cli.run(cfg) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert "manifest.json" in names and "00-delta-table.csv" in names
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config_hash"] == cfg.config_hash()
    assert [e["verdict"] for e in manifest["experiments"]] == ["PASS", "PASS"]
    text = (tmp_path / "00-delta-table.csv").read_bytes()
    assert b"\r" not in text and text.startswith(b"experiment,family,k,lambda")


def test_empty_experiment_list(tmp_path):
    cfg = config.loads("seed = 0\n").with_overrides(output=str(tmp_path))
    assert cli.run(cfg) == 0
    assert [p.name for p in tmp_path.iterdir()] == ["manifest.json"]


def test_reruns_byte_identical(tmp_path):
    cfg = config.loads(SMALL)
    for d in ("a", "b"):
        E.clear_caches()
        cli.run(cfg.with_overrides(output=str(tmp_path / d)))
    for f in sorted((tmp_path / "a").glob("*.csv")):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_numerical_error_exit_code(tmp_path, monkeypatch):
    def boom(params, ctx):
        raise FocalPointError("half width beyond focal bound")

    monkeypatch.setitem(E.EXPERIMENTS, "delta-table",
                        E.ExperimentDef("delta-table", boom, {"p": [2.0]}, ""))
    cfg = config.loads(SMALL).with_overrides(output=str(tmp_path))
    assert cli.run(cfg) == 3
    failed = json.loads((tmp_path / "FAILED").read_text())
    assert failed["experiment"] == "delta-table" and failed["error"] == "FocalPointError"
    assert (tmp_path / "manifest.json").exists()


def test_main_invalid_config(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("seed = 0\nwhat = 1\n")
    assert cli.main(["run", str(p)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_main_env_override(tmp_path, monkeypatch):
    p = tmp_path / "c.toml"
    p.write_text(SMALL)
    monkeypatch.setenv("KNLAB_OUT", str(tmp_path / "env"))
    assert cli.main(["run", str(p), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()
    assert not (tmp_path / "flag").exists()


def test_list_and_delta_table(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    names = [line.split(":")[0] for line in out.splitlines() if not line.startswith(" ")]
    assert names == sorted(names)
    assert "verify-theorem1" in names and "kn-maximal" in names
    assert cli.main(["delta-table"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "p,delta,exact" and rows[-1] == "inf,0.5,1/2"


def test_kn_subcommand(capsys):
    assert cli.main(["kn", "torus_wave", "5"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["kn"] == pytest.approx(2 * res["lambda"] ** -0.5 / (4 * math.pi ** 2), abs=1e-9)


def test_default_config_is_valid():
    cfg = config.load(Path(__file__).parents[1] / "configs" / "default.toml")
    assert len(cfg.experiments) >= 14

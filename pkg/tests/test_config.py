import numpy as np
import pytest

from bandkrotov.config import (ConfigError, deep_merge, describe, env_overrides, load_config,
                               transition_table)
from conftest import CONFIGS


def test_deep_merge():
    base = {"a": {"b": 1, "c": [1, 2]}, "d": 3}
    out = deep_merge(base, {"a": {"c": [9]}, "e": 4})
    assert out == {"a": {"b": 1, "c": [9]}, "d": 3, "e": 4}
    assert base["a"]["c"] == [1, 2]


@pytest.mark.parametrize("name", ["cnot.yaml", "not.yaml", "two_level.yaml",
                                  "transfer_allpass.yaml", "transfer_banded.yaml"])
def test_packaged_configs_validate(name):
    cfg = load_config(CONFIGS / name, environ={})
    prob = cfg.build()
    assert prob.grid.n_steps > 0


def test_profiles_change_the_problem():
    full = load_config(CONFIGS / "cnot.yaml", profile="full", environ={}).build()
    desk = load_config(CONFIGS / "cnot.yaml", profile="desk", environ={}).build()
    ci = load_config(CONFIGS / "cnot.yaml", profile="ci", environ={}).build()
    assert full.system.dimension == desk.system.dimension == 50
    assert ci.system.dimension == 16
    assert full.guess[0].carrier_cm - full.guess[1].carrier_cm == pytest.approx(3008)
    assert desk.guess[0].carrier_cm - desk.guess[1].carrier_cm == pytest.approx(3008)
    assert full.grid.dt < desk.grid.dt
    assert ci.grid.T < desk.grid.T


def test_desk_transition_table():
    prob = load_config(CONFIGS / "cnot.yaml", environ={}).build()
    table = dict(transition_table(prob))
    assert table["00->01"] == pytest.approx(3030.0)
    assert table["10->11"] == pytest.approx(3008.0)
    assert "3008.000" in describe(prob)


def test_env_overrides():
    env = {"BANDKROTOV_PROFILE": "ci", "BANDKROTOV_THREADS": "3", "BANDKROTOV_SEED": "42",
           "BANDKROTOV_OUTPUT_DIR": "/tmp/x"}
    assert env_overrides(env) == {"profile": "ci", "threads": 3, "seed": 42, "output_dir": "/tmp/x"}
    cfg = load_config(CONFIGS / "cnot.yaml", environ=env)
    assert cfg.profile == "ci" and cfg.threads == 3 and cfg.seed == 42
    assert str(cfg.output_dir) == "/tmp/x"
    # explicit arguments beat the environment
    cfg = load_config(CONFIGS / "cnot.yaml", environ=env, profile="desk", threads=1)
    assert cfg.profile == "desk" and cfg.threads == 1
    with pytest.raises(ConfigError):
        env_overrides({"BANDKROTOV_THREADS": "many"})


def test_hash_ignores_threads_and_output():
    a = load_config(CONFIGS / "two_level.yaml", threads=1, output_dir="a", environ={})
    b = load_config(CONFIGS / "two_level.yaml", threads=8, output_dir="b", environ={})
    c = load_config(CONFIGS / "two_level.yaml", seed=5, environ={})
    assert a.hash() == b.hash() != c.hash()


def test_schema_version_required(write_config):
    with pytest.raises(ConfigError):
        load_config(write_config({"system": {}}), environ={})


def test_coarse_dt_rejected_and_overridable(write_config):
    path = write_config(base="two_level.yaml", grid={"T_fs": 500, "dt_au": 100.0})
    with pytest.raises(ConfigError, match="resolve"):
        load_config(path, environ={})
    path = write_config(base="two_level.yaml", grid={"T_fs": 500, "dt_au": 100.0,
                                                      "allow_coarse_dt": True})
    load_config(path, environ={})


def test_carrier_above_nyquist(write_config):
    path = write_config(base="two_level.yaml", grid={"T_fs": 500, "dt_au": 400.0,
                                                      "allow_coarse_dt": True})
    with pytest.raises(ConfigError, match="Nyquist"):
        load_config(path, environ={})


def test_window_must_hold_carrier(write_config):
    path = write_config(base="cnot.yaml", profile="ci")
    cfg = load_config(path, environ={})
    doc = cfg.raw
    doc["filters"][0]["windows"] = [[100.0, 200.0]]
    with pytest.raises(ConfigError, match="outside its pass window"):
        load_config(write_config(doc, name="bad.yaml"), environ={})


def test_bad_sections(write_config):
    base = {"schema_version": 1, "system": {"kind": "dipole", "energies_cm": [0, 1000],
                                            "dipole": [[0, 1], [1, 0]]},
            "targets": {"pairs": [[0, 1]]}, "grid": {"T_fs": 100, "dt_au": 5.0},
            "fields": [{"carrier_cm": 1000, "amplitude": 0.01, "fwhm_fs": 30}]}
    load_config(write_config(base), environ={})
    for key, val, msg in [
        ("system", {"kind": "banana"}, "unknown system"),
        ("targets", {"gate": "CNOT"}, "qubit"),
        ("grid", {"T_fs": 100}, "n_steps"),
        ("fields", [], "guess"),
        ("krotov", {"alpha0": -1}, "alpha0"),
        ("krotov", {"alpha": 1}, "unknown krotov"),
        ("filters", [{"windows": [[2000, 1000]]}], "bad filter"),
        ("profile", "cluster", "profile"),
    ]:
        doc = dict(base)
        doc[key] = val
        with pytest.raises(ConfigError, match=msg):
            load_config(write_config(doc, name=f"{key}.yaml"), environ={})


def test_invalid_yaml(tmp_path):
    p = tmp_path / "x.yaml"
    p.write_text("a: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(p, environ={})


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_config("/nonexistent/config.yaml", environ={})


def test_seeded_guess_noise(write_config):
    path = write_config(base="two_level.yaml", guess_noise=0.01)
    a = load_config(path, seed=1, environ={}).build().guess[0].samples
    b = load_config(path, seed=1, environ={}).build().guess[0].samples
    c = load_config(path, seed=2, environ={}).build().guess[0].samples
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_qubit_guard_from_config(write_config):
    path = write_config(base="cnot.yaml", profile="ci")
    doc = load_config(path, environ={}).raw
    doc["system"]["params"].update({"nu1": 3000.0, "nu2": 3000.0, "d12": 0.0})
    with pytest.raises(ConfigError, match="closer"):
        load_config(write_config(doc, name="guard.yaml"), environ={})

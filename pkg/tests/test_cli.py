import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from bandkrotov.cli import main
from bandkrotov.config import load_config
from bandkrotov.core import ControlField, cm_to_au, fs_to_au
from bandkrotov.io import read_csv, read_fields, write_fields
from bandkrotov.spectral import out_of_band_fraction
from conftest import CONFIGS


def _ci_cnot(iters):
    doc = yaml.safe_load((CONFIGS / "cnot.yaml").read_text())
    doc["profile"] = "ci"
    doc["profiles"]["ci"]["krotov"]["max_iters"] = iters
    return doc


def test_identity_zero_guess_converges_immediately(write_config, tmp_path):
    doc = _ci_cnot(50)
    doc["targets"] = {"gate": "Identity"}
    doc["profiles"]["ci"]["krotov"]["yield_target"] = 0.999
    for f in doc["fields"] + doc["profiles"]["ci"]["fields"]:
        f["amplitude"] = 0.0
    out = tmp_path / "out"
    assert main(["optimize", "--config", str(write_config(doc)), "--output-dir", str(out)]) == 0
    for name in ("trace.csv", "fields.csv", "spectra.csv", "masks.csv", "manifest.json"):
        assert (out / name).is_file()
    man = json.loads((out / "manifest.json").read_text())
    assert man["iterations"] == 0 and man["converged"]
    assert man["final_yield_sum_sq"] == pytest.approx(4.0, abs=1e-9)
    assert read_csv(out / "trace.csv")["iter"].tolist() == [0.0]


@pytest.fixture(scope="module")
def two_level_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("two_level")
    code = main(["optimize", "--config", str(CONFIGS / "two_level.yaml"), "--output-dir", str(out)])
    return code, out


def test_two_level_optimize(two_level_run):
    code, out = two_level_run
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["final_avg_fidelity"] > 0.99 and man["iterations"] <= 100
    assert man["termination_reason"] == "yield_target"
    trace = read_csv(out / "trace.csv")
    assert np.all(np.diff(trace["yield_sum_sq"]) > 0)
    assert trace["monotone"].all()


def test_propagate_replays_yield(two_level_run, tmp_path):
    _, out = two_level_run
    man = json.loads((out / "manifest.json").read_text())
    rep = tmp_path / "rep"
    assert main(["propagate", "--config", str(CONFIGS / "two_level.yaml"),
                 "--fields", str(out / "fields.csv"), "--output-dir", str(rep)]) == 0
    summary = json.loads((rep / "propagate.json").read_text())
    assert summary["yield_sum_sq"] == pytest.approx(man["final_yield_sum_sq"], abs=1e-6)
    assert summary["config_hash"] == man["config_hash"]
    pops = read_csv(rep / "populations.csv")
    assert pops["p_0->1_1"][-1] == pytest.approx(man["final_yield_sum_sq"], abs=1e-6)


def test_propagate_zero_fields_constant(tmp_path):
    prob = load_config(CONFIGS / "two_level.yaml", environ={}).build()
    path = tmp_path / "zero.csv"
    write_fields(path, prob.grid, [ControlField(np.zeros(prob.grid.n_nodes))])
    assert main(["propagate", "--config", str(CONFIGS / "two_level.yaml"), "--fields", str(path),
                 "--output-dir", str(tmp_path)]) == 0
    pops = read_csv(tmp_path / "populations.csv")
    assert np.max(np.abs(pops["p_0->1_0"] - 1.0)) < 1e-12
    assert np.max(np.abs(pops["p_0->1_1"])) < 1e-12


def test_propagate_out_of_band_injection(write_config, tmp_path):
    cfg_path = write_config(_ci_cnot(5))
    out = tmp_path / "opt"
    main(["optimize", "--config", str(cfg_path), "--output-dir", str(out)])
    prob = load_config(cfg_path, environ={}).build()
    _, (e1, e2) = read_fields(out / "fields.csv", prob.grid)
    clean = tmp_path / "clean"
    main(["propagate", "--config", str(cfg_path), "--fields", str(out / "fields.csv"),
          "--output-dir", str(clean)])
    # resonant out-of-band tone on field 2 at the 00->01 line
    bad = e2 + 0.02 * np.cos(cm_to_au(3030.0) * prob.grid.t)
    path = tmp_path / "bad.csv"
    write_fields(path, prob.grid, [ControlField(e1), ControlField(bad)])
    dirty = tmp_path / "dirty"
    assert main(["propagate", "--config", str(cfg_path), "--fields", str(path),
                 "--output-dir", str(dirty)]) == 0
    a = json.loads((clean / "propagate.json").read_text())
    b = json.loads((dirty / "propagate.json").read_text())
    assert b["yield_sum_sq"] < a["yield_sum_sq"]
    expect = out_of_band_fraction(bad, prob.filters[1])
    assert b["out_of_band_fraction"][1] == pytest.approx(expect, abs=1e-6)
    assert expect > 0.1 and a["out_of_band_fraction"][1] < 1e-6


def test_non_monotone_exit_code(write_config, tmp_path):
    doc = yaml.safe_load((CONFIGS / "two_level.yaml").read_text())
    doc["krotov"].update(alpha0=0.05, max_iters=10)
    out = tmp_path / "nm"
    assert main(["optimize", "--config", str(write_config(doc)), "--output-dir", str(out)]) == 3
    trace = read_csv(out / "trace.csv")
    assert not trace["monotone"][-1]


def test_check_prints_transitions(capsys):
    assert main(["check", "--config", str(CONFIGS / "cnot.yaml")]) == 0
    text = capsys.readouterr().out
    assert "3030.000" in text and "3008.000" in text and "config OK" in text


def test_check_exit_codes(write_config, capsys):
    doc = yaml.safe_load((CONFIGS / "two_level.yaml").read_text())
    doc["grid"] = {"T_fs": 500, "dt_au": 100.0}
    assert main(["check", "--config", str(write_config(doc))]) == 64
    assert main(["check", "--config", "/nonexistent.yaml"]) == 66


def test_spectrum_single_cosine(tmp_path):
    prob = load_config(CONFIGS / "two_level.yaml", environ={}).build()
    grid = prob.grid
    env = np.exp(-4 * np.log(2) * ((grid.t - grid.T / 2) / fs_to_au(100)) ** 2)
    x = env * np.cos(cm_to_au(12500.0) * grid.t)
    path = tmp_path / "f.csv"
    write_fields(path, grid, [ControlField(x)])
    assert main(["spectrum", "--fields", str(path)]) == 0
    spec = read_csv(tmp_path / "spectra.csv")
    om, P = spec["omega_cm"], spec["power_1"]
    assert abs(om[np.argmax(P)] - 12500.0) <= om[1] - om[0]
    # a single spectral feature
    strong = P > 1e-2 * P.max()
    assert np.count_nonzero(np.diff(strong.astype(int)) == 1) == 1


def test_spectrum_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    assert main(["spectrum", "--fields", str(p)]) == 65


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "bandkrotov", "--version"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and r.stdout.strip()

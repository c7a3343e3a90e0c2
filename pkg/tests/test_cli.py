import json
from pathlib import Path
import math

import numpy as np
import pytest
import yaml

from waveplate.cli import main
from waveplate.report import sha256


def write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), np.array([[float(v) for v in l.split(",")] for l in lines[1:]])


SIM = {"kind": "simulate", "seed": 0,
       "problem": {"length": "pi", "n": 60, "c0": 0.5, "d0": 0.0, "omega_c": [[0.5, 2.5]]},
       "experiment": {"T": 1.0, "dt": 0.01, "record_every": 10}}


def test_simulate_undamped_energy_constant(tmp_path):
    out = tmp_path / "sim"
    assert main(["run", str(write(tmp_path, SIM)), "--out", str(out)]) == 0
    head, data = read_csv(out / "decay.csv")
    E = data[:, head.index("E")]
    assert np.max(np.abs(E - E[0])) <= 1e-10 * E[0]
    svg = (out / "energy.svg").read_text()
    assert "log10" in svg


def test_manifest_hashes_every_artifact(tmp_path):
    cfg_path = write(tmp_path, SIM)
    out = tmp_path / "sim"
    assert main(["run", str(cfg_path), "--out", str(out), "--seed", "7"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 7 and man["passed"] is True
    assert man["config_sha256"] == sha256(cfg_path.read_bytes())
    files = sorted(p.name for p in out.iterdir() if p.name != "manifest.json")
    assert sorted(man["artifacts"]) == files
    for name, digest in man["artifacts"].items():
        assert sha256((out / name).read_bytes()) == digest


def test_reruns_are_byte_identical(tmp_path):
    cfg_path = write(tmp_path, SIM)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg_path), "--out", str(a)]) == 0
    assert main(["run", str(cfg_path), "--out", str(b)]) == 0
    for name in ("decay.csv", "energy.svg", "summary.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_spectrum_free_system_on_imaginary_axis(tmp_path):
    cfg = {"kind": "spectrum", "problem": {"length": "pi", "n": 40, "c0": 0.0, "d0": 0.0},
           "experiment": {"taus": [1.0, 4.0], "k": 4, "min_count": 2}}
    out = tmp_path / "eig"
    assert main(["run", str(write(tmp_path, cfg)), "--out", str(out)]) in (0, 2)
    head, data = read_csv(out / "spectrum.csv")
    re, im = data[:, head.index("re")], data[:, head.index("im")]
    assert np.max(np.abs(re)) <= 1e-8
    h = math.pi / 41
    mu = 4 / h**2 * np.sin(np.arange(1, 41) * h / 2) ** 2
    targets = np.concatenate([np.sqrt(mu), mu, -np.sqrt(mu), -mu])
    for v in im:
        assert np.min(np.abs(targets - v)) <= 1e-8 * max(1, abs(v))
    svg = (out / "spectrum.svg").read_text()
    assert "Re" in svg and "Im" in svg


@pytest.mark.parametrize("bad", [
    {"kind": "nonsense"},
    {"kind": "simulate", "problem": {"n": 2}},
    {"kind": "simulate", "problem": {"c0": "abc"}},
    {"kind": "simulate", "problem": {"n": 40}, "experiment": {"T": 1.0, "dt": 0.3}},
])
def test_malformed_config_exit_1_without_output(tmp_path, bad, capsys):
    out = tmp_path / "out"
    assert main(["run", str(write(tmp_path, bad)), "--out", str(out)]) == 1
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["run", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o")]) == 1


def test_carleman_failure_exit_2(tmp_path):
    # a stability factor below one cannot be met, so the run must report failure
    cfg = {"kind": "carleman-elliptic", "seed": 1,
           "problem": {"length": "pi", "n": 60, "c0": 0.5, "d0": 1.0,
                       "omega_c": [[0.5, 2.5]], "omega_d": [[1.0, 2.8]]},
           "experiment": {"n_seeds": 2, "s_points": 21, "mu_grid": [2], "lam_grid": [2, 4, 8, 16],
                          "eps_grid": [0.1, 1.0], "stability_factor": 0.5}}
    out = tmp_path / "c"
    assert main(["run", str(write(tmp_path, cfg)), "--out", str(out)]) == 2
    assert json.loads((out / "manifest.json").read_text())["passed"] is False


CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_run(tmp_path, path):
    out = tmp_path / path.stem
    assert main(["run", str(path), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["kind"] == yaml.safe_load(path.read_text())["kind"]

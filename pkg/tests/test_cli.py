import json
import subprocess
import sys

import pytest

from stokid import __version__
from stokid.cli import main


def run(tmp, *argv):
    return main(["--out-dir", str(tmp), *argv])


@pytest.fixture(scope="module")
def dw(tmp_path_factory):
    out = tmp_path_factory.mktemp("dw")
    assert run(out, "simulate", "--potential", "double-well", "--steps", "200000",
               "--seed", "7", "--reps", "2", "--name", "dw") == 0
    return out


@pytest.fixture(scope="module")
def lemon(tmp_path_factory):
    out = tmp_path_factory.mktemp("lemon")
    assert run(out, "simulate", "--potential", "lemon-slice", "--steps", "200000", "--dt", "1e-3",
               "--project", "polar-angle", "--name", "phi") == 0
    return out


def test_simulate_manifest(dw):
    doc = json.loads((dw / "manifest.json").read_text())
    assert doc["version"] == __version__ and doc["seed"] == 7
    assert doc["command"][0] == "--out-dir"
    assert sorted(k.rsplit("/", 1)[-1] for k in doc["outputs"]) == ["dw_0.stkj", "dw_1.stkj"]
    assert all(len(v) == 64 for v in doc["outputs"].values())


def test_rerun_from_manifest_is_byte_identical(dw, tmp_path):
    doc = json.loads((dw / "manifest.json").read_text())
    argv = list(doc["command"])
    argv[1] = str(tmp_path)
    assert main(argv) == 0
    again = json.loads((tmp_path / "manifest.json").read_text())
    strip = lambda d: {k.rsplit("/", 1)[-1]: v for k, v in d["outputs"].items()}
    assert strip(again) == strip(doc)


def test_fit_drift(dw, tmp_path):
    trajs = [str(dw / "dw_0.stkj"), str(dw / "dw_1.stkj")]
    assert run(tmp_path, "fit", "--traj", *trajs, "--dict", "theta", "--target", "drift",
               "--reps", "5", "--seed", "11") == 0
    doc = json.loads((tmp_path / "fit.json").read_text())
    assert doc["target"] == "drift" and doc["k"] == 5 and doc["reps"] == 5
    assert len(doc["delta"]) == 20
    for name in ("binned.csv", "delta.csv", "progress.csv", "curve.csv", "manifest.json"):
        assert (tmp_path / name).exists()
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert len(man["inputs"]) == 2 and len(man["outputs"]) == 5


def test_fit_then_learned_simulation(dw, tmp_path):
    traj = str(dw / "dw_0.stkj")
    dic = tmp_path / "quartic.dsl"
    dic.write_text("const; poly 1; poly 2; poly 3\n")
    fit_dir, sim_dir = tmp_path / "fit", tmp_path / "sim"
    assert run(fit_dir, "fit", "--traj", traj, "--dict", str(dic), "--target", "gradient",
               "--reps", "3") == 0
    assert run(sim_dir, "simulate", "--model", str(fit_dir / "fit.json"), "--steps", "1000",
               "--dt", "5e-3") == 0
    assert (sim_dir / "traj.stkj").exists()


def test_free_energy_fit(lemon, tmp_path):
    traj = str(lemon / "phi.stkj")
    a_dir, f_dir = tmp_path / "a", tmp_path / "f"
    assert run(a_dir, "fit", "--traj", traj, "--dict", "theta_2d", "--target", "diffusion",
               "--bins", "63", "--folds", "7", "--reps", "5") == 0
    assert run(f_dir, "fit", "--traj", traj, "--dict", "theta_2d", "--target", "free-energy",
               "--diffusion-fit", str(a_dir / "fit.json"), "--bins", "63") == 0
    doc = json.loads((f_dir / "energy.json").read_text())
    assert doc["target"] == "free_energy"
    assert (f_dir / "energy_curve.csv").read_text().startswith("x,F,dF,boltzmann")


def test_greedy_and_noise(dw, tmp_path):
    traj = str(dw / "dw_0.stkj")
    assert run(tmp_path / "g", "greedy", "--traj", traj, "--reduce", "12", "--sizes", "1:2",
               "--reps", "2") == 0
    doc = json.loads((tmp_path / "g" / "greedy.json").read_text())
    assert doc["samples"] == {"1": 12, "2": 66}
    assert run(tmp_path / "n", "noise", "--traj", traj, "--omega", "theta_prime", "--f", "1", "0",
               "--dicts", "2", "--dict-size", "8", "--reps", "2") == 0
    rows = (tmp_path / "n" / "noise.csv").read_text().splitlines()
    assert rows[0] == "f,zeta,success_percent,n_dicts" and len(rows) == 3


def test_msm(lemon, tmp_path):
    phi = str(lemon / "phi.stkj")
    assert run(tmp_path, "msm", "--traj-a", phi, "--traj-b", phi, "--lags", "1,10") == 0
    doc = json.loads((tmp_path / "msm.json").read_text())
    assert doc["max_stationary_deviation"] == 0.0
    assert (tmp_path / "timescales.csv").exists() and (tmp_path / "stationary.csv").exists()


def test_exit_codes(tmp_path, capsys):
    assert run(tmp_path, "fit", "--traj", str(tmp_path / "missing.stkj")) == 3
    assert "not found" in capsys.readouterr().err
    bad = tmp_path / "bad.dsl"
    bad.write_text("poly\n")
    (tmp_path / "t").mkdir()
    assert run(tmp_path / "t", "simulate", "--potential", "double-well", "--steps", "100",
               "--name", "x") == 0
    assert run(tmp_path, "fit", "--traj", str(tmp_path / "t" / "x.stkj"), "--dict", str(bad)) == 3
    assert run(tmp_path, "fit", "--traj", str(tmp_path / "t" / "x.stkj"), "--dict", "nope") == 3
    steep = tmp_path / "steep.json"
    steep.write_text(json.dumps({"schema_version": 1, "dictionary_source": "poly 6",
                                 "dictionary": "steep", "target": "drift", "n_selected": 1,
                                 "coefficients": [{"index": 0, "name": "poly 6", "value": 1.0}]}))
    assert run(tmp_path, "simulate", "--model", str(steep), "--steps", "100", "--dt", "0.1",
               "--initial", "5", "--burn-in", "0") == 4
    with pytest.raises(SystemExit) as err:
        run(tmp_path, "fit")
    assert err.value.code == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "stokid", "--version"], capture_output=True,
                         text=True, check=True)
    assert __version__ in out.stdout

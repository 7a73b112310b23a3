import json
import math

import numpy as np
import pytest

from implosion import io
from implosion.cli import EXIT, main


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = write_cfg(out / "cfg.json", {"simulate": {"n": 200, "Z_out": 10.0, "tau_end": 0.5}})
    assert main(["profile", "--config", cfg, "--out", str(out)]) == 0
    return out, cfg


# ---------------------------------------------------------------- file formats

def test_json_round_trip(tmp_path):
    payload = {"a": np.float64(1.5), "b": [np.int64(2), float("nan")], "c": {"x": np.arange(3)}}
    io.write_json(tmp_path / "x.json", payload, "abc")
    back = io.read_json(tmp_path / "x.json")
    assert back["a"] == 1.5 and back["b"] == [2, None] and back["c"]["x"] == [0, 1, 2]
    assert back["schema_version"] == io.SCHEMA_VERSION and back["config_hash"] == "abc"


def test_csv_round_trip_is_exact(tmp_path, rng):
    cols = {"x": rng.normal(size=50), "y": rng.uniform(size=50)}
    io.write_csv(tmp_path / "x.csv", ["x", "y"], cols, "abc")
    meta, back = io.read_csv(tmp_path / "x.csv")
    assert meta["config_hash"] == "abc"
    assert np.array_equal(back["x"], cols["x"]) and np.array_equal(back["y"], cols["y"])


@pytest.mark.parametrize("body", ["x,y\n1,2\n", "# config_hash=a artifact_version=0\nx,y\n1\n",
                                  "# config_hash=a artifact_version=0\nx,y\n1,foo\n",
                                  "# config_hash=a artifact_version=0\nx,y\n1,nan\n"])
def test_corrupt_csv(tmp_path, body):
    (tmp_path / "x.csv").write_text(body)
    with pytest.raises(io.CorruptFile):
        io.read_csv(tmp_path / "x.csv")


def test_config_hash_is_canonical():
    assert io.config_hash({"a": 1, "b": [1, 2]}) == io.config_hash({"b": [1, 2], "a": 1})
    assert io.config_hash({"a": 1}) != io.config_hash({"a": 2})


# ---------------------------------------------------------------- pipeline

def test_profile_outputs(run_dir):
    out, _ = run_dir
    meta = io.read_json(out / "profile.json")
    _, cols = io.read_csv(out / "profile.csv")
    assert abs(meta["r"] - 1.1435173) < 1e-6
    assert np.all(np.diff(cols["Z"]) > 0) and np.all(cols["rho_P"] > 0)
    assert meta["rows"] == len(cols["Z"])
    _, damp = io.read_csv(out / "dampened.csv")
    assert np.all(damp["rho_D"] > 0)


def test_profile_is_deterministic(run_dir, tmp_path):
    out, cfg = run_dir
    assert main(["profile", "--config", cfg, "--out", str(tmp_path)]) == 0
    for name in ("profile.csv", "profile.json", "dampened.csv"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes(), name


def test_verify(run_dir):
    out, cfg = run_dir
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    doc = io.read_json(out / "repulsivity.json")
    assert all(v > 0 for k, v in doc["margins"].items() if k in ("inside_1", "inside_2", "outside_1",
                                                                  "outside_o"))
    assert max(doc["halving_change"].values()) < 1e-4


def test_spectrum(run_dir):
    out, cfg = run_dir
    assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    doc = io.read_json(out / "spectrum.json")
    assert doc["consistent"] is True
    assert abs(doc["lambda_max"] - io.read_json(out / "profile.json")["r"]) < 1e-6
    assert doc["invariance"]["shift"] < 1e-8 and doc["invariance"]["similarity"] < 1e-8


def test_simulate(run_dir):
    out, cfg = run_dir
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    doc = io.read_json(out / "simulation.json")
    assert doc["diagnostics"]["status"] == "done"
    _, traj = io.read_csv(out / "trajectory.csv")
    assert set(traj) == {"tau", "Z", "rho_T", "u_T"}


def test_portrait(run_dir):
    out, cfg = run_dir
    assert main(["portrait", "--config", cfg, "--out", str(out)]) == 0
    doc = io.read_json(out / "portrait.json")
    assert doc["topology_matches_P2"] and doc["regime_below_r_star"]
    assert len(doc["sonic_delta1_crossings"]) == 2


def test_stationarity_exit(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", {"simulate": {"n": 200, "Z_out": 10.0, "tau_end": 0.2,
                                                       "stationarity_bound": 1e-12}})
    assert main(["profile", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == EXIT["stationarity"]
    assert io.read_json(tmp_path / "simulation.json")["stationary"] is False


# ---------------------------------------------------------------- exit codes

def test_ell_equal_d_is_a_parameter_error(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", {"params": {"d": 3, "ell": 3.0}})
    assert main(["profile", "--config", cfg, "--out", str(tmp_path)]) == EXIT["parameter"]


def test_empty_bracket(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", {"profile": {"bracket": [1.2, 1.3]}})
    assert main(["profile", "--config", cfg, "--out", str(tmp_path)]) == EXIT["no_root"]


def test_bad_config(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", {"spectrum": {"rel": -1}})
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == EXIT["config"]
    cfg = write_cfg(tmp_path / "d.json", {"nonsense": {}})
    assert main(["profile", "--config", cfg, "--out", str(tmp_path)]) == EXIT["config"]


def test_missing_input(tmp_path):
    assert main(["verify", "--out", str(tmp_path)]) == EXIT["input"]
    assert main(["profile", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == EXIT["input"]


def test_corrupted_profile_csv(run_dir, tmp_path):
    out, cfg = run_dir
    for name in ("profile.csv", "profile.json"):
        (tmp_path / name).write_bytes((out / name).read_bytes())
    lines = (tmp_path / "profile.csv").read_text().splitlines()
    lines[5] = lines[5].replace(",", ",x", 1)
    (tmp_path / "profile.csv").write_text("\n".join(lines) + "\n")
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == EXIT["input"]


@pytest.mark.slow
def test_two_dimensional_profile(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", {"params": {"d": 2, "ell": 1.5}, "profile": {"per_unit": 16}})
    assert main(["profile", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 0
    doc = io.read_json(tmp_path / "repulsivity.json")
    assert doc["verdicts"]["pass"] and not doc["verdicts"]["outside_required"]
    r = io.read_json(tmp_path / "profile.json")["r"]
    assert 1 < r < math.sqrt(2)

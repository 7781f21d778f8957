import csv
import hashlib
import json
import subprocess
import sys

import pytest

from cmvjump.cli import (
    EXIT_DIVERGED,
    EXIT_FAIL,
    EXIT_INPUT,
    EXIT_OK,
    REGIME_HEADER,
    STUDY_HEADER,
    TRAJECTORY_HEADER,
    main,
)
from cmvjump.config import ConfigErrors, config_from_dict, parse_config

SMALL_STUDY = """
[model]
name = "{name}"

[sim]
T = 1.0
dt = 0.05
n_grid = [2, 4, 8]
N_ref = 32
R = 4
"""


def write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_defaults_are_filled(tmp_path):
    cfg = parse_config(write(tmp_path, "[sim]\nT = 2.0\n"))
    assert cfg.sim.dt == pytest.approx(0.002)
    assert cfg.sim.N_ref == 2048 and cfg.sim.R == 64
    assert cfg.model.name == "systemic_risk"
    assert config_from_dict({}).sim.dt == pytest.approx(1e-3)


def test_zero_step_is_rejected_with_key_path(tmp_path):
    with pytest.raises(ConfigErrors) as exc:
        parse_config(write(tmp_path, "[sim]\ndt = 0.0\n"))
    assert any(p.startswith("sim.dt") for p in exc.value.problems)


def test_unknown_key_is_named(tmp_path):
    with pytest.raises(ConfigErrors) as exc:
        parse_config(write(tmp_path, "[sim]\nfoo = 1\n"))
    assert "sim.foo: unknown key" in exc.value.problems


def test_all_violations_are_listed():
    with pytest.raises(ConfigErrors) as exc:
        config_from_dict({"sim": {"dt": -1.0, "R": 0, "bar": 2}, "seeds": {"common": "0xzz"}})
    keys = {p.split(":")[0] for p in exc.value.problems}
    assert {"sim.dt", "sim.R", "sim.bar", "seeds.common"} <= keys


def test_missing_and_malformed_files(tmp_path, capsys):
    with pytest.raises(ConfigErrors, match="not found"):
        parse_config(tmp_path / "nope.toml")
    with pytest.raises(ConfigErrors):
        parse_config(write(tmp_path, "[sim\n"))
    assert main(["simulate", "--config", str(tmp_path / "nope.toml")]) == EXIT_INPUT
    assert "not found" in capsys.readouterr().err


def test_study_on_zero_model(tmp_path):
    out = tmp_path / "out"
    cfg_text = SMALL_STUDY.format(name="zero").replace('name = "zero"', 'name = "zero"\nx0_std = 0.0')
    cfg = write(tmp_path, cfg_text)
    assert main(["study", "--config", cfg, "--out-dir", str(out)]) == EXIT_OK
    rows = read_csv(out / "study.csv")
    assert rows[0] == STUDY_HEADER
    assert [r[0] for r in rows[1:]] == ["2", "4", "8"]
    assert all(float(v) == 0.0 for r in rows[1:] for v in r[2:])
    summary = json.loads((out / "summary.json").read_text())
    assert summary["slope_w2"]["applicable"] is False
    assert summary["config"]["model"]["name"] == "zero"


def test_validate_halved_constant_fails(tmp_path, capsys):
    cfg = write(tmp_path, '[model]\nname = "systemic_risk"\nK = 1.0\nK0 = 1.0\n\n[validate]\nsamples = 300\n')
    out = tmp_path / "v"
    assert main(["validate", "--config", cfg, "--out-dir", str(out)]) == EXIT_FAIL
    assert "FAIL lipschitz" in capsys.readouterr().err
    summary = json.loads((out / "summary.json").read_text())
    assert summary["failed"] == ["lipschitz"]


def test_validate_passes_with_derived_constants(tmp_path):
    cfg = write(tmp_path, "[validate]\nsamples = 300\n")
    assert main(["validate", "--config", cfg, "--out-dir", str(tmp_path / "v")]) == EXIT_OK


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_replay_is_byte_identical(tmp_path):
    cfg = write(tmp_path, SMALL_STUDY.format(name="systemic_risk"))
    out = tmp_path / "a"
    assert main(["study", "--config", cfg, "--out-dir", str(out), "--seed-common", "0x2a", "--seed-idio", "7"]) == 0
    first = {name: (out / name).read_bytes() for name in ("study.csv", "summary.json")}
    manifest = json.loads((out / "manifest.json").read_text())
    for name, digest in manifest["files"].items():
        assert _digest(out / name) == digest
    assert manifest["seeds"] == {"common": 42, "idiosyncratic": 7}
    assert "wall_clock_seconds" in manifest
    argv = ["--threads", "8", "study", "--config", cfg, "--out-dir", str(out), "--seed-common", "42", "--seed-idio", "7"]
    assert main(argv) == 0
    for name, data in first.items():
        assert (out / name).read_bytes() == data
    assert json.loads((out / "manifest.json").read_text())["files"] == manifest["files"]


def test_other_seed_changes_output(tmp_path):
    cfg = write(tmp_path, SMALL_STUDY.format(name="systemic_risk"))
    main(["study", "--config", cfg, "--out-dir", str(tmp_path / "a"), "--seed-common", "1"])
    main(["study", "--config", cfg, "--out-dir", str(tmp_path / "b"), "--seed-common", "2"])
    assert (tmp_path / "a" / "study.csv").read_bytes() != (tmp_path / "b" / "study.csv").read_bytes()


def test_simulate_writes_long_format(tmp_path):
    cfg = write(tmp_path, "[model]\nname = \"systemic_risk\"\njump_scale = 1.0\n\n[sim]\nT = 2.0\ndt = 0.1\nn = 3\nR = 2\n")
    out = tmp_path / "s"
    assert main(["simulate", "--config", cfg, "--out-dir", str(out)]) == EXIT_OK
    rows = read_csv(out / "trajectories.csv")
    assert rows[0] == TRAJECTORY_HEADER
    body = rows[1:]
    assert {r[0] for r in body} == {"0", "1"} and {r[1] for r in body} == {"0", "1", "2"}
    jumps = [i for i, r in enumerate(body) if r[5] == "1"]
    assert jumps, "expected at least one common jump"
    for i in jumps:
        pre = body[i - 1]
        assert pre[5] == "0" and pre[2] == body[i][2]
    # 17 significant digits round-trip
    v = body[5][4]
    assert float(v) == float(format(float(v), ".17g"))


def test_regime_command(tmp_path):
    cfg = write(tmp_path, '[model]\nname = "regime_switching"\nstates = [1.0, 2.0]\nrates = [[0.0, 1.0], [2.0, 0.0]]\n\n[sim]\nT = 50.0\ndt = 1.0\nn = 1\nR = 3\n')
    out = tmp_path / "r"
    assert main(["regime", "--config", cfg, "--out-dir", str(out)]) == EXIT_OK
    rows = read_csv(out / "regime.csv")
    assert rows[0] == REGIME_HEADER
    assert {r[2] for r in rows[1:]} <= {"1", "2"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["jumps"] > 10


def test_regime_command_needs_regime_model(tmp_path):
    assert main(["regime", "--out-dir", str(tmp_path / "x")]) == EXIT_INPUT


def test_divergence_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "[model]\na = 1e6\n\n[sim]\ndt = 0.01\nn = 4\nR = 1\n")
    assert main(["simulate", "--config", cfg, "--out-dir", str(tmp_path / "d")]) == EXIT_DIVERGED
    assert "diverge" in capsys.readouterr().err.lower()


def test_bad_seed_and_threads(tmp_path):
    assert main(["simulate", "--seed-common", "-3", "--out-dir", str(tmp_path)]) == EXIT_INPUT
    assert main(["simulate", "--threads", "0", "--out-dir", str(tmp_path)]) == EXIT_INPUT


def test_couple_command(tmp_path):
    cfg = write(tmp_path, "[sim]\ndt = 0.05\nn = 4\nN_ref = 32\nR = 3\nindex_set = [0, 1]\n")
    out = tmp_path / "c"
    assert main(["couple", "--config", cfg, "--out-dir", str(out)]) == EXIT_OK
    rows = read_csv(out / "coupling.csv")
    assert rows[0] == STUDY_HEADER and rows[1][:2] == ["4", "3"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "cmvjump", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("simulate", "couple", "study", "regime", "validate"):
        assert sub in res.stdout

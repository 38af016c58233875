import json
import os
import subprocess
import sys

import numpy as np
import pytest

from otanneal.cli import main
from otanneal.config import ConfigError, load_config, parse_config
from otanneal.io import emit_csv, load_schemas, read_csv
from otanneal.langevin import LangevinConfig
from otanneal.pdmp import PdmpConfig

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")

MINIMAL = """
[run]
method = langevin
seed = 4
[problem]
potential = double_well
schedule = quadratic
horizon = 1.0
[dynamics]
n = 3
dt = 0.01
k = 5
"""


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_minimal_config_gets_defaults(tmp_path):
    spec = parse_config(write(tmp_path, MINIMAL))
    assert isinstance(spec.config, LangevinConfig)
    assert spec.config.lam == 1.0 and spec.config.control
    assert spec.config.schedule.params == (0.25, 25.0)
    assert spec.values["replicates"] == 1 and spec.values["h"] == pytest.approx(0.05)


def test_unknown_key_named(tmp_path):
    text = MINIMAL.replace("k = 5", "k = 5\nvelocty = 2")
    with pytest.raises(ConfigError, match="velocty"):
        load_config(write(tmp_path, text))
    with pytest.raises(ConfigError, match="velocty"):
        parse_config(overrides={"velocty": "1"})


def test_unknown_section_and_misplaced_key(tmp_path):
    with pytest.raises(ConfigError, match="section"):
        load_config(write(tmp_path, MINIMAL + "\n[extra]\nn = 3\n"))
    with pytest.raises(ConfigError, match="belongs"):
        load_config(write(tmp_path, MINIMAL.replace("seed = 4", "seed = 4\nn = 3")))


def test_invariant_violation_names_key(tmp_path):
    with pytest.raises(ConfigError, match="dt"):
        parse_config(write(tmp_path, MINIMAL), overrides={"dt": "0"})
    with pytest.raises(ConfigError, match="k"):
        parse_config(write(tmp_path, MINIMAL), overrides={"k": "0"})
    with pytest.raises(ConfigError, match="not found"):
        parse_config(str(tmp_path / "missing.ini"))


def test_override_wins_and_is_recorded(tmp_path):
    out = tmp_path / "o"
    code = main(["langevin", "--config", write(tmp_path, MINIMAL), "--out", str(out),
                 "--n", "2", "--seed", "9", "--workers", "1"])
    assert code == 0
    man = json.loads((out / "trajectories.json").read_text())
    assert man["config"]["n"] == 2 and man["seed"] == 9
    assert "n" in man["overrides"] and "seed" in man["overrides"]


def test_pdmp_method_from_subcommand(tmp_path):
    spec = parse_config(write(tmp_path, MINIMAL), method="pdmp")
    assert isinstance(spec.config, PdmpConfig)


def test_bundled_configs_resolve():
    for name in sorted(os.listdir(CONFIGS)):
        path = os.path.join(CONFIGS, name)
        spec = parse_config(path, dynamics=name != "gibbs_ref.ini")
        assert spec.potential is not None


def test_emit_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    vals = rng.normal(size=(20, 3)) * 10.0 ** rng.integers(-30, 30, size=(20, 3))
    path = emit_csv(["a", "b", "c"], vals.tolist(), str(tmp_path / "x.csv"))
    header, rows = read_csv(path)
    assert header == ["a", "b", "c"]
    np.testing.assert_array_equal(np.array(rows), vals)
    raw = open(path, "rb").read()
    assert b"\r" not in raw


def test_emit_csv_header_only(tmp_path):
    path = emit_csv(["t", "metric", "value"], [], str(tmp_path / "e.csv"))
    assert open(path).read() == "t,metric,value\n"


def test_gibbs_ref_output(tmp_path):
    out = tmp_path / "g"
    assert main(["gibbs-ref", "--config", os.path.join(CONFIGS, "gibbs_ref.ini"),
                 "--out", str(out), "--times", "0, 0.5, 1", "--x-points", "81"]) == 0
    header, rows = read_csv(str(out / "gibbs_ref.csv"))
    assert header == ["t", "x", "density"] and len(rows) == 3 * 81
    dens = np.array(rows)[-81:, 2]
    assert np.sum(dens) * 0.1 == pytest.approx(1.0, abs=0.01)
    assert (out / "gibbs_ref.json").exists()


def _headers_conform(path, kind, dim=None):
    schema = load_schemas()[kind]
    header, _ = read_csv(path)
    want = []
    for col in schema["columns"]:
        if col.get("repeat") == "dim":
            want += [col["name"].format(i=i) for i in range(dim)]
        else:
            want.append(col["name"])
    assert header == want


def test_run_is_byte_deterministic_and_schema_conformant(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    outs = []
    for i, workers in enumerate(("1", "2")):
        out = tmp_path / f"r{i}"
        assert main(["langevin", "--config", cfg, "--out", str(out), "--replicates", "3",
                     "--workers", workers]) == 0
        outs.append(out)
    for name in ("trajectories.csv", "diagnostics.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    _headers_conform(str(outs[0] / "trajectories.csv"), "trajectories", dim=1)
    _headers_conform(str(outs[0] / "diagnostics.csv"), "diagnostics")
    for name in ("trajectories.json", "diagnostics.json"):
        assert (outs[0] / name).exists()


def test_convergence_two_rows(tmp_path):
    out = tmp_path / "c"
    cfg = write(tmp_path, MINIMAL)
    assert main(["convergence", "--config", cfg, "--out", str(out), "--n-list", "5,40",
                 "--h-list", "0.05", "--replicates", "2", "--workers", "1"]) == 0
    header, rows = read_csv(str(out / "convergence.csv"))
    _headers_conform(str(out / "convergence.csv"), "convergence")
    assert [r[0] for r in rows] == [5.0, 40.0]


def test_exit_codes(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    assert main(["langevin", "--config", cfg, "--dt", "-1"]) == 2
    assert main(["langevin", "--config", str(tmp_path / "nope.ini")]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["langevin", "--config", cfg, "--out", str(blocker / "sub")]) == 4
    steep = MINIMAL.replace("potential = double_well", "potential = quadratic\npotential_params = 1e-6")
    steep = steep.replace("dt = 0.01", "dt = 0.5").replace("k = 5", "k = 1").replace("horizon = 1.0", "horizon = 50")
    code = main(["langevin", "--config", write(tmp_path, steep, "s.ini"), "--out",
                 str(tmp_path / "s"), "--replicates", "2", "--workers", "1", "--init", "gaussian"])
    assert code == 3
    man = json.loads((tmp_path / "s" / "trajectories.json").read_text())
    assert man["failures"] == 2


def test_console_script(tmp_path):
    res = subprocess.run([sys.executable, "-m", "otanneal.cli", "--version"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "otanneal" in res.stdout

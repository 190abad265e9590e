import json
import math
import os
import subprocess
import sys

import pytest

from isonorm.lab.cli import main, run_experiment
from isonorm.lab.config import ConfigError, ExperimentConfig, builtin_config_path, parse_config
from isonorm.lab.experiments import REGISTRY

BUNDLED = sorted(REGISTRY)


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return p


def test_list(capsys):
    assert main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 8
    assert {"identity_suite", "ratio_grids"} <= {ln.split()[0] for ln in lines}


@pytest.mark.parametrize("argv, target, rel", [
    (["M", "--body", "ball2", "--dim", "5"], 1.0, 0.01),
    (["multinorm", "--C", "cube", "--K", "cube", "--dim", "1", "--t", "1,1",
      "--samples", "1000000"], 2 / 3, 0.01),
    (["L", "--body", "cube", "--dim", "4"], 12 ** -0.5, 0.01),
])
def test_estimate_examples(capsys, argv, target, rel):
    assert main(["estimate", *argv, "--json"]) == 0
    rec = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert abs(rec["value"] / target - 1) < rel


def test_estimate_json_body(capsys):
    spec = json.dumps({"type": "cube", "dim": 2, "half_width": 1.0})
    assert main(["estimate", "volume", "--body", spec, "--json"]) == 0
    assert json.loads(capsys.readouterr().out.splitlines()[-1])["value"] == 4.0


def test_estimate_errors(capsys):
    assert main(["estimate", "M", "--body", "cube"]) == 2
    assert main(["estimate", "nonsense", "--body", "cube", "--dim", "2"]) == 2
    assert "--dim" in capsys.readouterr().err


def test_malformed_json(tmp_path, capsys):
    p = write(tmp_path, '{\n  "name": "alpt",\n  "seed": 1,,\n}')
    assert main(["run", str(p)]) == 2
    err = capsys.readouterr().err
    assert f"{p}:3:" in err and "invalid JSON" in err


@pytest.mark.parametrize("bad, where", [
    ({"name": "alpt", "seed": -1}, "seed"),
    ({"name": "alpt", "dims": [0]}, "dims/0"),
    ({"name": "alpt", "bogus": 1}, "<root>"),
    ({"seed": 1}, "<root>"),
    ({"name": "alpt", "bodies": {"C": "dodecahedron"}}, "bodies/C"),
])
def test_schema_errors(tmp_path, capsys, bad, where):
    assert main(["run", str(write(tmp_path, bad))]) == 2
    assert f"schema error at {where}" in capsys.readouterr().err


def test_unknown_experiment(tmp_path):
    assert run_experiment(write(tmp_path, {"name": "no_such"}))[0] == 2


def test_config_round_trip():
    cfg = parse_config(builtin_config_path("alpt").read_text())
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")


def test_runtime_error_keeps_partial_report(tmp_path):
    # q = 40 on 1000 points trips the Z_q sample guard after the first checks are recorded
    cfg = {"name": "zq_suite", "seed": 3, "samples": 1000, "dims": [2],
           "params": {"pq": [[1, 2], [2, 40]], "directions": 8}, "output_dir": str(tmp_path)}
    code, report = run_experiment(write(tmp_path, cfg))
    assert code == 3
    doc = json.loads((tmp_path / "zq_suite.json").read_text())
    assert doc["status"] == "error" and "ZqGuardError" in doc["error"]
    assert len(doc["records"]) >= 1


def _small_identity(tmp_path, sub):
    cfg = {"name": "identity_suite", "seed": 11, "samples": 20000, "dims": [2],
           "params": {"cases": [{"C": "cube", "K": "ball1", "n": 2, "s": 3}],
                      "closed_form_samples": 200000, "rotations": 10, "rotation_count": 1000,
                      "gaussian_bodies": ["cube"], "self_gauge_bodies": ["ball1"]},
           "tolerances": {"closed_form_abs": 0.01, "ks": 0.02},
           "output_dir": str(tmp_path / sub)}
    return write(tmp_path, cfg, f"{sub}.json")


def test_byte_identical_reports(tmp_path, monkeypatch):
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("ISONORM_THREADS", threads)
        p = _small_identity(tmp_path, f"t{threads}")
        code, _ = run_experiment(p)
        assert code == 0
        outs.append((tmp_path / f"t{threads}" / "identity_suite.json").read_bytes())
    assert outs[0] == outs[1]


def test_report_artifacts(tmp_path):
    code, report = run_experiment(_small_identity(tmp_path, "a"))
    doc = json.loads((tmp_path / "a" / "identity_suite.json").read_text())
    assert doc["summary"]["fail"] == 0 and doc["artifacts"] == ["identity_suite.json"]
    timing = json.loads((tmp_path / "a" / "identity_suite.timing.json").read_text())
    assert timing["wall_clock_seconds"] >= 0
    for rec in doc["records"]:
        assert rec["anchor"] and rec["verdict"] in ("pass", "fail", "report-only")


def test_console_script(tmp_path):
    out = subprocess.run([sys.executable, "-m", "isonorm.lab.cli", "list"], capture_output=True,
                         text=True, check=True)
    assert "milman_pajor" in out.stdout


@pytest.mark.slow
@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_run(tmp_path, name):
    code, report = run_experiment(builtin_config_path(name), out_dir=tmp_path)
    assert code in (0, 1), report.error
    doc = json.loads((tmp_path / f"{name}.json").read_text())
    assert doc["status"] == "complete" and doc["records"]
    for art in doc["artifacts"]:
        assert (tmp_path / art).exists()


def test_identity_suite_bundled_passes(tmp_path):
    code, _ = run_experiment(builtin_config_path("identity_suite"), out_dir=tmp_path)
    assert code == 0

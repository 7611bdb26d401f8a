import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from univcode import cli
from univcode.channels import dmc_theta, make_dmc_family
from univcode.infomeasures import optimal_r1

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
BSC = {"kind": "exponent-bound", "seed": 1, "family": {"constructor": "dmc", "d": 2, "m": 1},
       "channel": [[0.9, 0.1], [0.1, 0.9]], "P": [0.5, 0.5], "rates": {"R": 0.2}}


def write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg) if isinstance(cfg, dict) else cfg)
    return path


def test_exponent_bound_run(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", str(write(tmp_path, BSC)), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    R1, bound = optimal_r1([0.5, 0.5], make_dmc_family(2, 1).point(dmc_theta(BSC["channel"])), 0.2)
    assert summary["R1"] == pytest.approx(R1, abs=1e-12)
    assert summary["bound"] == pytest.approx(bound, abs=1e-12)
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["digests"]) == {"results.csv", "summary.json"}
    assert manifest["kernel_backend"] in ("python", "cython")
    assert not list(out.glob("*.tmp*"))


def test_options_before_subcommand(tmp_path):
    out = tmp_path / "o2"
    assert cli.main(["--out", str(out), "run", str(write(tmp_path, BSC))]) == 0
    assert (out / "results.csv").exists()


def test_given_threshold(tmp_path):
    cfg = dict(BSC, rates={"R": 0.2, "R1": 0.3})
    out = tmp_path / "o"
    assert cli.run(write(tmp_path, cfg), out=out) == 0
    assert json.loads((out / "summary.json").read_text())["threshold"] == "given"


@pytest.mark.parametrize("text", ["kind: [unclosed", "- 1\n- 2\n",
                                  yaml.safe_dump(dict(BSC, kind="nope")),
                                  yaml.safe_dump({k: v for k, v in BSC.items() if k != "seed"}),
                                  yaml.safe_dump(dict(BSC, extra=1)),
                                  yaml.safe_dump(dict(BSC, P=[0.7, 0.7]))])
def test_malformed_config(tmp_path, text):
    out = tmp_path / "out"
    assert cli.main(["run", str(write(tmp_path, text)), "--out", str(out)]) == 2
    assert not out.exists() or not any(out.iterdir())


def test_missing_file(tmp_path):
    assert cli.main(["run", str(tmp_path / "none.yaml")]) == 2


def test_validate_diagnostics(tmp_path, capsys):
    bad = dict(BSC, rates={"R": 0.3, "R1": 0.2})
    assert cli.main(["validate", str(write(tmp_path, bad))]) == 2
    assert "R1 > R" in capsys.readouterr().out
    audit = {"kind": "codebook-audit", "seed": 1, "family": {"constructor": "dmc", "d": 2, "m": 1}, "P": [0.5, 0.5],
             "n": 20, "rates": {"R": 0.2}, "verify": True}
    assert cli.main(["validate", str(write(tmp_path, audit, "a.yaml"))]) == 2
    assert "capacity" in capsys.readouterr().out
    so = {"kind": "second-order", "seed": 1, "family": {"constructor": "dmc", "d": 2, "m": 1},
          "channel": [[0.9, 0.1], [0.1, 0.9]], "P": [0.5, 0.5], "n_list": [100], "rates": {"R2_star": 0, "epsilon": 0.1}}
    assert cli.validate(write(tmp_path, so, "s.yaml"))
    gauss = {"kind": "simulate-exponent", "seed": 1, "family": {"constructor": "gaussian_fading", "signal_points": [-1, 1]},
             "theta": [1, 0, 0], "P": [0.5, 0.5], "n_list": [8, 16, 32, 64], "rates": {"R": 0.1}}
    assert any("finite output" in d for d in cli.validate(write(tmp_path, gauss, "g.yaml")))


def test_numeric_failure_exit(tmp_path):
    cfg = dict(BSC, kind="compound-design", method="M1", candidates=[[0.5, 0.5]], rates={"R": 0.5})
    cfg.pop("channel")
    cfg["channel_grid"] = [[[0.9, 0.1], [0.1, 0.9]]]
    assert cli.run(write(tmp_path, cfg), out=tmp_path / "o") == 3


def test_slope_check_exit(tmp_path):
    cfg = yaml.safe_load((CONFIGS / "clarke_barron_bernoulli.yaml").read_text())
    cfg["slope_range"] = [0.9, 1.0]
    out = tmp_path / "o"
    assert cli.run(write(tmp_path, cfg), out=out) == 4
    assert (out / "summary.json").exists()


def test_csv_byte_identical(tmp_path):
    path = CONFIGS / "simulate_exponent_bsc.yaml"
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(path, out=a) == 0
    assert cli.run(path, out=b, workers=2) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()


def test_seed_override_changes_codebook(tmp_path):
    path = CONFIGS / "codebook_audit.yaml"
    assert cli.main(["run", str(path), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", str(path), "--out", str(tmp_path / "b"), "--seed", "12345"]) == 0
    ta, tb = (tmp_path / "a" / "codebook.txt").read_text(), (tmp_path / "b" / "codebook.txt").read_text()
    assert ta.splitlines()[0] == tb.splitlines()[0]
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["packing_verified"] and summary["max_group_average_ratio"] <= 1.0


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_configs_validate(name):
    assert cli.validate(CONFIGS / name) == []


def test_json_formatting():
    text = cli.dumps_json({"a": 0.1, "b": float("inf"), "c": float("nan"), "d": [1, 2.5]})
    data = json.loads(text)
    assert data == {"a": 0.1, "b": None, "c": None, "d": [1, 2.5]}


def test_console_entry(tmp_path):
    res = subprocess.run([sys.executable, "-m", "univcode.cli", "validate", str(CONFIGS / "exponent_bound_bsc.yaml")],
                         capture_output=True, text=True)
    assert res.returncode == 0

import csv
import json
import os

import pytest

from mrca_lab import cli

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
QUAD = os.path.join(ROOT, "configs", "quad.json")
STABLE = os.path.join(ROOT, "configs", "stable.json")


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_sample_is_byte_identical(tmp_path):
    outs = []
    for k, threads in enumerate(("1", "3")):
        out = tmp_path / f"o{k}"
        code = cli.run(["sample", "--quantity", "mrca", "--n", "1000", "--seed", "7",
                        "--out", str(out), "--threads", threads])
        assert code == 0
        outs.append((out / "sample" / "sample_mrca.csv").read_bytes())
    assert outs[0] == outs[1]
    rows = read_csv(tmp_path / "o0" / "sample" / "sample_mrca.csv")
    assert len(rows) == 1000 and list(rows[0]) == ["A", "Z", "Z_A", "Z_I", "Z_O"]
    assert b"\r" not in outs[0]


def test_sample_quantities(tmp_path):
    for q, extra, cols in [
        ("Z", [], ["Z"]),
        ("ancestors", ["--s", "0.2"], ["Z_past", "M", "Z_now"]),
        ("window", ["--d", "0.5"], ["count"]),
        ("na-stable", ["--alpha0", "0.5"], ["N"]),
    ]:
        assert cli.run(["sample", "--quantity", q, "--n", "5", "--out", str(tmp_path), *extra]) == 0
        rows = read_csv(tmp_path / "sample" / f"sample_{q}.csv")
        assert len(rows) == 5 and list(rows[0]) == cols


def test_seed_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("MRCA_LAB_SEED", "11")
    cli.run(["sample", "--quantity", "Z", "--n", "3", "--out", str(tmp_path / "a")])
    monkeypatch.delenv("MRCA_LAB_SEED")
    cli.run(["sample", "--quantity", "Z", "--n", "3", "--seed", "11", "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "sample" / "sample_Z.csv").read_bytes()
    b = (tmp_path / "b" / "sample" / "sample_Z.csv").read_bytes()
    assert a == b
    manifest = json.loads((tmp_path / "a" / "sample" / "manifest.json").read_text())
    assert manifest["seed"] == 11


def test_eval_cdf_A(tmp_path):
    assert cli.run(["eval", "--config", QUAD, "--quantity", "cdf_A", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "eval" / "eval.csv")
    assert list(rows[0]) == ["quantity", "t", "lambda", "a", "n", "value"]
    assert [float(r["t"]) for r in rows] == [0.1, 0.5, 1.0, 2.0, 5.0]
    import math

    for r in rows:
        t = float(r["t"])
        assert float(r["value"]) == pytest.approx((1 - math.exp(-2 * t)) ** 2, rel=1e-14)
        assert r["lambda"] == ""


def test_eval_default_quantities_for_each_kind(tmp_path):
    for cfg in (QUAD, STABLE, os.path.join(ROOT, "configs", "custom.json")):
        assert cli.run(["eval", "--config", cfg, "--out", str(tmp_path)]) == 0
        assert len(read_csv(tmp_path / "eval" / "eval.csv")) > 20


def test_eval_json_format(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"output": {"format": "json"}}))
    assert cli.run(["eval", "--config", str(cfg), "--quantity", "kappa", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "eval" / "eval.json").read_text())
    assert data == [{"quantity": "kappa", "t": None, "lambda": None, "a": None, "n": None, "value": 2.0}]


def test_manifest_hashes(tmp_path):
    import hashlib

    cli.run(["sample", "--quantity", "Z", "--n", "4", "--out", str(tmp_path)])
    man = json.loads((tmp_path / "sample" / "manifest.json").read_text())
    data = (tmp_path / "sample" / "sample_Z.csv").read_bytes()
    assert man["files"]["sample_Z.csv"] == hashlib.sha256(data).hexdigest()
    assert "time" not in json.dumps(man).lower()


def test_verify_stable_config(tmp_path):
    code = cli.run(["verify", "--config", STABLE, "--out", str(tmp_path), "--n", "20000"])
    assert code == 0
    rows = read_csv(tmp_path / "verify" / "summary.csv")
    assert all(r["verdict"] == "pass" for r in rows)
    assert {r["study_name"] for r in rows} >= {"laplace_dual_route", "na_stable_chi2", "na_stable_control"}
    report = json.loads((tmp_path / "verify" / "reports" / "laplace_dual_route.json").read_text())
    assert report["runtime_ms"] == 0 and report["verdict"] == "pass"


def test_verify_failing_study_exits_1(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"verify": {"studies": [{"name": "tmrca_law_control", "wrong_rate": 2.0}]}}))
    assert cli.run(["verify", "--config", str(cfg), "--out", str(tmp_path), "--n", "2000"]) == 1


def test_study_sweep(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grids": {"s_grid": [0.01, 0.1, 1.0]}, "mc": {"n": 20000}}))
    assert cli.run(["study", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "study" / "study.csv")
    assert [float(r["s"]) for r in rows] == [1.0, 0.1, 0.01]
    l1 = [float(r["l1"]) for r in rows]
    assert l1[0] > l1[1] > l1[2]


@pytest.mark.parametrize(
    "argv",
    [
        ["bogus"],
        ["sample"],
        ["sample", "--quantity", "Z", "--n", "0"],
        ["sample", "--quantity", "Z", "--frobnicate"],
        ["verify", "--config", "/nonexistent/config.json"],
        ["sample", "--quantity", "Z", "--seed", "-3"],
        ["sample", "--quantity", "Z", "--config", STABLE],
        ["sample", "--quantity", "na-stable", "--alpha0", "1.5"],
        ["sample", "--quantity", "na-stable"],
        ["eval", "--quantity", "nonsense"],
    ],
)
def test_usage_and_domain_errors_exit_2(tmp_path, argv, capsys):
    assert cli.run([*argv, "--out", str(tmp_path)] if argv != ["bogus"] else argv) == 2
    assert capsys.readouterr().err


@pytest.mark.parametrize(
    "cfg",
    [
        {"grids": {"t_grid": [1.0, 0.5]}},
        {"grids": {"lambda_grid": [0.0, 1.0]}},
        {"mc": {"n": 0}},
        {"mc": {"seed": "banana"}},
        {"mechanism": {"kind": "custom", "alpha": 1.0, "beta": 0.0, "atoms": [[1, 1]]}},
        {"output": {"format": "xml"}},
        {"verify": {"studies": [{"n": 3}]}},
        {"verify": {"studies": ["no_such_study"]}},
    ],
)
def test_bad_configs_exit_2(tmp_path, cfg):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert cli.run(["verify", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_malformed_json_exit_2(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    assert cli.run(["eval", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_console_script_entry_point():
    from importlib.metadata import entry_points

    eps = [ep for ep in entry_points(group="console_scripts") if ep.name == "mrca-lab"]
    assert eps and eps[0].value == "mrca_lab.cli:main"

import hashlib
import json

import numpy as np
import pytest

from qnslab.cli import main
from qnslab.spectral import TorusGrid, to_spectral, write_qnsf


def _digest(directory, names):
    return {n: hashlib.sha256((directory / n).read_bytes()).hexdigest() for n in names}


def test_gen_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen", "--out", str(a), "--seed", "11", "--format", "csv"]) == 0
    assert main(["gen", "--out", str(b), "--seed", "11", "--format", "csv"]) == 0
    names = sorted(p.name for p in a.iterdir() if p.name != "meta.json")
    assert "field_000.qnsf" in names and "family.csv" in names
    assert _digest(a, names) == _digest(b, names)
    meta = json.loads((a / "meta.json").read_text())
    assert meta["exit_code"] == 0 and meta["command"] == "gen"


def test_gen_seed_changes_output(tmp_path):
    main(["gen", "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["gen", "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "field_000.qnsf").read_bytes() != (tmp_path / "b" / "field_000.qnsf").read_bytes()


@pytest.mark.parametrize("which", ["q", "q_translated", "q_inverse", "bmo", "semigroup_besov", "wavelet"])
def test_norm_of_zero_field_is_zero(tmp_path, which):
    grid = TorusGrid(2, 32)
    path = tmp_path / "zero.qnsf"
    write_qnsf(path, to_spectral(np.zeros(grid.shape), grid))
    assert main(["norm", str(path), "--which", which, "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "norm.json").read_text())["report"]
    assert report["value"] == 0.0


def test_verify_semigroup_suite_passes_quickly(tmp_path):
    import time

    start = time.perf_counter()
    assert main(["verify", "--suite", "semigroup", "--out", str(tmp_path), "--format", "csv"]) == 0
    assert time.perf_counter() - start < 5.0
    doc = json.loads((tmp_path / "verify.json").read_text())
    assert doc["checks"][0]["passed"] is True
    assert (tmp_path / "verify.csv").exists()


def test_solve_writes_manifest_and_plots(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[grid]\nN = 16\n[family]\nbandwidth = 3\n[solver]\nnodes = 12\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o"), "--format", "svg"]) == 0
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["regime"] in ("contracting", "outside small-data regime")
    assert m["residual_max"] < 0.05
    svg = (tmp_path / "o" / "ratios.svg").read_text()
    assert "<svg" in svg and "dc:date" not in svg


def test_capacity_and_report(tmp_path):
    out = tmp_path / "o"
    assert main(["capacity", "--set", "cube:0,0,8+ball:20,20,0.5", "--out", str(out), "--format", "csv"]) == 0
    cap = json.loads((out / "capacity.json").read_text())
    assert cap["lower"] <= cap["upper"]
    assert main(["report", "--out", str(out)]) == 0
    assert json.loads((out / "report.json").read_text())["reports"] == ["capacity.json"]


def test_decompose_demo_sample(tmp_path):
    assert main(["decompose", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "decomposition.json").read_text())
    assert doc["residual"] < 1e-12 and len(doc["atoms"]) >= 1


@pytest.mark.parametrize(
    "argv",
    [
        ["frobnicate"],
        ["norm"],
        ["capacity"],
        ["capacity", "--set", "star:1,2,3"],
        ["verify", "--suite", "nope"],
        ["gen", "--seed", "-1"],
        ["gen", "--threads", "0"],
        ["report"],
    ],
    ids=["unknown_command", "norm_without_field", "capacity_without_set", "bad_set_kind", "unknown_suite", "negative_seed", "zero_threads", "report_on_empty_dir"],
)
def test_usage_errors_exit_two(tmp_path, argv):
    if argv[0] != "frobnicate":
        argv = argv + ["--out", str(tmp_path / "o")]
    assert main(argv) == 2


def test_bad_config_exits_two(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[grid]\nfoo = 1\n")
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_thread_env_must_be_integer(tmp_path, monkeypatch):
    monkeypatch.setenv("QNSLAB_THREADS", "lots")
    assert main(["gen", "--out", str(tmp_path)]) == 2
    monkeypatch.setenv("QNSLAB_THREADS", "2")
    assert main(["gen", "--out", str(tmp_path)]) == 0


def test_failed_check_exits_one(tmp_path, monkeypatch):
    from qnslab import suites

    failing = ((1, "spectral_identities", lambda: {"passed": False, "worst": 1.0}),) + suites.ACCEPTANCE[1:]
    monkeypatch.setattr(suites, "ACCEPTANCE", failing)
    assert main(["verify", "--suite", "semigroup", "--out", str(tmp_path)]) == 1
    assert json.loads((tmp_path / "meta.json").read_text())["exit_code"] == 1

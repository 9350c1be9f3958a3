import csv
import io
import json

import pytest

from numafft import bench
from numafft.cli import build_parser, main

SMALL = ["--nodes", "2", "--cores-per-node", "1", "--repeats", "1"]


def test_run_json(capsys):
    assert main(["run", "--preset", "Rconv5.2", "--variant", "nfft", "--cap-channels", "8",
                 "--format", "json", *SMALL]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["reports"][0]["preset"] == "Rconv5.2"
    assert doc["reports"][0]["locality"]["CmmFetch"]["remote"] == 0


def test_run_custom_dims_csv(capsys):
    assert main(["run", "--dims", "1,2,3,10,10,3,3,1", "--format", "csv", "--verify", *SMALL]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 1
    assert rows[0]["preset"] == "custom" and rows[0]["out_channels"] == "3"
    assert float(rows[0]["normwise_error"]) < 1e-5


def test_verify_exit_codes(capsys):
    ok = ["verify", "--dims", "2,3,2,20,20,3,3,1", "--precision", "fp64", *SMALL]
    assert main(ok) == 0
    assert "PASS" in capsys.readouterr().err
    assert main(ok + ["--tolerance", "0"]) == 1
    assert "FAIL" in capsys.readouterr().err


def test_sweep_and_report(tmp_path, capsys):
    out = tmp_path / "sweep.json"
    assert main(["sweep", "--presets", "Rconv5.2,Aconv5", "--cap-channels", "8", "--format", "json",
                 "--out", str(out), *SMALL]) == 0
    doc = json.loads(out.read_text())
    assert [(r["preset"], r["variant"]) for r in doc["reports"]] == [
        ("Rconv5.2", "wfft"), ("Rconv5.2", "nfft"), ("Aconv5", "wfft"), ("Aconv5", "nfft"),
    ]
    assert len(doc["comparisons"]) == 2
    assert main(["report", str(out), "--format", "csv"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 4 and rows[1]["speedup"] != ""
    assert main(["report", str(out)]) == 0
    assert "Rconv5.2" in capsys.readouterr().out


def test_report_rejects_mixed_versions(tmp_path, capsys):
    text = bench.report([bench.run("Rconv5.2", cap_channels=4, repeats=1, nodes=2, cores_per_node=1)], "json")
    old = json.loads(text)
    old["version"] = 99
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    a.write_text(text)
    b.write_text(json.dumps(old))
    assert main(["report", str(a), str(b)]) == 2
    assert "mix" in capsys.readouterr().err


def test_domain_errors_exit_two(capsys):
    assert main(["run", "--preset", "Vconv1.2", "--batch", "128", *SMALL]) == 2
    assert "working set" in capsys.readouterr().err


def test_parser_rejects_bad_input():
    parser = build_parser()
    with pytest.raises(SystemExit):
        parser.parse_args(["run", "--preset", "Vconv9"])
    with pytest.raises(SystemExit):
        parser.parse_args(["run", "--dims", "1,2,3"])
    with pytest.raises(SystemExit):
        parser.parse_args(["run", "--variant", "gfft"])


def test_defaults():
    args = build_parser().parse_args(["run"])
    assert (args.tile, args.lanes, args.repeats, args.nodes) == (16, 4, 10, 8)
    assert build_parser().parse_args(["verify"]).repeats == 1


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "numafft.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "verify" in proc.stdout

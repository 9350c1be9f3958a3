import csv
import io
import json
from dataclasses import asdict

import jsonschema
import numpy as np
import pytest

from conftest import random_config
from numafft import bench
from numafft.conv import ConvConfig, direct_conv
from numafft.errors import ConfigError, FormatError


def fake_report(variant, total, preset="Aconv4", batch=2):
    cfg = ConvConfig(batch, 4, 4, 13, 13, 3, 3, pad=1)
    return bench.RunReport(
        preset=preset, variant=variant, config=asdict(cfg), nodes=8, cores_per_node=2,
        tile=16, lanes=4, repeats=3, seed=0,
        stage_seconds={"cmm": total / 2, "input_transform": total / 2},
        total_seconds=total,
        locality={"CmmFetch": {"local": 10, "remote": 70, "remote_fraction": 0.875}},
    )


# -- run ----------------------------------------------------------------------


def test_rconv52_nfft_has_no_remote_cmm_reads():
    rep = bench.run("Rconv5.2", "nfft", batch=2, nodes=8, cores_per_node=2, repeats=1)
    assert rep.locality["CmmFetch"]["remote"] == 0
    assert rep.locality["CmmFetch"]["local"] > 0
    assert rep.max_rel_error is None


def test_aconv2_wfft_remote_fraction():
    rep = bench.run("Aconv2", "wfft", batch=2, nodes=8, cores_per_node=2, repeats=1)
    assert rep.locality["CmmFetch"]["remote_fraction"] == pytest.approx(0.875, abs=0.02)


def test_custom_direct_run_matches_oracle():
    cfg = ConvConfig(1, 1, 1, 3, 3, 1, 1, element_kind="fp64")
    rep, out, _ = bench.run(cfg, "direct", repeats=2, keep_output=True)
    I, K = bench.make_inputs(cfg, 0)
    np.testing.assert_array_equal(out, direct_conv(I, K, cfg))
    np.testing.assert_allclose(out[0, 0], I[0, 0] * K[0, 0, 0, 0])
    assert rep.preset == "custom" and rep.locality == {}
    assert set(rep.stage_seconds) == {"direct"}


def test_median_over_repeats():
    rep = bench.run(ConvConfig(1, 2, 2, 16, 16, 3, 3), "nfft", repeats=3, nodes=2, cores_per_node=1)
    assert rep.repeats == 3
    assert set(rep.stage_seconds) == set(bench.FFT_STAGES)


def test_working_set_cap():
    with pytest.raises(ConfigError, match="reduce --batch"):
        bench.run("Vconv1.2", "nfft", batch=128, repeats=1)


def test_bad_arguments():
    with pytest.raises(ConfigError):
        bench.run("Nope", "nfft")
    with pytest.raises(ConfigError):
        bench.run("Rconv5.2", "gfft")
    with pytest.raises(ConfigError):
        bench.run("Rconv5.2", "nfft", nodes=0)
    with pytest.raises(ConfigError):
        bench.run("Rconv5.2", "nfft", repeats=0)


def test_same_seed_same_inputs_and_result():
    cfg = ConvConfig(2, 3, 3, 20, 20, 3, 3, pad=1)
    a, b = bench.make_inputs(cfg, 7), bench.make_inputs(cfg, 7)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[0], bench.make_inputs(cfg, 8)[0])
    r1 = bench.verify(cfg, "wfft", seed=7, nodes=2, cores_per_node=2)
    r2 = bench.verify(cfg, "wfft", seed=7, nodes=2, cores_per_node=2)
    assert r1.max_rel_error == r2.max_rel_error
    assert r1.report.locality == r2.report.locality


# -- verify -------------------------------------------------------------------


def test_verify_rconv42_nfft_fp32():
    res = bench.verify("Rconv4.2", "nfft", batch=2, tolerance=1e-3)
    assert res.passed, f"max relative error {res.max_rel_error:.3g} (normwise {res.normwise_error:.3g})"


def test_verify_direct_is_exact():
    res = bench.verify("Aconv4", "direct", cap_channels=16)
    assert res.passed and res.max_rel_error == 0.0 and res.normwise_error == 0.0


@pytest.mark.parametrize("seed", range(20))
def test_verify_random_fp64(seed):
    cfg = random_config(np.random.default_rng(seed), "fp64")
    res = bench.verify(cfg, "nfft", tolerance=1e-10, seed=seed, nodes=4, cores_per_node=2)
    assert res.passed, res.max_rel_error


def test_relative_error_floor():
    assert bench.relative_error(np.array([1e-7]), np.array([0.0])) == pytest.approx(0.1)
    assert bench.relative_error(np.array([2.0]), np.array([1.0])) == 1.0
    assert bench.normwise_error(np.zeros(3), np.zeros(3)) == 0.0
    with pytest.raises(ConfigError):
        bench.relative_error(np.zeros(2), np.zeros(3))


# -- report -------------------------------------------------------------------


def test_single_report_csv():
    text = bench.report([fake_report("nfft", 1.0)], "csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == list(bench.CSV_COLUMNS)
    assert len(rows) == 2
    row = dict(zip(rows[0], rows[1]))
    assert row["preset"] == "Aconv4" and row["CmmFetch_remote"] == "70" and row["speedup"] == ""


def test_speedup_is_ratio_of_totals():
    reps = [fake_report("wfft", 3.0), fake_report("nfft", 2.0), fake_report("nfft", 5.0, batch=4)]
    row = list(csv.DictReader(io.StringIO(bench.report(reps, "csv"))))
    assert float(row[1]["speedup"]) == pytest.approx(1.5)
    assert row[0]["speedup"] == "" and row[2]["speedup"] == ""
    doc = json.loads(bench.report(reps, "json"))
    assert doc["comparisons"] == [
        {"preset": "Aconv4", "batch": 2, "wfft_seconds": 3.0, "nfft_seconds": 2.0, "speedup": 1.5}
    ]


def test_json_validates_and_round_trips():
    rep = bench.run(ConvConfig(1, 2, 2, 14, 14, 3, 3, pad=1), "nfft", repeats=1, verify=True,
                    nodes=2, cores_per_node=1)
    reps = [rep, fake_report("wfft", 2.0), fake_report("nfft", 1.0)]
    text = bench.report(reps, "json")
    jsonschema.validate(json.loads(text), bench.REPORT_JSON_SCHEMA)
    back = bench.load_reports([text])
    assert back == reps
    assert bench.report(back, "json") == text


def test_error_fields_only_when_verified():
    d = fake_report("nfft", 1.0).to_dict()
    assert "max_rel_error" not in d
    jsonschema.validate(
        {"schema": bench.SCHEMA_NAME, "version": bench.SCHEMA_VERSION, "reports": [d], "comparisons": []},
        bench.REPORT_JSON_SCHEMA,
    )


def test_mixed_schema_versions_rejected():
    text = bench.report([fake_report("nfft", 1.0)], "json")
    old = json.loads(text)
    old["version"] = 0
    with pytest.raises(FormatError, match="mix"):
        bench.load_reports([text, json.dumps(old)])
    with pytest.raises(FormatError):
        bench.load_reports([json.dumps(old)])
    with pytest.raises(FormatError):
        bench.load_reports(['{"schema": "other"}'])
    with pytest.raises(FormatError):
        bench.load_reports(["not json"])
    broken = json.loads(text)
    broken["reports"][0]["extra"] = 1
    with pytest.raises(FormatError):
        bench.load_reports([json.dumps(broken)])


def test_report_format_errors():
    with pytest.raises(FormatError):
        bench.report([fake_report("nfft", 1.0)], "xml")
    with pytest.raises(FormatError):
        bench.report([], "csv")


def test_table_lists_each_report():
    text = bench.report([fake_report("wfft", 3.0), fake_report("nfft", 2.0)], "table")
    lines = text.strip().splitlines()
    assert len(lines) == 3 and "speedup" in lines[0] and "1.5" in lines[2]

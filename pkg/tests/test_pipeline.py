import csv
import json

import pytest

from bubbletower.cli import main
from bubbletower.pipeline import (LEDGER_LABELS, SCHEMA_VERSION, ConfigError, PipelineConfig,
                                  emit_fields, parse_config, report_text, run_pipeline, write_csv)

SMALL = PipelineConfig(N=13, probes=500)


@pytest.fixture(scope="module")
def small_run():
    return run_pipeline(SMALL)


@pytest.mark.parametrize("values, match", [
    ({"n": 7, "m": 2}, "n >= 2m \\+ 4"),
    ({"eps": 0.0}, "eps"),
    ({"N": 0}, "at least one bubble"),
    ({"probes": -1}, "probes"),
    ({"phi": "power:-1"}, "q"),
    ({"k": "wobbly"}, "k"),
    ({"colour": 1}, "colour"),
])
def test_config_rejections(values, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(values)


def test_cli_rejects_low_dimension(capsys):
    assert main(["run", "--dim-n", "7", "--quiet"]) == 3
    assert "2m + 4" in capsys.readouterr().err


def test_cli_malformed_json_reports_location(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "n": 8,\n  "m": \n}\n')
    assert main(["run", "--config", str(cfg)]) == 3
    err = capsys.readouterr().err
    assert f"{cfg}:4:1" in err


def test_cli_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.json"), "--quiet"]) == 3


def test_config_file_and_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"N": 14, "seed": 3}))
    got = parse_config({"seed": 5, "n": None}, str(cfg))
    # flags override the file; unset flags leave it alone
    assert got.N == 14 and got.seed == 5 and got.n == 8


def test_small_run_report(small_run, tmp_path):
    rep = small_run.report
    assert rep["schema_version"] == SCHEMA_VERSION
    assert [e["label"] for e in rep["ledger"]] == list(LEDGER_LABELS)
    for e in rep["ledger"]:
        assert e["status"] in ("pass", "fail", "missing")
        assert e["checks"]
    # one dyadic bubble cannot show a six-shell trend: the only red entry
    assert [e["label"] for e in rep["ledger"] if e["status"] != "pass"] == ["(2.64)-envelope"]
    back = json.loads(report_text(rep))
    assert back["config"]["N"] == 13 and back["status"] == "fail"


def test_cli_exit_code_on_failure(tmp_path, capsys):
    out = tmp_path / "r.json"
    code = main(["run", "--bubbles", "13", "--probes", "500", "--report", str(out)])
    assert code == 2
    assert "status: fail" in capsys.readouterr().out
    rep = json.loads(out.read_text())
    assert rep["status"] == "fail"


def test_report_is_deterministic(small_run):
    again = run_pipeline(SMALL)
    assert report_text(small_run.report, timings=False) == report_text(again.report, timings=False)


def test_empty_csv_is_header_only(tmp_path):
    p = tmp_path / "e.csv"
    write_csv(p, ["a", "b"], [])
    assert p.read_text().splitlines() == ["a,b"]


def test_emit_fields(small_run, tmp_path):
    emit_fields(small_run, tmp_path)
    for name in ("u0_probes.csv", "rays.csv", "shells.csv", "sphere.csv"):
        with open(tmp_path / name) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) > 1, name
    with open(tmp_path / "rays.csv") as fh:
        assert len(list(csv.reader(fh))) == 1 + 13 * 61

import csv
import io
import json
import math

import pytest

from zml import cli, moments


def run(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


@pytest.fixture
def cache_arg(cache):
    if cache.dirty:
        cache.save()
    return ["--cache", str(cache.path)]


def test_moment_row_matches_library(capsys, cfg, cache, cache_arg):
    code, out, _ = run(capsys, "moment", "--T", "100", *cache_arg)
    assert code == 0
    (row,) = rows(out)
    rec = moments.e2(100.0, cfg.polynomial(), cache)
    assert float(row["i4"]) == rec.i4
    assert float(row["main"]) == rec.main
    assert float(row["e2"]) == rec.e2


def test_usage_errors(capsys, tmp_path):
    target = tmp_path / "out.csv"
    code, out, err = run(capsys, "moment", "--T", "100", "--bogus", "--out", str(target))
    assert code == 2 and out == "" and "usage" in err
    assert not target.exists()
    assert run(capsys)[0] == 2
    assert run(capsys, "moment")[0] == 2
    assert run(capsys, "report", "scan", "--kind", "e2", "--lo", "100", "--hi", "100")[0] == 2
    assert run(capsys, "report", "scan", "--kind", "e2", "--lo", "10", "--hi", "100", "--n", "1")[0] == 2
    assert list(tmp_path.iterdir()) == []


def test_numerical_failure_exit_code(capsys, tmp_path):
    target = tmp_path / "z.csv"
    code, out, err = run(capsys, "psi", "--T", "10", "--out", str(target))
    assert code == 3 and "DomainError" in err
    assert not target.exists()
    assert run(capsys, "saddle", "report", "--r", "50", "--x", "100")[0] == 3


def test_bad_config_is_usage_error(capsys, tmp_path):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("threads = 0\n")
    code, _, err = run(capsys, "zeta", "--t", "20", "--config", str(cfgfile))
    assert code == 2 and "configuration" in err


def test_out_file_written_atomically(capsys, tmp_path):
    target = tmp_path / "zeta.csv"
    assert run(capsys, "zeta", "--t", "14.134725141734695", "20", "--out", str(target))[0] == 0
    got = rows(target.read_text())
    assert [float(r["t"]) for r in got] == [14.134725141734695, 20.0]
    assert float(got[0]["abs"]) < 1e-8
    assert sorted(p.name for p in tmp_path.iterdir()) == ["zeta.csv"]


def test_json_records_carry_schema(capsys):
    code, out, _ = run(capsys, "zeta", "--t", "30", "--method", "em", "--format", "json")
    assert code == 0
    (rec,) = json.loads(out)
    assert rec["schema"] == cli.SCHEMA and set(rec) >= {"t", "re", "im", "abs", "err"}
    code, out, _ = run(capsys, "saddle", "report", "--r", "20", "--x", "2000", "--xi", "0.4")
    (rec,) = json.loads(out)
    assert rec["schema"] == 1 and rec["rel_err"] <= 0.05


def test_z2_direct_and_decomposed_agree(capsys, cache_arg):
    base = ["z2", "eval", "--sigma", "2", "--t", "0", *cache_arg]
    code, out, _ = run(capsys, *base, "--method", "direct")
    (d,) = json.loads(out)
    code2, out, _ = run(capsys, *base, "--method", "decomposed")
    (p,) = json.loads(out)
    assert code == code2 == 0
    assert d["method"] == "direct" and p["method"] == "decomposed"
    assert abs(d["re"] - p["re"]) + abs(d["im"] - p["im"]) <= d["err"] + p["err"]


def test_z2_eval_rejects_bad_sigma(capsys):
    assert run(capsys, "z2", "eval", "--sigma", "0.5")[0] == 2
    assert run(capsys, "z2", "eval", "--sigma", "0.9", "--method", "direct")[0] == 2
    assert run(capsys, "z2", "meansq", "--sigma", "2")[0] == 2


def test_e2_scan_has_sign_change(capsys, cache_arg):
    code, out, _ = run(capsys, "report", "scan", "--kind", "e2", "--lo", "10", "--hi", "1e4",
                       "--n", "40", *cache_arg)
    assert code == 0
    table = rows(out)
    e2 = [float(r["e2"]) for r in table]
    assert min(e2) < 0 < max(e2)
    summary = dict(kv.split("=") for kv in out.splitlines()[-1][2:].split())
    assert int(summary["sign_changes"]) >= 1
    assert float(summary["target"]) == 0.5


def test_meansq_scan_reports_target(capsys, cache_arg):
    code, out, _ = run(capsys, "report", "scan", "--kind", "z2meansq", "--lo", "20", "--hi", "40",
                       "--n", "2", "--sigma", "2", "--format", "json", *cache_arg)
    assert code == 0
    doc = json.loads(out)
    assert doc["summary"]["target"] == pytest.approx((10 - 16) / 3)
    assert math.isfinite(doc["summary"]["slope"])
    assert [r["T"] for r in doc["rows"]] == [20.0, 40.0]


def test_psi_and_spectral_commands(capsys, cache_arg):
    code, out, _ = run(capsys, "psi", "--T", "100", *cache_arg)
    assert code == 0 and float(rows(out)[0]["psi"]) > 0
    code, out, _ = run(capsys, "spectral", "sum", "--T", "50")
    (row,) = rows(out)
    assert code == 0 and int(row["n"]) > 100 and float(row["tail_bound"]) >= 0


def test_output_independent_of_threads(capsys, cache_arg):
    args = ["report", "scan", "--kind", "e2", "--lo", "10", "--hi", "3000", "--n", "12", *cache_arg]
    one = run(capsys, *args, "--threads", "1")[1]
    four = run(capsys, *args, "--threads", "4")[1]
    assert one == four and one

import json

import jsonschema
import pytest

from eqcheck.cli import bench, bench_table, main, strip_timing
from eqcheck.engine import Options
from eqcheck.schema import BENCH_REPORT, CHECK_REPORT

from generators import CORPUS, corpus_files


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_equivalent_exit_code(capsys):
    code, out, _ = run(capsys, "check", str(CORPUS / "eq" / "meyer_sieber_ref.prog"))
    assert code == 0 and "verdict: equivalent" in out


def test_inequivalent_prints_trace(capsys):
    code, out, _ = run(capsys, "check", str(CORPUS / "ineq" / "const_mismatch.prog"))
    assert code == 1
    assert "verdict: inequivalent" in out and "TERM" in out


def test_inconclusive_exit_code(capsys):
    code, out, _ = run(capsys, "check", str(CORPUS / "limitations" / "well_bracketed.prog"))
    assert code == 2 and "reasons:" in out


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.prog"
    bad.write_text("fun x -> x ||| fun x")
    code, out, _ = run(capsys, "check", str(bad))
    assert code == 3 and "error" in out


def test_type_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.prog"
    bad.write_text("fun () -> 0 ||| fun () -> true")
    assert run(capsys, "check", str(bad))[0] == 3


def test_missing_file_and_bad_flag(capsys):
    assert run(capsys, "check", "/nonexistent/file.prog")[0] == 3
    assert run(capsys, "check", "--frobnicate", "x")[0] == 3


def test_explain_goes_to_stderr(capsys):
    code, out, err = run(capsys, "check", "--explain", str(CORPUS / "eq" / "ex_sep.prog"))
    assert code == 0 and "SEP split" in err and "SEP" not in out


def test_bound_flag_overrides_header(capsys):
    f = str(CORPUS / "eq" / "location_passing.prog")
    code, out, _ = run(capsys, "check", "--json", f)
    assert code == 0 and json.loads(out)["bound"] == 8
    code, out, _ = run(capsys, "check", "--json", "--bound", "6", f)
    assert code == 2 and json.loads(out)["bound"] == 6


def test_no_annot_implies_no_reentry(capsys):
    f = str(CORPUS / "eq" / "reentry.prog")
    _, out, _ = run(capsys, "check", "--json", f)
    assert json.loads(out)["stats"]["reentry_skips"] > 0
    _, out, _ = run(capsys, "check", "--json", "--no-annot", f)
    assert json.loads(out)["stats"]["reentry_skips"] == 0


@pytest.mark.parametrize("path", corpus_files(), ids=lambda p: f"{p.parent.name}/{p.stem}")
def test_json_output_matches_schema(path, capsys):
    code, out, _ = run(capsys, "check", "--json", str(path))
    rec = json.loads(out)
    jsonschema.validate(rec, CHECK_REPORT)
    assert code == {"equivalent": 0, "inequivalent": 1, "inconclusive": 2}[rec["verdict"]]


def test_error_record_matches_schema(tmp_path, capsys):
    bad = tmp_path / "bad.prog"
    bad.write_text("1 +")
    _, out, _ = run(capsys, "check", "--json", str(bad))
    rec = json.loads(out)
    jsonschema.validate(rec, CHECK_REPORT)
    assert rec["verdict"] == "error"


def test_bench_empty_directory(tmp_path, capsys):
    code, out, _ = run(capsys, "bench", str(tmp_path))
    assert code == 0
    assert out.splitlines()[0].startswith("config")
    assert "default     0 | 0" in out


def test_bench_report(capsys):
    report = bench(CORPUS, Options())
    jsonschema.validate(report, BENCH_REPORT)
    assert [c["name"] for c in report["configs"]] == ["default", "no-sep", "no-annot", "no-reentry", "no-upto"]
    assert report["false_verdicts"] == []
    table = bench_table(report)
    assert table.splitlines()[1].startswith("default")


def test_bench_flags_false_verdicts(tmp_path, capsys):
    (tmp_path / "wrong.prog").write_text("(* expect: eq *)\nfun () -> 0\n|||\nfun () -> 1\n")
    code, out, _ = run(capsys, "bench", str(tmp_path))
    assert code == 1 and "FALSE VERDICT" in out


def test_bench_json_and_jobs(capsys, tmp_path):
    for name in ("eq/swap", "ineq/negation", "eq/identical"):
        src = CORPUS / f"{name}.prog"
        (tmp_path / src.name).write_text(src.read_text())
    code, out, _ = run(capsys, "bench", "--json", "--jobs", "2", str(tmp_path))
    assert code == 0
    par = json.loads(out)
    jsonschema.validate(par, BENCH_REPORT)
    _, out, _ = run(capsys, "bench", "--json", str(tmp_path))
    assert strip_timing(json.loads(out)) == strip_timing(par)

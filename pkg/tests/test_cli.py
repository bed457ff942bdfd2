import subprocess
import sys

import pytest

from crashwitness.cli import EXIT_BUGS, EXIT_OK, EXIT_USAGE, main


def test_run_buggy_reports_bugs(tmp_path, capsys):
    code = main(["run", "--subject", "mini-level-hash-buggy", "--ops", "40", "--seed", "1",
                 "--out", str(tmp_path), "--baselines"])
    assert code == EXIT_BUGS
    assert "bugs (" in capsys.readouterr().out
    assert "yat_count" in (tmp_path / "stats.csv").read_text()


def test_run_fixed_is_clean(capsys):
    assert main(["run", "--subject", "mini-level-hash-fixed", "--ops", "40"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("0 bugs")


@pytest.mark.parametrize("argv", [
    [], ["run"], ["run", "--subject", "nope"], ["run", "--subject", "kv-log", "--ops", "x"],
    ["invariants"], ["run", "--subject", "kv-log", "--reuse-bias", "2"],
])
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_bad_cache_line_env(monkeypatch):
    monkeypatch.setenv("CRASHWITNESS_CACHE_LINE", "100")
    assert main(["trace", "--subject", "kv-log", "--ops", "3"]) == EXIT_USAGE


def test_trace_then_invariants_from_file(tmp_path, capsys):
    assert main(["trace", "--subject", "mini-level-hash-buggy", "--ops", "20", "--out", str(tmp_path)]) == EXIT_OK
    assert main(["invariants", "--trace", str(tmp_path / "trace.txt")]) == EXIT_OK
    from_file = capsys.readouterr().out
    assert main(["invariants", "--subject", "mini-level-hash-buggy", "--ops", "20"]) == EXIT_OK
    assert capsys.readouterr().out == from_file
    assert "RO3 P(" in from_file


def test_images_and_check(tmp_path, capsys):
    assert main(["images", "--subject", "mini-level-hash-buggy", "--ops", "30", "--out", str(tmp_path)]) == EXIT_OK
    plans = capsys.readouterr().out.splitlines()
    assert plans and all(p.startswith("PLAN ") for p in plans)
    assert len(list((tmp_path / "images").glob("*.img"))) == len(plans)
    assert main(["check", "--subject", "mini-level-hash-buggy", "--ops", "30"]) == EXIT_BUGS
    checks = capsys.readouterr().out.splitlines()
    assert len(checks) == len(plans) and any("verdict=DIVERGE" in c for c in checks)


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "crashwitness", "run", "--subject", "kv-log", "--ops", "5"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("0 bugs")

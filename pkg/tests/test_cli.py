import json
import subprocess
import sys

import pytest

from meshcop.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_honest_full_exits_zero(capsys):
    code, out, _ = run(capsys, "run", "--scenario", "full", "--mode", "honest")
    assert code == 0
    assert "mismatches: 0 of 78" in out


def test_mutation_mismatch_exits_one(capsys):
    code, out, _ = run(capsys, "run", "--scenario", "commissioner", "--mutations", "drop-noncea",
                       "--queries", "Q5a,Q6a")
    assert code == 1
    assert out.count("MISMATCH") == 2


@pytest.mark.parametrize("argv", [
    ["run", "--bogus"],
    ["run", "--mutations", "drop-everything"],
    ["run", "--queries", "Q99"],
    ["run", "--sessions", "0"],
    ["run", "--depth", "-1"],
    ["run", "--no-systematic"],
    ["frobnicate"],
    [],
    ["replay", "/nonexistent/file.trace"],
])
def test_usage_errors_exit_two(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert "usage error" in err


def test_usage_error_names_the_flag(capsys):
    _, _, err = run(capsys, "run", "--mutations", "drop-everything")
    assert "--mutations" in err and "drop-everything" in err


def test_list_queries(capsys):
    code, out, _ = run(capsys, "list-queries")
    assert code == 0
    assert len(out.splitlines()) == 79


def test_structured_output_parses(capsys):
    code, out, _ = run(capsys, "run", "--scenario", "joiner", "--mode", "honest",
                       "--format", "structured", "--queries", "Q1b,S-kek")
    assert code == 0
    doc = json.loads(out)
    assert [q["id"] for q in doc["queries"]] == ["Q1b", "S-kek"]


def test_dump_and_replay(capsys, tmp_path):
    code, out, _ = run(capsys, "run", "--scenario", "commissioner", "--mutations", "drop-noncea",
                       "--queries", "Q5a", "--dump-traces", str(tmp_path))
    (dump,) = tmp_path.iterdir()
    assert str(dump) in out
    code, replayed, _ = run(capsys, "replay", str(dump), "--check")
    assert code == 0 and replayed == dump.read_text()


def test_replay_check_detects_edits(capsys, tmp_path):
    run(capsys, "run", "--scenario", "commissioner", "--mutations", "drop-noncea",
        "--queries", "Q5a", "--dump-traces", str(tmp_path))
    (dump,) = tmp_path.iterdir()
    dump.write_text(dump.read_text().replace("# outcome:", "# outcome: edited"))
    code, _, err = run(capsys, "replay", str(dump), "--check")
    assert code == 1 and "differs" in err


def test_replay_rejects_non_dump(capsys, tmp_path):
    f = tmp_path / "x.trace"
    f.write_text("not a dump\n")
    code, _, _ = run(capsys, "replay", str(f))
    assert code == 2


def test_seeded_runs_are_byte_identical(capsys):
    argv = ["run", "--scenario", "joiner", "--seeds", "5", "--queries", "Q1b,Q4c"]
    assert run(capsys, *argv) == run(capsys, *argv)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "meshcop", "list-queries"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("Query ID |")

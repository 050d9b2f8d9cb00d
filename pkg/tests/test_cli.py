import json

import pytest

from rttcheck.cli import main

from conftest import ASSETS

TABLES = ASSETS / "tables"
SYSTEMS = ASSETS / "systems"
TRACES = ASSETS / "traces"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_ok(capsys):
    code, out, _ = run(capsys, "validate", TABLES / "stamp_pair.rtt")
    assert code == 0
    assert "ok" in out


def test_validate_dump_automaton(capsys):
    code, out, _ = run(
        capsys, "validate", "--dump-automaton", TABLES / "stall.rtt"
    )
    assert code == 0
    assert "state" in out


def test_validate_rejects_bad_tables(tmp_path, capsys):
    bad = tmp_path / "bad.rtt"
    bad.write_text("table b\ntraces t\ncolumn in t::x : bool\nrow omega { t::x = \"-\"; }\nrow 1 { t::x = \"-\"; }\n")
    code, _, err = run(capsys, "validate", bad)
    assert code == 2
    assert err.strip()


def test_validate_missing_file(capsys):
    code, _, err = run(capsys, "validate", "/nonexistent/x.rtt")
    assert code == 2
    assert err


def test_monitor_pass_and_fail(capsys):
    code, out, _ = run(
        capsys, "monitor", TABLES / "stamp_pair.rtt", TRACES / "stamp_ok.log"
    )
    assert code == 0
    assert "conforms" in out
    code, out, _ = run(
        capsys, "monitor", TABLES / "stamp_pair.rtt", TRACES / "stamp_bad.log"
    )
    assert code == 1
    assert "violation" in out


def test_monitor_not_covered(tmp_path, capsys):
    table = tmp_path / "t.rtt"
    table.write_text(
        'table t\ntraces t\ncolumn in t::go : bool\ncolumn out t::y : bool\n'
        'row 1 { t::go = "TRUE"; t::y = "-"; }\n'
    )
    log = tmp_path / "r.log"
    log.write_text("trace t\ngo=FALSE y=FALSE\n")
    code, out, _ = run(capsys, "monitor", table, log)
    assert code == 3
    assert "not covered" in out or "not_covered" in out


def test_monitor_inconclusive(tmp_path, capsys):
    table = tmp_path / "t.rtt"
    table.write_text(
        'table t\ntraces t\ncolumn in t::go : bool\ncolumn out t::y : bool\n'
        'row [2,2] { t::go = "-"; t::y = "-"; }\n'
    )
    log = tmp_path / "r.log"
    log.write_text("trace t\ngo=FALSE y=FALSE\n")
    code, out, _ = run(capsys, "monitor", table, log)
    assert code == 4
    assert "inconclusive" in out


def test_monitor_json_format(capsys):
    code, out, _ = run(
        capsys, "monitor", "--format", "json",
        TABLES / "stamp_pair.rtt", TRACES / "stamp_bad.log",
    )
    assert code == 1
    blob = json.loads(out)
    assert blob["verdict"] == "violation"
    assert blob["violation_step"] == 0


def test_verify_pass_fail_and_modes(capsys):
    stamp = TABLES / "stamp_pair.rtt"
    code, out, _ = run(
        capsys, "verify", stamp,
        "--system", f"old={SYSTEMS / 'stamp_old.rsl'}",
        "--system", f"new={SYSTEMS / 'stamp_new.rsl'}",
    )
    assert code == 0
    assert "holds" in out
    code, out, _ = run(
        capsys, "verify", stamp,
        "--system", f"old={SYSTEMS / 'stamp_old.rsl'}",
        "--system", f"new={SYSTEMS / 'stamp_new_eager_press.rsl'}",
    )
    assert code == 1
    assert "Press" in out


def test_verify_strict_stall(capsys):
    code, out, _ = run(
        capsys, "verify", TABLES / "stall.rtt", "--mode", "strict",
        "--system", f"t={SYSTEMS / 'echo.rsl'}",
    )
    assert code == 1
    assert "loop" in out


def test_verify_budget_is_inconclusive(capsys):
    code, out, _ = run(
        capsys, "verify", TABLES / "stall.rtt", "--max-states", "1",
        "--system", f"t={SYSTEMS / 'echo.rsl'}",
    )
    assert code == 4
    assert "budget" in out


def test_verify_bad_system_argument(capsys):
    code, _, err = run(
        capsys, "verify", TABLES / "stall.rtt", "--system", "no-equals-sign"
    )
    assert code == 2
    assert err


def test_verify_json_format(capsys):
    code, out, _ = run(
        capsys, "verify", TABLES / "crane_noninterference.rtt",
        "--format", "json",
        "--system", f"fst={SYSTEMS / 'crane.rsl'}",
        "--system", f"snd={SYSTEMS / 'crane.rsl'}",
    )
    assert code == 1
    blob = json.loads(out)
    assert blob["holds"] is False
    assert blob["counterexample"]["kind"] == "violation"


def test_emit_smv_matches_golden(tmp_path, capsys):
    out_path = tmp_path / "m.smv"
    code, _, _ = run(
        capsys, "emit-smv", TABLES / "stamp_pair.rtt",
        "--system", f"old={SYSTEMS / 'stamp_old.rsl'}",
        "--system", f"new={SYSTEMS / 'stamp_new.rsl'}",
        "-o", out_path, "--manifest", tmp_path / "m.manifest.json",
    )
    assert code == 0
    assert out_path.read_bytes() == (
        ASSETS / "golden" / "stamp_pair.smv"
    ).read_bytes()
    manifest = json.loads((tmp_path / "m.manifest.json").read_text())
    assert manifest["states"] == 5


def test_emit_smv_to_stdout(capsys):
    code, out, _ = run(
        capsys, "emit-smv", TABLES / "stall.rtt",
        "--system", f"t={SYSTEMS / 'echo.rsl'}",
    )
    assert code == 0
    assert out.startswith("-- rttcheck model")


def test_emit_smv_wiring_error(capsys):
    code, _, err = run(
        capsys, "emit-smv", TABLES / "stall.rtt",
        "--system", f"t={SYSTEMS / 'crane.rsl'}",
    )
    assert code == 2
    assert err


def test_instance_membership(capsys):
    code, out, _ = run(
        capsys, "instance",
        TABLES / "demo_concrete_fixed.rtt", TABLES / "demo_family.rtt",
    )
    assert code == 0
    assert "p=3" in out.replace(" ", "")
    code, out, _ = run(
        capsys, "instance",
        TABLES / "demo_concrete.rtt", TABLES / "demo_family.rtt",
    )
    assert code == 1
    assert "not" in out


def test_instantiate_roundtrips_through_instance(tmp_path, capsys):
    out_path = tmp_path / "member.rtt"
    code, _, _ = run(
        capsys, "instantiate", TABLES / "demo_family.rtt",
        "--bind", "p=3", "--count", "g1=1", "--count", "g2=1",
        "-o", out_path,
    )
    assert code == 0
    assert out_path.exists()
    code, out, _ = run(
        capsys, "instance", out_path, TABLES / "demo_family.rtt"
    )
    assert code == 0


def test_instantiate_rejects_out_of_domain_binding(capsys):
    code, _, err = run(
        capsys, "instantiate", TABLES / "demo_family.rtt", "--bind", "p=99"
    )
    assert code == 2
    assert err


def test_usage_error_for_unknown_subcommand(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2

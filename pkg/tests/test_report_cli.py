import json
import re
import subprocess
import sys
from dataclasses import replace

import jsonschema
import pytest

from rmtmap.cli import main
from rmtmap.hw_spec import hw_spec_to_json
from rmtmap.report import compile_program, dumps, explain, render_text, report_schema

from conftest import FIXTURES, HW_PATH, ROOT, fixture_path

HW = str(HW_PATH)
ALL = ["qos_modifier", "l2l3_simple", "l2l3_complex", "traffic_anony", "bifurcation",
       "reject_same_path_stateful", "empty"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# ---------------------------------------------------------------------------
# exit codes


def test_map_accepts_qos(capsys):
    code, out, _ = run(capsys, "map", fixture_path("qos_modifier"), HW)
    assert code == 0
    assert json.loads(out)["verdict"]["status"] == "Accepted"


def test_map_rejects(capsys):
    code, out, err = run(capsys, "map", fixture_path("reject_same_path_stateful"), HW)
    assert code == 3
    assert "same-path stateful" in err
    assert json.loads(out)["verdict"]["reason"] == "same-path stateful"


def test_map_missing_hw(capsys, tmp_path):
    code, _, err = run(capsys, "map", fixture_path("qos_modifier"), tmp_path / "nope.json")
    assert code == 2 and "input error" in err


def test_map_bad_program(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "map", bad, HW)[0] == 2
    bad.write_text(json.dumps({"nir_version": 1, "name": "x"}))
    assert run(capsys, "map", bad, HW)[0] == 2


def test_map_bad_config(capsys):
    assert run(capsys, "map", fixture_path("qos_modifier"), HW, "--packing-factor", "0")[0] == 2


def test_map_output_file(capsys, tmp_path):
    out_file = tmp_path / "r.json"
    code, out, _ = run(capsys, "map", fixture_path("qos_modifier"), HW, "-o", out_file)
    assert code == 0
    assert json.loads(out_file.read_text())["program"] == "qos_modifier"
    assert out.startswith("program")


def test_map_bmv2_input(capsys):
    code, out, _ = run(capsys, "map", FIXTURES / "bmv2" / "qos_modifier.bmv2.json", HW, "--no-timings")
    code2, out2, _ = run(capsys, "map", fixture_path("qos_modifier"), HW, "--no-timings")
    assert code == code2 == 0
    assert out == out2


def test_action_mode_flag(capsys):
    code, out, _ = run(capsys, "map", fixture_path("qos_modifier"), HW, "--action-mode", "per-entry")
    assert code == 0
    assert json.loads(out)["config"]["action_mode"] == "per_match_entry"


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rmtmap.cli", "validate-hw", HW], capture_output=True, text=True)
    assert proc.returncode == 0 and "ok" in proc.stdout


# ---------------------------------------------------------------------------
# report contents


@pytest.mark.parametrize("name", ALL)
def test_reports_match_schema(load, hw, name):
    report = compile_program(load(name), hw)
    jsonschema.validate(report, report_schema())
    assert list(report) == ["program", "hardware", "config", "phv", "parser", "tdg", "stages", "totals", "verdict",
                            "timings_ms"]


def test_rejected_report_keeps_earlier_sections(load, hw):
    report = compile_program(load("reject_same_path_stateful"), hw)
    assert report["verdict"]["phase"] == "tdg"
    assert report["phv"] is not None and report["parser"] is not None
    assert report["stages"] is None and report["totals"] is None


def test_parser_rejection_phase(qos, hw):
    tiny = replace(hw, parser=replace(hw.parser, tcam_depth=4))
    report = compile_program(qos, tiny)
    v = report["verdict"]
    assert (v["status"], v["reason"], v["phase"]) == ("Rejected", "parser capacity", "parser")
    assert report["parser"]["accepted"] is False
    assert report["tdg"] is None


def test_phv_rejection_phase(qos, hw):
    small = replace(hw, phv_classes=tuple(replace(c, count=4) for c in hw.phv_classes))
    report = compile_program(qos, small)
    assert report["verdict"]["phase"] == "header"
    assert report["phv"] is None and report["parser"] is None
    jsonschema.validate(report, report_schema())


def test_timings(qos, hw):
    timed = compile_program(qos, hw)
    assert all(isinstance(v, float) for v in timed["timings_ms"].values())
    assert all(v is None for v in compile_program(qos, hw, timings=False)["timings_ms"].values())


def test_no_timings_byte_identical(capsys):
    outs = {run(capsys, "map", fixture_path("l2l3_complex"), HW, "--no-timings")[1] for _ in range(3)}
    assert len(outs) == 1


def test_text_derived_from_json(qos, hw):
    report = compile_program(qos, hw, timings=False)
    text = render_text(report)
    again = render_text(json.loads(dumps(report)))
    assert text == again
    assert "3 stages, 6 TCAM blocks, 4 SRAM blocks, latency 38 cycles" in text
    assert "49x8b, 17x16b, 24x32b" in text


def test_text_for_rejection(load, hw):
    text = render_text(compile_program(load("reject_same_path_stateful"), hw))
    assert "Rejected" in text and "same-path stateful" in text


def test_report_totals_match_stages(load, hw):
    for name in ("qos_modifier", "l2l3_complex"):
        r = compile_program(load(name), hw)
        assert r["totals"]["stages"] == len(r["stages"])
        assert r["totals"]["tcam_blocks"] == sum(s["tcam_blocks"] for s in r["stages"])


# ---------------------------------------------------------------------------
# explain


def dot_counts(text):
    nodes = len(re.findall(r"shape=(box|diamond)", text))
    edges = len(re.findall(r"->", text))
    return nodes, edges


@pytest.mark.parametrize("name,nodes,edges", [("qos_modifier", 16, 20), ("l2l3_simple", 24, 38), ("empty", 0, 0)])
def test_explain_dot(capsys, name, nodes, edges):
    code, out, _ = run(capsys, "explain", fixture_path(name), HW, "--format", "dot")
    assert code == 0
    assert dot_counts(out) == (nodes, edges)
    assert out.count("digraph") == 2


def test_explain_json(qos, hw, capsys):
    code, out, _ = run(capsys, "explain", fixture_path("qos_modifier"), HW)
    data = json.loads(out)
    assert data == json.loads(json.dumps(explain(qos, hw)))
    assert [c["states"] for c in data["parser"]["clusters"]] == [
        ["start", "parse_ethernet", "parse_ipv4", "parse_control"], ["parse_ipv6"]]


def test_map_dot(capsys):
    code, out, _ = run(capsys, "map", fixture_path("qos_modifier"), HW, "--format", "dot")
    assert code == 0 and "stage" in out


# ---------------------------------------------------------------------------
# validation commands


def test_validate_hw_ok(capsys):
    code, out, _ = run(capsys, "validate-hw", HW)
    assert code == 0 and "32 stages" in out


def test_validate_hw_violation(capsys, hw, tmp_path):
    # make the match SRAM larger than the SRAM it lives in
    bad_hw = replace(hw, stages=tuple(replace(s, sram_mat=replace(s.sram_mat, block_count=500)) for s in hw.stages))
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(hw_spec_to_json(bad_hw)))
    code, _, err = run(capsys, "validate-hw", path)
    assert code == 2 and "sram" in err.lower()


def test_validate_ir(capsys):
    code, out, _ = run(capsys, "validate-ir", FIXTURES / "bmv2" / "qos_modifier.bmv2.json")
    assert code == 0
    assert "qos_modifier: ok" in out and "5 parse states" in out


# ---------------------------------------------------------------------------
# committed artifacts stay in sync


def test_fixtures_in_sync():
    proc = subprocess.run([sys.executable, str(ROOT / "scripts" / "make_fixtures.py"), "--check"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


def test_goldens_in_sync(load, hw):
    sys.path.insert(0, str(ROOT / "scripts"))
    try:
        import run_benchmarks
    finally:
        sys.path.pop(0)
    goldens = json.loads((FIXTURES / "goldens.json").read_text())
    assert list(goldens) == run_benchmarks.BENCHMARKS
    for name, want in goldens.items():
        assert run_benchmarks.row(compile_program(load(name), hw, timings=False)) == want, name

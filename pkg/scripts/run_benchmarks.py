"""Compile every benchmark fixture and print the result tables.

    python3 scripts/run_benchmarks.py                  # print tables
    python3 scripts/run_benchmarks.py --json           # machine-readable rows
    python3 scripts/run_benchmarks.py --write-goldens  # refresh fixtures/goldens.json
    python3 scripts/run_benchmarks.py --repeat 20      # median wall-clock per phase

Goldens hold only deterministic numbers. Timings are never written there.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from pathlib import Path

from rmtmap.hw_spec import read_hw_spec
from rmtmap.ir_model import read_ir
from rmtmap.report import compile_program

ROOT = Path(__file__).resolve().parent.parent
HW = ROOT / "fixtures" / "hw" / "rmt_v1model_32.json"
GOLDENS = ROOT / "fixtures" / "goldens.json"
BENCHMARKS = ["qos_modifier", "l2l3_simple", "l2l3_complex", "traffic_anony", "bifurcation",
              "reject_same_path_stateful", "empty"]


def row(report: dict) -> dict:
    phv, parser, tdg, tot = report["phv"], report["parser"], report["tdg"], report["totals"]
    return {
        "verdict": report["verdict"]["status"],
        "reason": report["verdict"]["reason"],
        "phv_fields": phv["fields"] if phv else None,
        "header_bits": phv["header_bits"] if phv else None,
        "container_bits": phv["container_bits"] if phv else None,
        "waste_pct": phv["waste_pct"] if phv else None,
        "parse_states": parser["states"] if parser else None,
        "parse_edges": parser["edges"] if parser else None,
        "parser_entries": parser["entry_count"] if parser else None,
        "tdg_nodes": tdg["nodes"] if tdg else None,
        "tdg_edges": tdg["edges"] if tdg else None,
        "stages": tot["stages"] if tot else None,
        "tcam_blocks": tot["tcam_blocks"] if tot else None,
        "sram_blocks": tot["sram_blocks"] if tot else None,
        "latency_cycles": tot["latency_cycles"] if tot else None,
    }


def fmt(v) -> str:
    return "-" if v is None else str(v)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--json", action="store_true")
    ap.add_argument("--write-goldens", action="store_true")
    ap.add_argument("--repeat", type=int, default=1)
    args = ap.parse_args(argv)

    hw = read_hw_spec(HW)
    rows, times = {}, {}
    for name in BENCHMARKS:
        ir = read_ir(ROOT / "fixtures" / f"{name}.nir.json")
        samples = [compile_program(ir, hw)["timings_ms"] for _ in range(args.repeat)]
        rows[name] = row(compile_program(ir, hw, timings=False))
        times[name] = {
            k: statistics.median(s[k] for s in samples) if samples[0][k] is not None else None
            for k in ("header", "parser", "tdg")
        }

    if args.write_goldens:
        GOLDENS.write_text(json.dumps(rows, indent=2) + "\n")
        print(f"wrote {GOLDENS.relative_to(ROOT)}", file=sys.stderr)
    if args.json:
        print(json.dumps({"rows": rows, "timings_ms": times}, indent=2))
        return 0

    print(f"{'program':<26}{'fields':>7}{'hdr b':>7}{'cont b':>8}{'waste%':>8}"
          f"{'st/ed':>8}{'entries':>8}{'nodes/edges':>13}{'stages':>7}{'tcam':>6}{'sram':>6}{'cycles':>7}  verdict")
    for name, r in rows.items():
        se = f"{fmt(r['parse_states'])}/{fmt(r['parse_edges'])}"
        ne = f"{fmt(r['tdg_nodes'])}/{fmt(r['tdg_edges'])}"
        print(f"{name:<26}{fmt(r['phv_fields']):>7}{fmt(r['header_bits']):>7}{fmt(r['container_bits']):>8}"
              f"{fmt(r['waste_pct']):>8}{se:>8}{fmt(r['parser_entries']):>8}{ne:>13}{fmt(r['stages']):>7}"
              f"{fmt(r['tcam_blocks']):>6}{fmt(r['sram_blocks']):>6}{fmt(r['latency_cycles']):>7}  "
              f"{r['verdict']}{' (' + r['reason'] + ')' if r['reason'] else ''}")
    print()
    print(f"{'program':<26}{'header ms':>11}{'parser ms':>11}{'tdg ms':>11}")
    for name, t in times.items():
        print(f"{name:<26}" + "".join(f"{fmt(t[k]):>11}" for k in ("header", "parser", "tdg")))
    return 0


if __name__ == "__main__":
    sys.exit(main())

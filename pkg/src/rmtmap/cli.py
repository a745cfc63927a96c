"""Command-line driver.

    rmtmap map PROGRAM HW [--format json|text|dot] [-o FILE]
    rmtmap explain PROGRAM HW [--format json|dot]
    rmtmap validate-hw HW
    rmtmap validate-ir PROGRAM

PROGRAM may be NIR or BMv2-style compiler JSON; the latter is recognised
by its top-level ``pipelines`` key and normalised first.

Exit codes: 0 accepted or valid, 2 bad input, 3 rejected.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import InputError, Rejection
from .hw_spec import read_hw_spec, validate_hw_spec
from .ir_model import ProgramIr, load_ir
from .report import compile_program, dot_parser, dot_tdg, dumps, explain, render_dot, render_text
from .tdg_map import MapConfig

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_REJECTED = 3


def load_program(path: str) -> ProgramIr:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(path, exc.strerror or str(exc)) from None
    except json.JSONDecodeError as exc:
        raise InputError(path, f"not JSON: {exc}") from None
    if isinstance(doc, dict) and "pipelines" in doc:
        from .bmv2 import bmv2_to_nir

        doc = bmv2_to_nir(doc)
    return load_ir(doc)


def load_hw(path: str):
    try:
        return read_hw_spec(path)
    except OSError as exc:
        raise InputError(path, exc.strerror or str(exc)) from None


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run_map(args) -> int:
    ir = load_program(args.program)
    hw = load_hw(args.hw)
    cfg = MapConfig(
        packing_factor=args.packing_factor,
        action_entry_cap=args.action_entries,
        action_entry_mode="fixed" if args.action_mode == "fixed" else "per_match_entry",
    )
    report = compile_program(ir, hw, cfg, timings=not args.no_timings)
    render = {"json": dumps, "text": render_text, "dot": render_dot}[args.format]
    _emit(render(report), args.output)
    if args.output:
        # the file holds the requested format; the terminal gets the summary
        sys.stdout.write(render_text(report))
    v = report["verdict"]
    if v["status"] != "Accepted":
        print(f"rejected: {v['reason']}: {v['detail']}", file=sys.stderr)
        return EXIT_REJECTED
    return EXIT_OK


def run_explain(args) -> int:
    ir = load_program(args.program)
    hw = load_hw(args.hw)
    data = explain(ir, hw)
    if args.format == "dot":
        text = dot_parser(data["parser"]["clusters"]) + dot_tdg(data["tdg"]["gresses"])
    else:
        text = json.dumps(data, indent=2) + "\n"
    _emit(text, args.output)
    return EXIT_OK


def run_validate_hw(args) -> int:
    hw = load_hw(args.hw)
    problems = validate_hw_spec(hw)
    for v in problems:
        print(f"{v.path}: {v.message}", file=sys.stderr)
    if problems:
        return EXIT_INPUT
    print(f"{hw.name}: ok ({hw.total_stages} stages, {hw.phv_capacity_bits} PHV bits)")
    return EXIT_OK


def run_validate_ir(args) -> int:
    ir = load_program(args.program)
    n_in, n_eg = len(ir.ingress_mats), len(ir.egress_mats)
    print(f"{ir.name}: ok ({len(ir.header_fields)} fields, {len(ir.parse_graph.states)} parse states, "
          f"{n_in} ingress / {n_eg} egress MATs)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rmtmap", description="Map a P4 program onto an RMT switch.")
    sub = ap.add_subparsers(dest="command", required=True)

    m = sub.add_parser("map", help="run the full mapping and write a report")
    m.add_argument("program")
    m.add_argument("hw")
    m.add_argument("--packing-factor", type=int, default=MapConfig.packing_factor)
    m.add_argument("--action-entries", type=int, default=MapConfig.action_entry_cap)
    m.add_argument("--action-mode", choices=("fixed", "per-entry"), default="fixed")
    m.add_argument("--format", choices=("json", "text", "dot"), default="json")
    m.add_argument("--no-timings", action="store_true", help="leave timings null for byte-stable output")
    m.add_argument("-o", "--output")
    m.set_defaults(func=run_map)

    e = sub.add_parser("explain", help="dump parser clusters and the leveled TDG")
    e.add_argument("program")
    e.add_argument("hw")
    e.add_argument("--format", choices=("json", "dot"), default="json")
    e.add_argument("-o", "--output")
    e.set_defaults(func=run_explain)

    h = sub.add_parser("validate-hw", help="check a hardware specification")
    h.add_argument("hw")
    h.set_defaults(func=run_validate_hw)

    i = sub.add_parser("validate-ir", help="check a program IR")
    i.add_argument("program")
    i.set_defaults(func=run_validate_ir)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:  # bad MapConfig values
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Rejection as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED


if __name__ == "__main__":
    sys.exit(main())

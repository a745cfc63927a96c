"""End-to-end compilation and the report it produces.

``compile_program`` runs header mapping, parser mapping and TDG mapping in
that order and returns a plain JSON-ready dict. A rejection in any phase
stops the run; the sections computed before it stay in the report and the
later ones are ``None``. ``render_text`` and ``render_dot`` only look at that
dict, so the text summary can never disagree with the JSON.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict
from importlib import resources

from .errors import Rejection
from .header_mapper import PhvPool, map_headers, map_program_headers, phv_stats
from .hw_spec import HardwareSpec
from .ir_model import ProgramIr
from .parse_mapper import check_parser_capacity, cluster_parse_graph, generate_state_table
from .tdg_build import Tdg, prepare_tdg
from .tdg_map import (MapConfig, combined_stages, compute_latency, map_program, validate_mapping,
                      validate_shared_budgets)

GRESSES = ("ingress", "egress")
LATENCY_MODEL = "one stage plus the dependency delay at each occupied-stage boundary, summed over gresses"


def report_schema() -> dict:
    return json.loads(resources.files("rmtmap").joinpath("schemas/report.schema.json").read_text())


# ---------------------------------------------------------------------------
# section builders


def _phv_section(alloc, hw: HardwareSpec) -> dict:
    out = phv_stats(alloc, PhvPool.from_hw(hw), exclude_gress=("ingress-aux", "egress-aux"))
    out["assignments"] = [
        {"field": a.field, "gress": a.gress, "bit_width": a.bit_width, "containers": list(a.containers)}
        for a in alloc.assignments
    ]
    return out


def _parser_section(ir: ProgramIr, clusters, entries, verdict, p) -> dict:
    def hexpair(v, m):
        return [hex(v), hex(m)]

    def steps(bits):
        # the window advances at most max_move_ahead_bits per shift
        return -(-bits // p.max_move_ahead_bits)

    return {
        "states": len(ir.parse_graph.states),
        "edges": ir.parse_graph.edge_count,
        "clusters": [
            {"id": c.id, "states": list(c.member_states), "extract_bits": c.total_extract_bits,
             "lookup_fields": [[f, w] for f, w in c.lookup_fields]}
            for c in clusters
        ],
        "entries": [
            {"cluster": e.current_cluster, "match": [hexpair(v, m) for v, m in e.match_values],
             "next": e.next_cluster, "extract": [list(d) for d in e.extract_directives],
             "move_ahead_bits": e.move_ahead_bits, "shift_steps": steps(e.move_ahead_bits), "path": list(e.path)}
            for e in entries
        ],
        "entry_count": verdict.entries,
        "tcam_depth": verdict.depth,
        "utilization_pct": verdict.utilization_pct,
        "accepted": verdict.accepted,
    }


def tdg_json(t: Tdg, levels) -> dict:
    lv = levels.map if levels is not None else {}
    return {
        "nodes": [
            {"name": n.name, "kind": "conditional" if n.is_conditional else "table",
             "level": lv.get(n.name), "origin": n.origin or n.name, "part": n.part,
             "keys": [[k.field, k.kind] for k in n.keys], "size": n.size,
             "stateful": sorted(n.indirect | n.direct)}
            for n in t.nodes
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "kinds": sorted(k.value for k in e.kinds),
             "strictest": e.strictest.value, "control_flow": e.control_flow}
            for e in t.edges
        ],
    }


def _tdg_section(parts: dict) -> dict:
    out = {"nodes": 0, "edges": 0, "gresses": {}}
    for gress, (t, levels) in parts.items():
        g = tdg_json(t, levels)
        g["node_count"] = len(t.nodes)
        g["edge_count"] = len(t.edges)
        g["max_level"] = levels.max_level
        out["gresses"][gress] = g
        out["nodes"] += len(t.nodes)
        out["edges"] += len(t.edges)
    return out


def _stage_json(s) -> dict:
    d = asdict(s)
    d["sram_blocks"] = s.sram_blocks
    d["mats"] = list(s.mats)
    d["field_writes"] = [list(fw) for fw in s.field_writes]
    return d


def _mapping_sections(mappings: dict, hw: HardwareSpec) -> tuple[list, dict]:
    stages = [_stage_json(s) for s in combined_stages(mappings.values()) if s.mats]
    by_gress = {}
    latency = 0
    for gress, m in mappings.items():
        gj = m.to_json()
        by_gress[gress] = {
            "stages": m.occupied_stages,
            "latency_cycles": m.latency_cycles if m.placements else 0,
            "placements": gj["placements"],
            "transitions": gj["transitions"],
        }
        if m.placements:
            latency += compute_latency(m, hw.delay)
    if not any(m.placements for m in mappings.values()):
        latency = hw.delay.stage_cycle_length
    totals = {
        "stages": len(stages),
        "tcam_blocks": sum(s["tcam_blocks"] for s in stages),
        "sram_blocks": sum(s["sram_blocks"] for s in stages),
        "latency_cycles": latency,
        "latency_source": "model",
        "latency_model": LATENCY_MODEL,
        "gresses": by_gress,
    }
    return stages, totals


# ---------------------------------------------------------------------------
# driver


def compile_program(ir: ProgramIr, hw: HardwareSpec, cfg: MapConfig | None = None, *,
                    timings: bool = True, hw_name: str | None = None) -> dict:
    """Run every phase and return the report dict.

    Input errors propagate. A ``Rejection`` is caught and recorded in the
    verdict together with the phase that raised it.
    """
    cfg = cfg or MapConfig()
    report = {
        "program": ir.name,
        "hardware": hw_name or hw.name,
        "config": {"packing_factor": cfg.packing_factor, "action_entries": cfg.action_entry_cap,
                   "action_mode": cfg.action_entry_mode},
        "phv": None,
        "parser": None,
        "tdg": None,
        "stages": None,
        "totals": None,
        "verdict": {"status": "Accepted", "reason": None, "detail": None, "phase": None},
        "timings_ms": {"header": None, "parser": None, "tdg": None},
    }
    phase = "header"
    clock = {}

    def tick(name, t0):
        clock[name] = round((time.perf_counter() - t0) * 1000, 3)

    try:
        t0 = time.perf_counter()
        alloc = map_program_headers(ir, hw)
        report["phv"] = _phv_section(alloc, hw)
        tick("header", t0)

        phase = "parser"
        t0 = time.perf_counter()
        clusters = cluster_parse_graph(ir.parse_graph, hw.parser)
        entries = generate_state_table(clusters, ir.parse_graph, hw.parser)
        verdict = check_parser_capacity(entries, hw.parser)
        report["parser"] = _parser_section(ir, clusters, entries, verdict, hw.parser)
        tick("parser", t0)
        if not verdict.accepted:
            raise Rejection("parser capacity", verdict.reason)

        phase = "tdg"
        t0 = time.perf_counter()
        parts = {g: prepare_tdg(ir, g) for g in GRESSES}
        for g, (t, _) in parts.items():
            if t.aux_fields:
                alloc = alloc.merged(map_headers(t.aux_fields, alloc.pool_after, f"{g}-aux"))
        report["phv"] = _phv_section(alloc, hw)
        report["tdg"] = _tdg_section(parts)
        mappings = map_program(parts, hw, cfg)
        problems = validate_shared_budgets(mappings.values(), hw)
        for g, m in mappings.items():
            problems += validate_mapping(m, parts[g][0], hw, cfg.packing_factor)
        report["stages"], report["totals"] = _mapping_sections(mappings, hw)
        tick("tdg", t0)
        if problems:
            raise Rejection("validator", "; ".join(f"{v.path}: {v.message}" for v in problems))
    except Rejection as exc:
        report["verdict"] = {"status": "Rejected", "reason": exc.reason, "detail": exc.detail, "phase": phase}
    if timings:
        report["timings_ms"].update(clock)
    return report


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


# ---------------------------------------------------------------------------
# renderers


def render_text(report: dict) -> str:
    lines = [f"program   {report['program']}  on  {report['hardware']}"]
    v = report["verdict"]
    if v["status"] == "Accepted":
        lines.append("verdict   Accepted")
    else:
        lines.append(f"verdict   Rejected ({v['reason']}) in {v['phase']} phase: {v['detail']}")
    phv = report["phv"]
    if phv is not None:
        lines.append(
            f"phv       {phv['fields']} fields, {phv['header_bits']} header bits -> "
            f"{phv['container_bits']} container bits, waste {phv['waste_pct']:.2f}%"
        )
        used = ", ".join(f"{c['used']}x{w}b" for w, c in phv["per_class"].items())
        lines.append(f"          containers {used}; aux fields {phv['aux_fields']}")
    p = report["parser"]
    if p is not None:
        lines.append(
            f"parser    {p['states']} states, {p['edges']} edges -> {len(p['clusters'])} clusters, "
            f"{p['entry_count']}/{p['tcam_depth']} TCAM entries ({p['utilization_pct']}%)"
        )
    tdg = report["tdg"]
    if tdg is not None:
        per = ", ".join(f"{g} {d['node_count']}/{d['edge_count']}" for g, d in tdg["gresses"].items())
        lines.append(f"tdg       {tdg['nodes']} nodes, {tdg['edges']} edges ({per})")
    tot = report["totals"]
    if tot is not None:
        lines.append(
            f"pipeline  {tot['stages']} stages, {tot['tcam_blocks']} TCAM blocks, "
            f"{tot['sram_blocks']} SRAM blocks, latency {tot['latency_cycles']} cycles (model)"
        )
        for s in report["stages"]:
            lines.append(
                f"  stage {s['index']:>2}  tcam {s['tcam_blocks']:>3}  sram {s['sram_blocks']:>3}  "
                f"{' '.join(s['mats'])}"
            )
    t = report["timings_ms"]
    if any(x is not None for x in t.values()):
        lines.append("timings   " + ", ".join(f"{k} {x} ms" for k, x in t.items() if x is not None))
    return "\n".join(lines) + "\n"


def _q(s) -> str:
    return json.dumps(str(s))


def dot_tdg(gresses: dict, stage_of: dict | None = None) -> str:
    """DOT text for the TDG section of a report (or of ``explain`` output)."""
    out = ["digraph tdg {", "  rankdir=LR;"]
    for g, d in gresses.items():
        out.append(f"  subgraph {_q('cluster_' + g)} {{")
        out.append(f"    label={_q(g)};")
        for n in d["nodes"]:
            label = f"{n['name']}\\nlevel {n['level']}"
            if stage_of and n["name"] in stage_of.get(g, {}):
                label += f"\\nstage {stage_of[g][n['name']]}"
            shape = "diamond" if n["kind"] == "conditional" else "box"
            out.append(f"    {_q(g + '/' + n['name'])} [label=\"{label}\", shape={shape}];")
        for e in d["edges"]:
            style = "solid" if e["control_flow"] else "dashed"
            out.append(
                f"    {_q(g + '/' + e['src'])} -> {_q(g + '/' + e['dst'])} "
                f"[label={_q(','.join(e['kinds']))}, style={style}];"
            )
        out.append("  }")
    out.append("}")
    return "\n".join(out) + "\n"


def dot_parser(clusters: list) -> str:
    out = ["digraph parser {"]
    for c in clusters:
        out.append(f"  subgraph {_q('cluster_' + str(c['id']))} {{")
        out.append(f"    label={_q('cluster ' + str(c['id']))};")
        for s in c["states"]:
            out.append(f"    {_q(s)};")
        out.append("  }")
    out.append("}")
    return "\n".join(out) + "\n"


def render_dot(report: dict) -> str:
    if report["tdg"] is None:
        return dot_tdg({})
    stage_of = {}
    for g, d in (report["totals"] or {}).get("gresses", {}).items():
        stage_of[g] = {p["mat"]: ",".join(str(c["stage"]) for c in p["stages"]) for p in d["placements"]}
    return dot_tdg(report["tdg"]["gresses"], stage_of)


def explain(ir: ProgramIr, hw: HardwareSpec) -> dict:
    """Parser clusters and leveled TDGs, without placing anything."""
    clusters = cluster_parse_graph(ir.parse_graph, hw.parser)
    entries = generate_state_table(clusters, ir.parse_graph, hw.parser)
    verdict = check_parser_capacity(entries, hw.parser)
    parts = {g: prepare_tdg(ir, g) for g in GRESSES}
    return {
        "program": ir.name,
        "parser": _parser_section(ir, clusters, entries, verdict, hw.parser),
        "tdg": _tdg_section(parts),
    }

import itertools
import math
from dataclasses import replace

import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from rmtmap.builder import C, ETHERNET, F, P, S, action, header, prim, program, register, state, table
from rmtmap.errors import EntryTooWide, Rejection
from rmtmap.hw_spec import SramSpec, TcamMatSpec
from rmtmap.ir_model import load_ir
from rmtmap.tdg_build import STAGE_SEPARATING, prepare_tdg
from rmtmap.tdg_map import (EXACT_ENTRY_OVERHEAD_BITS, MapConfig, MatPlacement, PipelineMapping, StageChunk,
                            action_entries, combined_stages, compute_latency, map_program, map_tdg, pack_entries,
                            stage_allocations, stage_transitions, tcam_blocks, validate_mapping,
                            validate_shared_budgets)

SRAM = SramSpec(port_width_bits=80, port_count=8, block_count=106, block_width_bits=80, block_depth=1024)
TCAM = TcamMatSpec(match_xbar_bits=640, block_count=16, block_width_bits=40, block_depth=2048)


def mapped(ir, hw, cfg=None, gress="ingress"):
    t, lv = prepare_tdg(ir, gress)
    return t, map_tdg(t, lv, hw, cfg)


def mini(mats, root, actions, stateful=(), meta=(), egress=(), egress_root=None):
    hdrs = [header("ethernet", ETHERNET),
            header("meta", [("a", 8), ("b", 8), ("c", 16), ("d", 32), ("idx", 7)] + list(meta), metadata=True)]
    return load_ir(program("mini", hdrs, [state("s", "ethernet", transitions=[(None, "accept")])], "s",
                           stateful, actions, mats, root, egress, egress_root))


# ---------------------------------------------------------------------------
# packing


@pytest.mark.parametrize("width,count,p_f,expect", [
    (40, 4000, 2, (1, 2, 2)),
    (80, 1024, 2, (1, 1, 1)),
    (120, 1024, 2, (2, 1, 2)),
    (120, 1024, 1, (2, 1, 2)),  # wider than one block: narrowest gang
    (16, 5, 2, (1, 5, 1)),
])
def test_pack_examples(width, count, p_f, expect):
    p = pack_entries(width, count, SRAM, p_f)
    assert (p.unit, p.per_row, p.blocks) == expect


def pack_oracle(width, count, p_f, s_w=80, depth=1024):
    """Every unit size, keep the cheapest; ties go to the narrower unit."""
    best = None
    for u in range(1, p_f + 1):
        per_row = u * s_w // width
        if per_row:
            blocks = u * math.ceil(count / (per_row * depth))
            if best is None or blocks < best[2]:
                best = (u, per_row, blocks)
    if best is None:
        g = math.ceil(width / s_w)
        best = (g, 1, g * math.ceil(count / depth))
    return best


@settings(max_examples=400, deadline=None)
@given(st.integers(1, 512), st.integers(1, 100_000), st.integers(1, 4))
def test_pack_matches_enumeration(width, count, p_f):
    p = pack_entries(width, count, SRAM, p_f)
    assert (p.unit, p.per_row, p.blocks) == pack_oracle(width, count, p_f)
    assert p.per_row * p.blocks // p.unit * SRAM.block_depth >= count


def test_pack_too_wide():
    with pytest.raises(EntryTooWide):
        pack_entries(80 * 107, 1, SRAM, 2)


def test_tcam_blocks():
    assert tcam_blocks(32, 500, TCAM) == 1
    assert tcam_blocks(80, 500, TCAM) == 2
    assert tcam_blocks(32, 2049, TCAM) == 2
    assert tcam_blocks(32, 0, TCAM) == 0


def test_action_entry_modes():
    assert action_entries(50_000, MapConfig()) == 16384
    assert action_entries(50_000, MapConfig(action_entry_mode="per_match_entry")) == 50_000
    assert action_entries(10, MapConfig()) == 10


@pytest.mark.parametrize("kw", [{"packing_factor": 0}, {"action_entry_cap": 0}, {"action_entry_mode": "x"}])
def test_bad_config(kw):
    with pytest.raises(ValueError):
        MapConfig(**kw)


# ---------------------------------------------------------------------------
# placement


def test_qos_mapping(qos, hw):
    t, m = mapped(qos, hw)
    assert (m.stage_count, m.tcam_blocks, m.sram_blocks, m.latency_cycles) == (3, 6, 4, 38)
    assert validate_mapping(m, t, hw) == []


def test_empty_tdg(load, hw):
    t, m = mapped(load("empty"), hw)
    assert m.stage_count == 0 and m.placements == ()
    assert m.latency_cycles == hw.delay.stage_cycle_length == 14


def test_independent_tables_share_stage_zero(hw):
    acts = [action("nop")]
    ir = mini([table("x", [("ethernet.dstAddr", "exact")], 1000, ["nop"], {"nop": "y"}),
               table("y", [("ethernet.srcAddr", "exact")], 1000, ["nop"], {"nop": None})], "x", acts)
    t, m = mapped(ir, hw)
    assert m.placement("x").stages[0].stage == m.placement("y").stages[0].stage == 0
    assert m.latency_cycles == 14
    assert validate_mapping(m, t, hw) == []


def test_successor_pair_latency(hw):
    acts = [action("nop"), action("wa", (), [prim("assign", F("meta.a"), C(1))])]
    # y is reached only through one action of x, so the edge is control flow only
    ir = mini([table("x", [("ethernet.dstAddr", "exact")], 16, ["wa", "nop"], {"wa": "y", "nop": None}),
               table("y", [("ethernet.srcAddr", "exact")], 16, ["nop"], {"nop": None})], "x", acts)
    t, m = mapped(ir, hw)
    assert validate_mapping(m, t, hw) == []
    if m.stage_count == 2:
        assert m.latency_cycles == 15
    else:
        assert m.latency_cycles == 14


def test_match_dependency_separates(hw):
    acts = [action("wa", (), [prim("assign", F("meta.a"), C(1))]), action("nop")]
    ir = mini([table("x", [("ethernet.dstAddr", "exact")], 16, ["wa"], {"wa": "y"}),
               table("y", [("meta.a", "exact")], 16, ["nop"], {"nop": None})], "x", acts)
    t, m = mapped(ir, hw)
    assert m.placement("y").first_stage > m.placement("x").last_stage
    assert m.latency_cycles == 14 + 12


def test_tcam_overflow_moves_on(hw):
    # 17 one-block ternary tables, all independent: the 17th spills to stage 1
    acts = [action("nop")]
    names = [f"t{i}" for i in range(17)]
    mats = [table(n, [("meta.a", "ternary")], 100, ["nop"],
                  {"nop": names[i + 1] if i + 1 < 17 else None}) for i, n in enumerate(names)]
    t, m = mapped(mini(mats, "t0", acts), hw)
    firsts = [m.placement(n).first_stage for n in names]
    assert firsts.count(0) == 16 and firsts.count(1) == 1
    assert m.stages[0].tcam_blocks == 16
    assert validate_mapping(m, t, hw) == []


def test_sram_spills_to_tcam(hw):
    stages = tuple(replace(s, sram_mat=replace(s.sram_mat, block_count=0)) for s in hw.stages)
    tight = replace(hw, stages=stages)
    ir = mini([table("x", [("ethernet.dstAddr", "exact")], 100, ["nop"], {"nop": None})], "x", [action("nop")])
    t, m = mapped(ir, tight)
    c = m.placement("x").stages[0]
    assert c.sram_entries == 0 and c.tcam_entries == 100 and c.tcam_blocks == 2
    assert validate_mapping(m, t, tight) == []


def test_action_blocks(hw):
    acts = [action("set", [("v", 16)], [prim("assign", F("meta.c"), P("v"))]), action("nop")]
    ir = mini([table("x", [("ethernet.dstAddr", "exact")], 100, ["set"], {"set": "y"}),
               table("y", [("ethernet.srcAddr", "exact")], 100, ["set"], {"set": None})], "x", acts)
    t, m = mapped(ir, hw)
    assert sum(c.sram_action_blocks for p in m.placements for c in p.stages) == 2
    ir = mini([table("x", [("ethernet.dstAddr", "exact")], 100, ["nop"], {"nop": None})], "x", acts)
    t, m = mapped(ir, hw)
    assert m.placement("x").stages[0].sram_action_blocks == 0


def test_register_blocks(hw):
    acts = [action("rd", (), [prim("register_read", F("meta.a"), S("r"), F("meta.idx"))])]
    ir = mini([table("x", [("ethernet.dstAddr", "exact")], 16, ["rd"], {"rd": None})], "x", acts,
              [register("r", 8, 128)])
    t, m = mapped(ir, hw)
    assert m.placement("x").stages[0].sram_stateful_blocks == 1
    assert validate_mapping(m, t, hw) == []


def test_unavailable_extern(hw):
    acts = [action("rd", (), [prim("register_read", F("meta.a"), S("r"), F("meta.idx"))])]
    ir = mini([table("x", [("ethernet.dstAddr", "exact")], 16, ["rd"], {"rd": None})], "x", acts,
              [register("r", 128, 16)])
    with pytest.raises(Rejection) as exc:
        mapped(ir, hw)
    assert exc.value.reason == "extern unavailable"


def test_wide_key_rejected(hw):
    wide = [(f"w{i}", 32) for i in range(21)]
    acts = [action("nop")]
    ir = mini([table("x", [(f"meta.w{i}", "ternary") for i in range(21)], 16, ["nop"], {"nop": None})], "x", acts,
              meta=wide)
    with pytest.raises(Rejection) as exc:
        mapped(ir, hw)
    assert exc.value.reason == "crossbar overflow"


# ---------------------------------------------------------------------------
# latency


def test_latency_monotone_in_delays(qos, hw):
    t, m = mapped(qos, hw)
    d = hw.delay
    base = compute_latency(m, d)
    for kind in ("match", "action", "default", "successor", "reverse_match"):
        bumped = replace(d, delay_per_dependency=tuple((k, v + (5 if k == kind else 0))
                                                       for k, v in d.delay_per_dependency))
        assert compute_latency(m, bumped) >= base
    assert compute_latency(m, replace(d, stage_cycle_length=20)) == base + 6


# ---------------------------------------------------------------------------
# the validator catches hand-broken mappings


def test_validator_flags_order(qos, hw):
    t, m = mapped(qos, hw)
    e = next(e for e in t.edges if e.strictest in STAGE_SEPARATING)
    src = m.placement(e.src)
    moved = []
    for p in m.placements:
        if p.mat == e.dst:
            p = MatPlacement(p.mat, tuple(replace(c, stage=src.last_stage) for c in p.stages))
        moved.append(p)
    bad = PipelineMapping(tuple(moved), stage_allocations(moved), stage_transitions(moved, t), 0)
    assert any(v.path == "dependency order" for v in validate_mapping(bad, t, hw))


def test_validator_flags_tcb(hw):
    wide = [(f"w{i}", 32) for i in range(12)]
    acts = [action("nop")]
    mats = [table(f"x{j}", [(f"meta.w{i}", "ternary") for i in range(6 * j, 6 * j + 6)], 16, ["nop"],
                  {"nop": "x1" if j == 0 else None}) for j in range(2)]
    ir = mini(mats, "x0", acts, meta=wide)
    t, m = mapped(ir, hw)
    assert validate_mapping(m, t, hw) == []
    # both 192-bit keys fit under 640 together; shrink the crossbar in stage 2 and squeeze them there
    stages = list(hw.stages)
    stages[2] = replace(stages[2], tcam=replace(stages[2].tcam, match_xbar_bits=300))
    tight = replace(hw, stages=tuple(stages))
    moved = [MatPlacement(p.mat, tuple(replace(c, stage=2) for c in p.stages)) for p in m.placements]
    bad = PipelineMapping(tuple(moved), stage_allocations(moved), (), 0)
    assert any(v.path == "TCB overflow stage 2" for v in validate_mapping(bad, t, tight))


def test_validator_flags_missing_blocks(qos, hw):
    t, m = mapped(qos, hw)
    p = next(p for p in m.placements if p.stages[0].tcam_blocks)
    starved = [MatPlacement(q.mat, tuple(replace(c, tcam_blocks=0) for c in q.stages)) if q is p else q
               for q in m.placements]
    bad = PipelineMapping(tuple(starved), stage_allocations(starved), m.transitions, 0)
    assert any(v.path.startswith("TCAM capacity") for v in validate_mapping(bad, t, hw))


def test_validator_flags_unplaced(qos, hw):
    t, m = mapped(qos, hw)
    bad = PipelineMapping(m.placements[1:], m.stages, m.transitions, 0)
    assert any(v.path == "unplaced" for v in validate_mapping(bad, t, hw))


# ---------------------------------------------------------------------------
# random programs: accepted mappings always validate

FIELDS = [("meta.a", 8), ("meta.b", 8), ("meta.c", 16), ("meta.d", 32), ("meta.e", 8), ("meta.f", 16)]
KINDS = ["exact", "ternary", "lpm"]


@st.composite
def random_programs(draw, max_mats=8):
    n = draw(st.integers(1, max_mats))
    n_regs = draw(st.integers(0, 2))
    regs = [register(f"r{i}", draw(st.sampled_from([8, 16, 32])), draw(st.integers(1, 4096)))
            for i in range(n_regs)]
    acts, mats = [], []
    names = [f"t{i}" for i in range(n)]
    deps = 0
    written: list[str] = []
    for i, name in enumerate(names):
        # keys on header fields, plus sometimes a field an earlier table wrote
        keys = [(draw(st.sampled_from(["ethernet.dstAddr", "ethernet.srcAddr", "ethernet.etherType"])),
                 draw(st.sampled_from(KINDS)))]
        if written and deps < 4 and draw(st.booleans()):
            keys.append((draw(st.sampled_from(written)), draw(st.sampled_from(KINDS))))
            deps += 1
        dest, w = draw(st.sampled_from(FIELDS))
        prims = [prim("assign", F(dest), P("v"))]
        if regs and draw(st.booleans()):
            r = draw(st.sampled_from(regs))["name"]
            prims.append(prim("register_read", F("meta.g"), S(r), F("meta.idx")))
        acts.append(action(f"a{i}", [("v", w)], prims))
        written.append(dest)
        nxt = names[i + 1] if i + 1 < n else None
        size = draw(st.sampled_from([1, 16, 256, 1024, 5000, 40_000]))
        mats.append(table(name, keys, size, [f"a{i}"], {f"a{i}": nxt}))
    return mini(mats, names[0], acts, regs, meta=[("e", 8), ("f", 16), ("g", 32)])


def longest_separating_chain(t):
    memo = {}

    def depth(v):
        if v not in memo:
            memo[v] = max((1 + depth(e.dst) for e in t.out_edges(v) if e.strictest in STAGE_SEPARATING), default=0)
        return memo[v]

    return max((depth(n.name) for n in t.nodes), default=0)


def tight_hw(hw):
    stages = tuple(replace(s, tcam=replace(s.tcam, block_count=4), sram=replace(s.sram, block_count=20),
                           sram_mat=replace(s.sram_mat, block_count=4)) for s in hw.stages)
    return replace(hw, total_stages=12, stages=stages[:12])


def check_sound(ir, hw):
    try:
        t, lv = prepare_tdg(ir)
        m = map_tdg(t, lv, hw)
    except Rejection:
        return False
    assert validate_mapping(m, t, hw) == []
    assert m.stage_count >= longest_separating_chain(t) + 1
    assert m.latency_cycles == compute_latency(m, hw.delay)
    return True


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(random_programs())
def test_random_programs_validate(hw, ir):
    assume(check_sound(ir, hw))


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(random_programs())
def test_random_programs_validate_tight(hw, ir):
    check_sound(ir, tight_hw(hw))


def test_small_programs_exhaustive(hw):
    """Every chain of up to 6 tables over a fixed menu of key and write choices."""
    menu = [("ethernet.dstAddr", "meta.a"), ("meta.a", "meta.b"), ("meta.b", "meta.a"), ("ethernet.srcAddr", "meta.c")]
    count = 0
    for n in range(1, 7):
        for combo in itertools.product(range(len(menu)), repeat=min(n, 3)):
            picks = [menu[combo[i % len(combo)]] for i in range(n)]
            acts, mats = [], []
            for i, (key, dest) in enumerate(picks):
                acts.append(action(f"a{i}", [("v", 8)], [prim("assign", F(dest), P("v"))]))
                mats.append(table(f"t{i}", [(key, "exact")], 64, [f"a{i}"], {f"a{i}": f"t{i + 1}" if i + 1 < n else None}))
            assert check_sound(mini(mats, "t0", acts), hw)
            count += 1
    assert count == 4 + 16 + 4 * 64


# ---------------------------------------------------------------------------
# two gresses in one pipeline


def test_egress_shares_stages(hw):
    acts = [action("nop")]
    ing = [table(f"i{k}", [("meta.a", "ternary")], 100, ["nop"], {"nop": f"i{k + 1}" if k < 9 else None})
           for k in range(10)]
    eg = [table(f"e{k}", [("meta.b", "ternary")], 100, ["nop"], {"nop": f"e{k + 1}" if k < 9 else None})
          for k in range(10)]
    ir = mini(ing, "i0", acts, egress=eg, egress_root="e0")
    parts = {g: prepare_tdg(ir, g) for g in ("ingress", "egress")}
    maps = map_program(parts, hw)
    assert validate_shared_budgets(maps.values(), hw) == []
    for g, m in maps.items():
        assert validate_mapping(m, parts[g][0], hw) == []
    combined = combined_stages(maps.values())
    assert combined[0].tcam_blocks == 16
    assert sum(s.tcam_blocks for s in combined) == 20
    # mapped alone, each gress would fit in stage 0
    assert map_tdg(*parts["egress"], hw).stage_count == 1


def test_shared_budget_violation_detected(hw):
    acts = [action("nop")]
    ing = [table(f"i{k}", [("meta.a", "ternary")], 100, ["nop"], {"nop": f"i{k + 1}" if k < 9 else None})
           for k in range(10)]
    eg = [table(f"e{k}", [("meta.b", "ternary")], 100, ["nop"], {"nop": f"e{k + 1}" if k < 9 else None})
          for k in range(10)]
    ir = mini(ing, "i0", acts, egress=eg, egress_root="e0")
    alone = [map_tdg(*prepare_tdg(ir, g), hw) for g in ("ingress", "egress")]
    assert any(v.path == "TCAM overflow stage 0" for v in validate_shared_budgets(alone, hw))


# ---------------------------------------------------------------------------
# determinism


def test_deterministic(load, hw):
    ir = load("l2l3_complex")
    a = mapped(ir, hw)[1].dumps()
    b = mapped(ir, hw)[1].dumps()
    assert a == b


def test_exact_overhead_constant():
    assert EXACT_ENTRY_OVERHEAD_BITS == 8

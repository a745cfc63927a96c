import itertools
import random
from dataclasses import replace

import pytest
from hypothesis import HealthCheck, given, settings

from rmtmap.builder import ETHERNET, header, program, state
from rmtmap.errors import StateTooLarge
from rmtmap.ir_model import load_ir
from rmtmap.parse_mapper import (StateTableEntry, check_parser_capacity, cluster_parse_graph, generate_state_table,
                                 interpret_graph, simulate_table)

from strategies import parse_graphs, parse_outcome


def one_state(extract_fields):
    return load_ir(program("p", [header("h", extract_fields)], [state("s", "h", transitions=[(None, "accept")])], "s"))


def budgets_hold(c, p):
    return (c.headers_identified <= p.max_headers_per_cycle
            and c.total_extract_bits <= p.max_extract_bits
            and c.span_bits <= p.lookahead_bits
            and sum(-(-w // p.lookup_field_width_bits) for _, w in c.lookup_fields) <= p.lookup_field_count)


def test_qos_entries(qos, hw):
    cl = cluster_parse_graph(qos.parse_graph, hw.parser)
    ents = generate_state_table(cl, qos.parse_graph, hw.parser)
    assert len(qos.parse_graph.states) == 5 and qos.parse_graph.edge_count == 8
    assert len(ents) == 5
    # repo golden: the ethernet-rooted cluster absorbs three states, IPv6 stands alone
    assert [c.member_states for c in cl] == [("start", "parse_ethernet", "parse_ipv4", "parse_control"),
                                              ("parse_ipv6",)]
    assert all(budgets_hold(c, hw.parser) for c in cl)


def test_single_ethernet_state(hw):
    g = one_state(ETHERNET).parse_graph
    cl = cluster_parse_graph(g, hw.parser)
    assert len(cl) == 1
    assert len(generate_state_table(cl, g, hw.parser)) == 1


def test_state_larger_than_extraction_budget(hw):
    g = one_state([("blob", 49 * 8)]).parse_graph
    with pytest.raises(StateTooLarge) as e:
        cluster_parse_graph(g, hw.parser)
    assert e.value.state == "s"


def test_exactly_at_budget(hw):
    g = one_state([("blob", 48 * 8)]).parse_graph
    assert len(cluster_parse_graph(g, hw.parser)) == 1


def _entries(n):
    return [StateTableEntry(0, ((0, 0),) * 4, "accept", (), 0)] * n


def test_capacity_boundaries(hw):
    assert check_parser_capacity(_entries(22), hw.parser).accepted
    assert check_parser_capacity(_entries(22), hw.parser).utilization_pct == 8.59
    assert check_parser_capacity(_entries(256), hw.parser).accepted
    v = check_parser_capacity(_entries(257), hw.parser)
    assert not v.accepted and "257" in v.reason
    assert check_parser_capacity([], hw.parser).accepted


def test_empty_graph(hw, load):
    ir = load("empty")
    assert cluster_parse_graph(ir.parse_graph, hw.parser) == []
    assert generate_state_table([], ir.parse_graph, hw.parser) == []


@pytest.mark.parametrize("name,lo,hi", [("l2l3_simple", 4, 6), ("l2l3_complex", 18, 26), ("traffic_anony", 11, 15)])
def test_benchmark_entries_in_band(load, hw, name, lo, hi):
    g = load(name).parse_graph
    cl = cluster_parse_graph(g, hw.parser)
    n = len(generate_state_table(cl, g, hw.parser))
    assert lo <= n <= hi
    assert all(budgets_hold(c, hw.parser) for c in cl)


# ---------------------------------------------------------------------------
# language preservation


def packets_for(g, seed):
    fields = sorted({s.select_field.name for s in g.states if s.select_field is not None})
    if 16 ** len(fields) <= 4096:
        for values in itertools.product(range(16), repeat=len(fields)):
            yield dict(zip(fields, values))
        return
    rng = random.Random(seed)
    for _ in range(1024):
        yield {f: rng.randrange(16) for f in fields}


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(parse_graphs(max_states=6))
def test_table_matches_graph(hw, case):
    ir, _ = case
    g = ir.parse_graph
    cl = cluster_parse_graph(g, hw.parser)
    assert sorted(m for c in cl for m in c.member_states) == sorted(s.name for s in g.states)
    assert all(budgets_hold(c, hw.parser) for c in cl)
    for compact in (False, True):
        ents = generate_state_table(cl, g, hw.parser, compact=compact)
        for pkt in packets_for(g, len(ents)):
            want = parse_outcome(interpret_graph(g, pkt))
            got = parse_outcome(simulate_table(cl, ents, hw.parser, pkt))
            assert got == want, (pkt, compact)


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(parse_graphs(max_states=6))
def test_compaction_never_adds_entries(hw, case):
    ir, _ = case
    g = ir.parse_graph
    cl = cluster_parse_graph(g, hw.parser)
    assert len(generate_state_table(cl, g, hw.parser)) <= len(generate_state_table(cl, g, hw.parser, compact=False))


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(parse_graphs(max_states=5))
def test_tight_budgets_still_preserve_language(hw, case):
    ir, _ = case
    g = ir.parse_graph
    p = replace(hw.parser, max_headers_per_cycle=1, lookup_field_count=2)
    cl = cluster_parse_graph(g, p)
    assert all(len(c.member_states) <= 1 or c.headers_identified <= 1 for c in cl)
    ents = generate_state_table(cl, g, p)
    for pkt in packets_for(g, 7):
        assert parse_outcome(simulate_table(cl, ents, p, pkt)) == parse_outcome(interpret_graph(g, pkt))

"""Regenerate the NIR fixtures under fixtures/.

The QoS-Modifier program is a hand translation of the published P4 source.
The other benchmark programs are reconstructions: their published totals
(field multisets, parse graph sizes, table counts) are matched, while the
exact table bodies are not public. See fixtures/README.md.

    python scripts/make_fixtures.py          # rewrite fixtures
    python scripts/make_fixtures.py --check  # fail if anything would change
"""

from __future__ import annotations

import argparse
import difflib
import sys
from pathlib import Path

from rmtmap.builder import (C, ETHERNET, IPV4, IPV6, STANDARD_METADATA, STANDARD_METADATA_V14, TCP, UDP, VLAN, F,
                            P, S, action, cmp, cond, header, hit, prim, program, register, state, table, valid)
from rmtmap.ir_model import dump_ir, load_ir

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "fixtures"

SERVER_IP = 0x20010DB8000000000000000000000001


def qos_modifier() -> dict:
    scalars = [
        ("tmp_port", 9), ("tmp_port_0", 9),
        ("tmp_idx", 7), ("tmp_idx_0", 7), ("tmp_idx_1", 7), ("tmp_idx_2", 7),
        ("tmp_qos", 8), ("tmp_qos_0", 8),
        ("apply_result", 2),
    ]
    headers = [
        header("scalars", scalars),
        header("standard_metadata", STANDARD_METADATA, metadata=True),
        header("control_packet", [("ipv4_diffserv", 8), ("ipv6_trafficClass", 8), ("index", 8)]),
        header("ethernet", ETHERNET, bridged=True),
        header("ipv4", IPV4),
        header("ipv6", IPV6),
    ]
    states = [
        state("start", transitions=[(None, "parse_ethernet")]),
        state("parse_ethernet", "ethernet", "ethernet.etherType",
              [(0x800, "parse_ipv4"), (0x86DD, "parse_ipv6"), (0x806, "parse_control"), (None, "accept")]),
        state("parse_control", "control_packet", transitions=[(None, "accept")]),
        state("parse_ipv4", "ipv4", transitions=[(None, "accept")]),
        state("parse_ipv6", "ipv6", transitions=[(None, "accept")]),
    ]
    stateful = [register("ipv4_port_qos", 8, 128), register("ipv6_port_qos", 8, 128)]

    # straight-line statements of the control block, one compiler table each
    inits = [
        ("standard_metadata.egress_spec", [C(511)], "assign"),
        ("scalars.tmp_qos", [C(0)], "assign"),
        ("scalars.tmp_qos_0", [C(0)], "assign"),
        ("standard_metadata.mcast_grp", [C(0)], "assign"),
        ("standard_metadata.priority", [C(0)], "assign"),
        ("ipv4.ttl", [F("ipv4.ttl"), C(255)], "arith"),
        ("ipv6.hopLimit", [F("ipv6.hopLimit"), C(255)], "arith"),
        ("ipv4.hdrChecksum", [C(0)], "assign"),
        ("ethernet.srcAddr", [C(0x000000000001)], "assign"),
        ("ipv6.flowLabel", [C(0)], "assign"),
    ]
    helper_names = ["tbl_act"] + [f"tbl_act_{i}" for i in range(len(inits) - 1)]
    act_names = ["act"] + [f"act_{i}" for i in range(len(inits) - 1)]
    actions = [action(a, (), [prim(op, F(dest), *src)]) for a, (dest, src, op) in zip(act_names, inits)]
    actions += [
        action("set_ipv4_ipv6_qos", (), [
            prim("assign", F("scalars.tmp_idx"), F("control_packet.index")),
            prim("register_write", S("ipv4_port_qos"), F("scalars.tmp_idx"), F("control_packet.ipv4_diffserv")),
            prim("assign", F("scalars.tmp_idx_0"), F("control_packet.index")),
            prim("register_write", S("ipv6_port_qos"), F("scalars.tmp_idx_0"), F("control_packet.ipv6_trafficClass")),
        ]),
        action("set_next_hop_ipv4", [("port", 9)], [
            prim("assign", F("scalars.tmp_port"), P("port")),
            prim("assign", F("standard_metadata.egress_spec"), F("scalars.tmp_port")),
            prim("assign", F("scalars.tmp_idx_1"), F("scalars.tmp_port")),
            prim("register_read", F("scalars.tmp_qos"), S("ipv4_port_qos"), F("scalars.tmp_idx_1")),
            prim("assign", F("ipv4.diffserv"), F("scalars.tmp_qos")),
            prim("assign", F("ipv6.dstAddr"), C(SERVER_IP)),
            prim("assign", F("scalars.apply_result"), C(1)),
        ]),
        action("ipv4_miss", (), [prim("assign", F("scalars.apply_result"), C(2))]),
        action("set_next_hop_ipv6", [("port", 9)], [
            prim("assign", F("scalars.tmp_port_0"), P("port")),
            prim("assign", F("standard_metadata.egress_spec"), F("scalars.tmp_port_0")),
            prim("assign", F("scalars.tmp_idx_2"), F("scalars.tmp_port_0")),
            prim("register_read", F("scalars.tmp_qos_0"), S("ipv6_port_qos"), F("scalars.tmp_idx_2")),
            prim("assign", F("ipv6.trafficClass"), F("scalars.tmp_qos_0")),
        ]),
    ]
    ingress = []
    for i, (t, a) in enumerate(zip(helper_names, act_names)):
        nxt = helper_names[i + 1] if i + 1 < len(helper_names) else "node_control_valid"
        ingress.append(table(t, size=1, actions=[a], next={a: nxt}))
    ingress += [
        cond("node_control_valid", valid("control_packet"), true="match_control_packet", false="ipv4_nexthop"),
        table("match_control_packet", [("control_packet.index", "exact")], 256, ["set_ipv4_ipv6_qos"],
              {"set_ipv4_ipv6_qos": None}),
        table("ipv4_nexthop", [("ipv4.dstAddr", "exact")], 256, ["set_next_hop_ipv4", "ipv4_miss"],
              {"set_next_hop_ipv4": "node_ipv4_nexthop_hit", "ipv4_miss": "node_ipv4_nexthop_hit"}),
        cond("node_ipv4_nexthop_hit", hit("ipv4_nexthop"), true="ipv6_nexthop", false=None),
        table("ipv6_nexthop", [("ipv6.dstAddr", "exact")], 256, ["set_next_hop_ipv6"], {"set_next_hop_ipv6": None}),
    ]
    return program("qos_modifier", headers, states, "start", stateful, actions, ingress, helper_names[0])


def step(name: str, act: str, nxt: str | None) -> dict:
    """A keyless single-action table, the shape the compiler gives straight-line code."""
    return table(name, size=1, actions=[act], next={act: nxt})


def l2l3_simple() -> dict:
    """Bridging plus IPv4 routing with ECMP, in the style of the classic L2/L3 switch."""
    sm = "standard_metadata"
    headers = [
        header(sm, STANDARD_METADATA_V14, metadata=True),
        header("meta", [("bd", 12), ("egress_bd", 16), ("ingress_tstamp", 48), ("egress_tstamp", 48)], metadata=True),
        header("scalars", [
            ("vrf", 12), ("nexthop_index", 12), ("lkp_ipv4_sa", 32), ("lkp_ipv4_da", 32), ("lkp_ip_proto", 8),
            ("lkp_ip_version", 4), ("lkp_l3_length", 16), ("flow_hash", 48),
            ("egress_port", 9), ("ecmp_select", 10), ("stp_state", 2), ("l3_routed", 1), ("drop", 1),
            ("port_type", 2), ("ingress_tc", 3),
        ]),
        header("ethernet", ETHERNET),
        header("vlan", VLAN),
        header("ipv4", IPV4),
    ]
    states = [
        state("start", transitions=[(None, "parse_ethernet")]),
        state("parse_ethernet", "ethernet", "ethernet.etherType", [
            (0x8100, "parse_vlan"), (0x800, "parse_ipv4"), (0x86DD, "accept"), (0x806, "accept"), (None, "accept"),
        ]),
        state("parse_vlan", "vlan", "vlan.etherType", [
            (0x800, "parse_ipv4"), (0x8100, "accept"), (0x9100, "accept"),
        ]),
        state("parse_ipv4", "ipv4", transitions=[(None, "accept")]),
    ]
    actions = [
        action("act_lkp_l3", (), [
            prim("assign", F("scalars.lkp_ipv4_sa"), F("ipv4.srcAddr")),
            prim("assign", F("scalars.lkp_ipv4_da"), F("ipv4.dstAddr")),
            prim("assign", F("scalars.lkp_ip_proto"), F("ipv4.protocol")),
            prim("assign", F("scalars.lkp_ip_version"), F("ipv4.version")),
            prim("assign", F("scalars.lkp_l3_length"), F("ipv4.totalLen")),
        ]),
        action("act_hash", (), [
            prim("hash", F("scalars.flow_hash"), F("scalars.lkp_ipv4_sa"), F("scalars.lkp_ipv4_da"),
                 F("ipv4.protocol")),
        ]),
        action("set_bd", [("bd", 12), ("vrf", 12)], [
            prim("assign", F("meta.bd"), P("bd")),
            prim("assign", F("scalars.vrf"), P("vrf")),
        ]),
        action("set_stp_state", [("state", 2)], [prim("assign", F("scalars.stp_state"), P("state"))]),
        action("nop"),
        action("dmac_hit", [("port", 9)], [prim("assign", F("scalars.egress_port"), P("port"))]),
        action("dmac_flood", (), [prim("assign", F("scalars.egress_port"), C(0x1FF))]),
        action("rmac_hit", (), [prim("assign", F("scalars.l3_routed"), C(1))]),
        action("fib_hit", [("nexthop", 12)], [prim("assign", F("scalars.nexthop_index"), P("nexthop"))]),
        action("set_ecmp_select", [("base", 10)], [
            prim("arith", F("scalars.ecmp_select"), F("scalars.flow_hash"), P("base")),
        ]),
        action("set_nexthop", [("bd", 16), ("port", 9)], [
            prim("assign", F("meta.egress_bd"), P("bd")),
            prim("assign", F("scalars.egress_port"), P("port")),
        ]),
        action("act_set_egress", (), [prim("assign", F(f"{sm}.egress_spec"), F("scalars.egress_port"))]),
        action("acl_deny", (), [prim("assign", F("scalars.drop"), C(1))]),
        action("act_drop", (), [prim("assign", F(f"{sm}.egress_spec"), C(0x1FF))]),
        action("set_port_type", [("type", 2)], [prim("assign", F("scalars.port_type"), P("type"))]),
        action("set_ingress_tc", [("tc", 3)], [prim("assign", F("scalars.ingress_tc"), P("tc"))]),
        action("rewrite_smac", [("smac", 48)], [prim("assign", F("ethernet.srcAddr"), P("smac"))]),
        action("act_ttl", (), [prim("arith", F("ipv4.ttl"), F("ipv4.ttl"), C(255))]),
        action("set_mirror", [("session", 32)], [prim("assign", F(f"{sm}.clone_spec"), P("session"))]),
        action("set_pcp", [("pcp", 3)], [prim("assign", F("vlan.pcp"), P("pcp"))]),
    ]
    ingress = [
        table("port_type_mapping", [(f"{sm}.ingress_port", "exact")], 288, ["set_port_type"],
              {"set_port_type": "ingress_tc_map"}),
        table("ingress_tc_map", [(f"{sm}.ingress_port", "exact")], 288, ["set_ingress_tc"],
              {"set_ingress_tc": "node_ipv4_valid"}),
        cond("node_ipv4_valid", valid("ipv4"), true="tbl_lkp_l3", false="port_vlan_mapping"),
        step("tbl_lkp_l3", "act_lkp_l3", "tbl_hash"),
        step("tbl_hash", "act_hash", "port_vlan_mapping"),
        table("port_vlan_mapping", [(f"{sm}.ingress_port", "exact"), ("vlan.vid", "exact")], 4096, ["set_bd"],
              {"set_bd": "spanning_tree"}),
        table("spanning_tree", [(f"{sm}.ingress_port", "exact"), ("meta.bd", "exact")], 1024, ["set_stp_state"],
              {"set_stp_state": "node_stp_forwarding"}),
        cond("node_stp_forwarding", cmp("==", F("scalars.stp_state"), C(0)), true="smac", false="ingress_acl"),
        table("smac", [("meta.bd", "exact"), ("ethernet.srcAddr", "exact")], 4096, ["nop"], {"nop": "dmac"}),
        table("dmac", [("meta.bd", "exact"), ("ethernet.dstAddr", "exact")], 4096, ["dmac_hit", "dmac_flood"],
              {"dmac_hit": "rmac", "dmac_flood": "rmac"}),
        table("rmac", [("ethernet.dstAddr", "exact")], 64, ["rmac_hit", "nop"],
              {"rmac_hit": "node_l3_routed", "nop": "node_l3_routed"}),
        cond("node_l3_routed", {"op": "and", "args": [cmp("==", F("scalars.l3_routed"), C(1)), valid("ipv4")]},
             true="ipv4_fib", false="tbl_set_egress"),
        table("ipv4_fib", [("scalars.vrf", "exact"), ("scalars.lkp_ipv4_da", "exact")], 8192, ["fib_hit", "nop"],
              {"hit": "ecmp_group", "miss": "ipv4_fib_lpm"}),
        table("ipv4_fib_lpm", [("scalars.vrf", "exact"), ("ipv4.dstAddr", "lpm")], 1024, ["fib_hit", "nop"],
              {"fib_hit": "ecmp_group", "nop": "ecmp_group"}),
        table("ecmp_group", [("scalars.nexthop_index", "exact")], 1024, ["set_ecmp_select"],
              {"set_ecmp_select": "nexthop"}),
        table("nexthop", [("scalars.nexthop_index", "exact"), ("scalars.ecmp_select", "exact")], 4096,
              ["set_nexthop"], {"set_nexthop": "tbl_ttl"}),
        step("tbl_ttl", "act_ttl", "rewrite_mac"),
        table("rewrite_mac", [("meta.egress_bd", "exact")], 1024, ["rewrite_smac"], {"rewrite_smac": "tbl_set_egress"}),
        step("tbl_set_egress", "act_set_egress", "qos_map"),
        table("qos_map", [("ipv4.diffserv", "exact")], 64, ["set_pcp", "nop"],
              {"set_pcp": "ingress_acl", "nop": "ingress_acl"}),
        table("ingress_acl", [(f"{sm}.ingress_port", "ternary"), ("ipv4.srcAddr", "ternary"),
                              ("ipv4.dstAddr", "ternary")], 512,
              ["acl_deny", "nop"], {"acl_deny": "node_drop", "nop": "node_drop"}),
        cond("node_drop", cmp("==", F("scalars.drop"), C(1)), true="tbl_drop", false="mirror_acl"),
        step("tbl_drop", "act_drop", None),
        table("mirror_acl", [(f"{sm}.ingress_port", "ternary"), ("ethernet.dstAddr", "ternary")], 256,
              ["set_mirror", "nop"], {"set_mirror": None, "nop": None}),
    ]
    return program("l2l3_simple", headers, states, "start", (), actions, ingress, "port_type_mapping")


class Pipe:
    """Collects tables and actions for the larger reconstructed programs.

    ``lookup`` makes a keyed table whose one action loads each written field
    from an action parameter; ``step`` makes a keyless compiler table.
    """

    def __init__(self, widths: dict[str, int]):
        self.widths = widths
        self.actions: dict[str, dict] = {"nop": action("nop")}
        self.mats: list[dict] = []
        self.stateful: list[dict] = []

    def counter(self, name, key, nxt, length=512):
        """A statistics table: one counter cell per key value, no field writes."""
        self.stateful.append(register(f"{name}_counter", 32, length, kind="counter"))
        act = f"count_{name}"
        self.actions[act] = action(act, (), [prim("counter_op", None, S(f"{name}_counter"))])
        self.mats.append(table(name, [(key, "exact")], length, [act], {act: nxt}))

    def lookup(self, name, keys, writes, nxt, size=1024, nop=False, miss=None, stateful=()):
        prims = [prim("assign", F(f), P(f.split(".")[-1])) for f in writes]
        prims += [prim(op, dst, S(obj), *src) for op, dst, obj, src in stateful]
        params = [(f.split(".")[-1], self.widths[f]) for f in writes]
        act = f"set_{name}"
        self.actions[act] = action(act, params, prims)
        acts = [act] + (["nop"] if nop else [])
        if miss is not None:
            nexts = {"hit": nxt, "miss": miss}
        else:
            nexts = {a: nxt for a in acts}
        self.mats.append(table(name, keys, size, acts, nexts))

    def step(self, name, assigns, nxt, op=None):
        act = f"act_{name.removeprefix('tbl_')}"
        prims = []
        for dest, *src in assigns:
            kind = op or ("assign" if len(src) < 2 else "hash")
            prims.append(prim(kind, F(dest), *[F(x) if isinstance(x, str) else C(x) for x in src]))
        self.actions[act] = action(act, (), prims)
        self.mats.append(step(name, act, nxt))

    def cond(self, name, expr, true, false):
        self.mats.append(cond(name, expr, true=true, false=false))


MPLS = [("label", 20), ("exp", 3), ("bos", 1), ("ttl", 8)]
ARP = [("htype", 16), ("ptype", 16), ("hlen", 8), ("plen", 8), ("oper", 16), ("sha", 48), ("spa", 32), ("tha", 48),
       ("tpa", 32)]
ICMP = [("type_", 8), ("code", 8), ("checksum", 16)]
VXLAN = [("flags", 8), ("reserved", 24), ("vni", 24), ("reserved2", 8)]


def _widths(headers) -> dict[str, int]:
    return {f"{h['name']}.{f['name']}": f["width"] for h in headers for f in h["fields"]}


def l2l3_complex() -> dict:
    """Multi-protocol switch: L2, IPv4/IPv6 unicast with uRPF and ECMP, tunnels, ACLs, QoS, mirroring."""
    sm = "standard_metadata"
    scalars = [
        ("lkp_mac_sa", 48), ("lkp_mac_da", 48), ("lkp_mac_type", 16), ("lkp_ipv4_sa", 32), ("lkp_ipv4_da", 32),
        ("lkp_ip_proto", 8), ("lkp_ipv6_sa", 128), ("lkp_ipv6_da", 128), ("lkp_ipv6_nh", 8),
        ("lkp_l4_sport", 16), ("lkp_l4_dport", 16), ("flow_hash", 32), ("pkt_type", 3),
        ("l2_src_miss", 1), ("l2_dst_hit", 1), ("rmac_hit", 1), ("router_mac", 48),
        ("racl_deny", 1), ("urpf_hit", 1), ("fib_nexthop", 16), ("nexthop_index", 16), ("nexthop_ipv6", 128),
        ("meter_idx", 16), ("mtu_check_fail", 1), ("acl_deny", 1), ("mirror_session", 16),
        ("drop_reason", 8), ("rewrite_index", 16), ("mac_rewrite_da", 48), ("tunnel_index", 16),
        ("tunnel_src_ip", 128), ("tunnel_dst_ip", 128),
        ("ifindex", 16), ("port_type", 8), ("port_lag_index", 16), ("qos_group", 5), ("acl_label", 16),
        ("bd", 16), ("vrf", 16), ("rmac_group", 16), ("stp_group", 16), ("bd_label", 16), ("tc", 8), ("color", 8),
        ("tunnel_terminate", 1), ("egress_ifindex", 16), ("egress_bd", 16),
        ("ingress_tstamp", 48), ("egress_tstamp", 48),
    ]
    headers = [
        header(sm, STANDARD_METADATA_V14, metadata=True),
        header("scalars", scalars),
        header("ethernet", ETHERNET), header("vlan", VLAN), header("mpls", MPLS), header("ipv4", IPV4),
        header("ipv6", IPV6), header("arp", ARP), header("icmp", ICMP), header("tcp", TCP), header("udp", UDP),
        header("vxlan", VXLAN),
    ]
    states = [
        state("start", transitions=[(None, "parse_ethernet")]),
        state("parse_ethernet", "ethernet", "ethernet.etherType", [
            (0x8100, "parse_vlan"), (0x9100, "parse_vlan"), (0x8847, "parse_mpls"), (0x800, "parse_ipv4"),
            (0x86DD, "parse_ipv6"), (0x806, "parse_arp"), (None, "accept")]),
        state("parse_vlan", "vlan", "vlan.etherType", [
            (0x8847, "parse_mpls"), (0x800, "parse_ipv4"), (0x86DD, "parse_ipv6"), (0x806, "parse_arp"),
            (None, "accept")]),
        state("parse_mpls", "mpls", "mpls.bos", [(1, "parse_ipv4"), (None, "accept")]),
        state("parse_ipv4", "ipv4", "ipv4.protocol", [
            (1, "parse_icmp"), (6, "parse_tcp"), (17, "parse_udp"), (47, "accept"), (None, "accept")]),
        state("parse_ipv6", "ipv6", "ipv6.nextHdr", [
            (58, "parse_icmp"), (6, "parse_tcp"), (17, "parse_udp"), (47, "accept"), (None, "accept")]),
        state("parse_arp", "arp", transitions=[(None, "accept")]),
        state("parse_icmp", "icmp", transitions=[(None, "accept")]),
        state("parse_tcp", "tcp", transitions=[(None, "accept")]),
        state("parse_udp", "udp", "udp.dstPort", [(4789, "parse_vxlan"), (None, "accept")]),
        state("parse_vxlan", "vxlan", transitions=[(None, "accept")]),
    ]
    x = Pipe(_widths(headers))
    s = "scalars"
    # packet lookup fields
    x.step("tbl_lkp_l2", [(f"{s}.lkp_mac_sa", "ethernet.srcAddr"), (f"{s}.lkp_mac_da", "ethernet.dstAddr"),
                          (f"{s}.lkp_mac_type", "ethernet.etherType")], "node_lkp_ipv4")
    x.cond("node_lkp_ipv4", valid("ipv4"), "tbl_lkp_ipv4", "node_lkp_ipv6")
    x.step("tbl_lkp_ipv4", [(f"{s}.lkp_ipv4_sa", "ipv4.srcAddr"), (f"{s}.lkp_ipv4_da", "ipv4.dstAddr"),
                            (f"{s}.lkp_ip_proto", "ipv4.protocol")], "node_lkp_tcp")
    x.cond("node_lkp_ipv6", valid("ipv6"), "tbl_lkp_ipv6", "node_lkp_tcp")
    x.step("tbl_lkp_ipv6", [(f"{s}.lkp_ipv6_sa", "ipv6.srcAddr"), (f"{s}.lkp_ipv6_da", "ipv6.dstAddr"),
                            (f"{s}.lkp_ipv6_nh", "ipv6.nextHdr")], "node_lkp_tcp")
    x.cond("node_lkp_tcp", valid("tcp"), "tbl_lkp_tcp", "node_lkp_udp")
    x.step("tbl_lkp_tcp", [(f"{s}.lkp_l4_sport", "tcp.srcPort"), (f"{s}.lkp_l4_dport", "tcp.dstPort")],
           "tbl_compute_hash")
    x.cond("node_lkp_udp", valid("udp"), "tbl_lkp_udp", "tbl_compute_hash")
    x.step("tbl_lkp_udp", [(f"{s}.lkp_l4_sport", "udp.srcPort"), (f"{s}.lkp_l4_dport", "udp.dstPort")],
           "tbl_compute_hash")
    x.step("tbl_compute_hash", [(f"{s}.flow_hash", f"{s}.lkp_mac_sa", f"{s}.lkp_mac_da", f"{s}.lkp_l4_sport")],
           "tbl_ingress_tstamp")
    x.step("tbl_ingress_tstamp", [(f"{s}.ingress_tstamp", f"{sm}.instance_type")], "ingress_port_stats")
    x.counter("ingress_port_stats", f"{sm}.ingress_port", "ingress_port_mapping", 288)
    # port and vlan
    x.lookup("ingress_port_mapping", [(f"{sm}.ingress_port", "exact")], [f"{s}.ifindex", f"{s}.port_type"],
             "ingress_port_properties", 288)
    x.lookup("ingress_port_properties", [(f"{sm}.ingress_port", "exact")],
             [f"{s}.port_lag_index", f"{s}.qos_group", f"{s}.acl_label"], "validate_packet", 288)
    x.lookup("validate_packet", [(f"{s}.lkp_mac_sa", "ternary"), (f"{s}.lkp_mac_da", "ternary")], [f"{s}.pkt_type"],
             "port_vlan_mapping", 64)
    x.lookup("port_vlan_mapping", [(f"{s}.ifindex", "exact"), ("vlan.vid", "exact")],
             [f"{s}.bd", f"{s}.vrf", f"{s}.rmac_group", f"{s}.stp_group", f"{s}.bd_label"], "spanning_tree", 4096)
    x.lookup("spanning_tree", [(f"{s}.ifindex", "exact"), (f"{s}.stp_group", "exact")], [f"{s}.drop_reason"],
             "ingress_qos_map", 1024)
    x.lookup("ingress_qos_map", [(f"{s}.qos_group", "exact"), ("ipv4.diffserv", "exact")], [f"{s}.tc", f"{s}.color"],
             "storm_control", 512)
    x.lookup("storm_control", [(f"{sm}.ingress_port", "exact"), (f"{s}.pkt_type", "exact")], [f"{s}.meter_idx"],
             "node_tunnel", 512)
    x.cond("node_tunnel", valid("vxlan"), "tunnel_vni", "smac")
    x.lookup("tunnel_vni", [("vxlan.vni", "exact")], [f"{s}.tunnel_terminate"], "smac", 4096)
    # L2
    x.lookup("smac", [(f"{s}.bd", "exact"), (f"{s}.lkp_mac_sa", "exact")], [f"{s}.l2_src_miss"], "dmac", 16384)
    x.lookup("dmac", [(f"{s}.bd", "exact"), (f"{s}.lkp_mac_da", "exact")], [f"{s}.l2_dst_hit", f"{s}.egress_ifindex"],
             "rmac", 16384)
    x.lookup("rmac", [(f"{s}.rmac_group", "exact"), (f"{s}.lkp_mac_da", "exact")], [f"{s}.rmac_hit", f"{s}.router_mac"],
             "node_routed", 512, nop=True)
    x.cond("node_routed", cmp("==", F(f"{s}.rmac_hit"), C(1)), "node_l3_v4", "mac_acl")
    # IPv4
    x.cond("node_l3_v4", valid("ipv4"), "ipv4_racl", "node_l3_v6")
    x.lookup("ipv4_racl", [(f"{s}.bd_label", "ternary"), (f"{s}.lkp_ipv4_sa", "ternary"),
                           (f"{s}.lkp_ipv4_da", "ternary"), (f"{s}.lkp_ip_proto", "ternary")], [f"{s}.racl_deny"],
             "ipv4_urpf", 512, nop=True)
    x.lookup("ipv4_urpf", [(f"{s}.vrf", "exact"), (f"{s}.lkp_ipv4_sa", "lpm")], [f"{s}.urpf_hit"], "ipv4_fib", 4096)
    x.lookup("ipv4_fib", [(f"{s}.vrf", "exact"), (f"{s}.lkp_ipv4_da", "exact")], [f"{s}.fib_nexthop"],
             "ecmp_group", 16384, nop=True, miss="ipv4_fib_lpm")
    x.lookup("ipv4_fib_lpm", [(f"{s}.vrf", "exact"), (f"{s}.lkp_ipv4_da", "lpm")], [f"{s}.fib_nexthop"],
             "ecmp_group", 8192, nop=True)
    # IPv6
    x.cond("node_l3_v6", valid("ipv6"), "ipv6_racl", "mac_acl")
    x.lookup("ipv6_racl", [(f"{s}.bd_label", "ternary"), (f"{s}.lkp_ipv6_sa", "ternary"),
                           (f"{s}.lkp_ipv6_nh", "ternary")], [f"{s}.racl_deny"], "ipv6_urpf", 512, nop=True)
    x.lookup("ipv6_urpf", [(f"{s}.vrf", "exact"), (f"{s}.lkp_ipv6_sa", "lpm")], [f"{s}.urpf_hit"], "ipv6_fib", 1024)
    x.lookup("ipv6_fib", [(f"{s}.vrf", "exact"), (f"{s}.lkp_ipv6_da", "exact")], [f"{s}.fib_nexthop"],
             "ecmp_group", 4096, nop=True, miss="ipv6_fib_lpm")
    x.lookup("ipv6_fib_lpm", [(f"{s}.vrf", "exact"), (f"{s}.lkp_ipv6_da", "lpm")], [f"{s}.fib_nexthop"],
             "ecmp_group", 2048, nop=True)
    # next hop resolution
    x.lookup("ecmp_group", [(f"{s}.fib_nexthop", "exact"), (f"{s}.flow_hash", "exact")], [f"{s}.nexthop_index"],
             "nexthop", 4096)
    x.lookup("nexthop", [(f"{s}.nexthop_index", "exact")],
             [f"{s}.egress_bd", f"{s}.rewrite_index", f"{s}.nexthop_ipv6"], "node_urpf_fail", 4096)
    x.cond("node_urpf_fail", cmp("==", F(f"{s}.urpf_hit"), C(0)), "tbl_urpf_drop", "mac_acl")
    x.step("tbl_urpf_drop", [(f"{s}.drop_reason", 20)], "mac_acl")
    # ACLs
    x.lookup("mac_acl", [(f"{s}.acl_label", "ternary"), (f"{s}.lkp_mac_sa", "ternary"), (f"{s}.lkp_mac_type", "ternary")],
             [f"{s}.acl_deny"], "ip_acl", 512, nop=True)
    x.lookup("ip_acl", [(f"{s}.acl_label", "ternary"), (f"{s}.lkp_ipv4_sa", "ternary"), (f"{s}.lkp_ip_proto", "ternary")],
             [f"{s}.mirror_session"], "ipv6_acl", 512, nop=True)
    x.lookup("ipv6_acl", [(f"{s}.lkp_ipv6_da", "ternary")], [f"{s}.mirror_session"],
             "qos_acl", 512, nop=True)
    x.lookup("qos_acl", [(f"{s}.tc", "exact"), ("tcp.flags", "ternary")], [f"{s}.color"], "meter_index", 256, nop=True)
    x.lookup("meter_index", [(f"{s}.color", "exact"), (f"{s}.tc", "exact")], [f"{s}.meter_idx"], "lag_group", 64)
    x.lookup("lag_group", [(f"{s}.egress_ifindex", "exact"), (f"{s}.flow_hash", "exact")], [f"{sm}.egress_spec"],
             "rewrite", 1024)
    # rewrite and egress-side processing folded into the single pipeline
    x.lookup("rewrite", [(f"{s}.rewrite_index", "exact")], [f"{s}.mac_rewrite_da", f"{s}.tunnel_index"],
             "node_l3_rewrite", 4096)
    x.cond("node_l3_rewrite", valid("ipv4"), "tbl_ipv4_ttl", "mtu_check")
    x.step("tbl_ipv4_ttl", [("ipv4.ttl", "ipv4.ttl", 255)], "tbl_mac_rewrite", op="arith")
    x.step("tbl_mac_rewrite", [("ethernet.dstAddr", f"{s}.mac_rewrite_da"), ("ethernet.srcAddr", f"{s}.router_mac")],
           "smac_rewrite")
    x.lookup("smac_rewrite", [(f"{s}.egress_bd", "exact")], ["ethernet.srcAddr"], "mtu_check", 512)
    x.lookup("mtu_check", [(f"{s}.egress_bd", "exact"), ("ipv4.totalLen", "range")], [f"{s}.mtu_check_fail"],
             "tunnel_encap", 512, nop=True)
    x.lookup("tunnel_encap", [(f"{s}.tunnel_index", "exact")],
             ["vxlan.vni", f"{s}.tunnel_src_ip", f"{s}.tunnel_dst_ip"], "egress_vlan_xlate", 1024, nop=True)
    x.lookup("egress_vlan_xlate", [(f"{s}.egress_ifindex", "exact"), (f"{s}.egress_bd", "exact")], ["vlan.vid"],
             "egress_qos_map", 4096, nop=True)
    x.lookup("egress_qos_map", [(f"{s}.tc", "exact"), (f"{s}.color", "exact")], ["ipv4.diffserv"], "egress_acl", 64)
    x.lookup("egress_acl", [(f"{s}.egress_ifindex", "ternary"), (f"{s}.mtu_check_fail", "ternary")],
             [f"{s}.acl_deny"], "mirror", 256, nop=True)
    x.lookup("mirror", [(f"{s}.mirror_session", "exact")], [f"{sm}.clone_spec"], "port_drop_stats", 1024, nop=True)
    x.counter("port_drop_stats", f"{sm}.ingress_port", "tbl_egress_tstamp", 288)
    x.step("tbl_egress_tstamp", [(f"{s}.egress_tstamp", f"{s}.ingress_tstamp")], "node_drop")
    x.cond("node_drop", {"op": "or", "args": [cmp("==", F(f"{s}.acl_deny"), C(1)), cmp("!=", F(f"{s}.drop_reason"), C(0))]},
           "tbl_drop", None)
    x.step("tbl_drop", [(f"{sm}.egress_spec", 0x1FF)], None)
    return program("l2l3_complex", headers, states, "start", x.stateful, list(x.actions.values()), x.mats, "tbl_lkp_l2")


def traffic_anony() -> dict:
    """Prefix-preserving anonymizer for MAC, IP and L4 fields, driven by per-port policy bits.

    Nearly every table is a keyless compiler helper, so the work is compute
    bound: long chains of split, hash and merge steps over the same fields.
    """
    sm = "standard_metadata"
    s = "scalars"
    scalars = [
        ("src_mac_oui", 24), ("src_mac_id", 24), ("dst_mac_oui", 24), ("dst_mac_id", 24),
        ("src_ip_prefix", 32), ("src_ip_host", 32), ("dst_ip_prefix", 32), ("dst_ip_host", 32),
        ("src_ipv6_hi", 64), ("dst_ipv6_hi", 64), ("src_port_hash", 16), ("dst_port_hash", 16),
        ("cfg_mac", 4), ("cfg_ip", 4), ("src_prefix_len", 8), ("dst_prefix_len", 8),
        ("src_v6_prefix_len", 8), ("dst_v6_prefix_len", 8), ("hash_seed", 8), ("l4_proto", 8),
    ]
    headers = [
        header(sm, STANDARD_METADATA, metadata=True),
        header("scalars", scalars),
        header("ethernet", ETHERNET), header("arp", ARP), header("ipv4", IPV4), header("ipv6", IPV6),
        header("tcp", TCP), header("udp", UDP),
    ]
    states = [
        state("start", transitions=[(None, "parse_ethernet")]),
        state("parse_ethernet", "ethernet", "ethernet.etherType", [
            (0x800, "parse_ipv4"), (0x86DD, "parse_ipv6"), (0x806, "parse_arp"), (None, "accept")]),
        state("parse_ipv4", "ipv4", "ipv4.protocol", [(6, "parse_tcp"), (17, "parse_udp"), (None, "accept")]),
        state("parse_ipv6", "ipv6", "ipv6.nextHdr", [(6, "parse_tcp"), (17, "parse_udp"), (None, "accept")]),
        state("parse_arp", "arp", transitions=[(None, "accept")]),
        state("parse_tcp", "tcp", transitions=[(None, "accept")]),
        state("parse_udp", "udp", transitions=[(None, "accept")]),
    ]
    x = Pipe(_widths(headers))
    x.lookup("forward", [(f"{sm}.ingress_port", "exact")], [f"{sm}.egress_spec"], "anon_policy", 64)
    x.lookup("anon_policy", [(f"{sm}.ingress_port", "exact")], [f"{s}.cfg_mac", f"{s}.cfg_ip", f"{s}.hash_seed"],
             "node_eth_valid", 64)
    x.cond("node_eth_valid", valid("ethernet"), "node_anon_smac", "node_arp_valid")

    def prefix_rounds(tag, plen, target, bounds, nxt):
        """Rehash ``target`` once per prefix boundary that the looked-up length covers.

        Packets sharing a prefix share every round up to it, which is what keeps
        the mapping prefix preserving. Returns the first node of the chain.
        """
        names = [f"node_{tag}_len{b}" for b in bounds] + [nxt]
        for i, bound in enumerate(bounds):
            x.cond(names[i], cmp(">=", F(plen), C(bound)), f"tbl_{tag}_round{bound}", names[i + 1])
            x.step(f"tbl_{tag}_round{bound}", [(target, target, f"{s}.hash_seed")], names[i + 1])
        return names[0]

    def split_hash_merge(tag, field, hi, lo, nxt, seed_lo=True, plen=None, rounds=()):
        """Split a field in two, hash each half with the seed, write the merged result back."""
        x.step(f"tbl_{tag}_split", [(hi, field), (lo, field)], f"tbl_{tag}_hash_hi", op="arith")
        after_hi = prefix_rounds(tag, plen, hi, rounds, f"tbl_{tag}_hash_lo")
        x.step(f"tbl_{tag}_hash_hi", [(hi, hi, f"{s}.hash_seed")], after_hi)
        x.step(f"tbl_{tag}_hash_lo", [(lo, lo, f"{s}.hash_seed" if seed_lo else hi)], f"tbl_{tag}_merge")
        x.step(f"tbl_{tag}_merge", [(field, hi, lo)], nxt)

    # MAC addresses: OUI and device id are hashed separately
    x.cond("node_anon_smac", cmp("==", F(f"{s}.cfg_mac"), C(1)), "tbl_smac_split", "node_anon_dmac")
    split_hash_merge("smac", "ethernet.srcAddr", f"{s}.src_mac_oui", f"{s}.src_mac_id", "node_anon_dmac")
    x.cond("node_anon_dmac", cmp("==", F(f"{s}.cfg_mac"), C(2)), "tbl_dmac_split", "node_arp_valid")
    split_hash_merge("dmac", "ethernet.dstAddr", f"{s}.dst_mac_oui", f"{s}.dst_mac_id", "node_arp_valid")
    # ARP mirrors the anonymized Ethernet addresses
    x.cond("node_arp_valid", valid("arp"), "tbl_arp_sha", "node_ipv4_valid")
    x.step("tbl_arp_sha", [("arp.sha", "ethernet.srcAddr")], "tbl_arp_tha")
    x.step("tbl_arp_tha", [("arp.tha", "ethernet.dstAddr")], "tbl_arp_spa")
    x.step("tbl_arp_spa", [("arp.spa", "arp.spa", f"{s}.hash_seed")], "tbl_arp_tpa")
    x.step("tbl_arp_tpa", [("arp.tpa", "arp.tpa", f"{s}.hash_seed")], "node_ipv4_valid")
    # IPv4: the prefix length comes from a longest-prefix lookup, the prefix part keeps its structure
    x.cond("node_ipv4_valid", valid("ipv4"), "node_anon_ipv4", "node_ipv6_valid")
    x.cond("node_anon_ipv4", cmp("==", F(f"{s}.cfg_ip"), C(1)), "src_prefix_lpm", "tbl_ipv4_proto")
    x.lookup("src_prefix_lpm", [("ipv4.srcAddr", "lpm")], [f"{s}.src_prefix_len"], "tbl_sip_split", 256)
    split_hash_merge("sip", "ipv4.srcAddr", f"{s}.src_ip_prefix", f"{s}.src_ip_host", "dst_prefix_lpm", seed_lo=False,
                     plen=f"{s}.src_prefix_len", rounds=(8, 16, 24, 32))
    x.lookup("dst_prefix_lpm", [("ipv4.dstAddr", "lpm")], [f"{s}.dst_prefix_len"], "tbl_dip_split", 256)
    split_hash_merge("dip", "ipv4.dstAddr", f"{s}.dst_ip_prefix", f"{s}.dst_ip_host", "tbl_ipv4_csum", seed_lo=False,
                     plen=f"{s}.dst_prefix_len", rounds=(8, 16, 24, 32))
    x.step("tbl_ipv4_csum", [("ipv4.hdrChecksum", "ipv4.srcAddr", "ipv4.dstAddr")], "tbl_ipv4_proto")
    x.step("tbl_ipv4_proto", [(f"{s}.l4_proto", "ipv4.protocol")], "node_tcp_valid")
    # IPv6: only the upper 64 bits are anonymized
    x.cond("node_ipv6_valid", valid("ipv6"), "node_anon_ipv6", "node_tcp_valid")
    x.cond("node_anon_ipv6", cmp("==", F(f"{s}.cfg_ip"), C(2)), "src_v6_prefix_lpm", "tbl_ipv6_proto")
    x.lookup("src_v6_prefix_lpm", [("ipv6.srcAddr", "lpm")], [f"{s}.src_v6_prefix_len"], "tbl_sip6_take", 256)
    x.step("tbl_sip6_take", [(f"{s}.src_ipv6_hi", "ipv6.srcAddr")], "tbl_sip6_hash")
    x.step("tbl_sip6_hash", [(f"{s}.src_ipv6_hi", f"{s}.src_ipv6_hi", f"{s}.hash_seed")],
           prefix_rounds("sip6", f"{s}.src_v6_prefix_len", f"{s}.src_ipv6_hi", (16, 32, 48, 64), "tbl_sip6_merge"))
    x.step("tbl_sip6_merge", [("ipv6.srcAddr", f"{s}.src_ipv6_hi", "ipv6.srcAddr")], "dst_v6_prefix_lpm")
    x.lookup("dst_v6_prefix_lpm", [("ipv6.dstAddr", "lpm")], [f"{s}.dst_v6_prefix_len"], "tbl_dip6_take", 256)
    x.step("tbl_dip6_take", [(f"{s}.dst_ipv6_hi", "ipv6.dstAddr")], "tbl_dip6_hash")
    x.step("tbl_dip6_hash", [(f"{s}.dst_ipv6_hi", f"{s}.dst_ipv6_hi", f"{s}.hash_seed")],
           prefix_rounds("dip6", f"{s}.dst_v6_prefix_len", f"{s}.dst_ipv6_hi", (16, 32, 48), "tbl_dip6_merge"))
    x.step("tbl_dip6_merge", [("ipv6.dstAddr", f"{s}.dst_ipv6_hi", "ipv6.dstAddr")], "tbl_ipv6_proto")
    x.step("tbl_ipv6_proto", [(f"{s}.l4_proto", "ipv6.nextHdr")], "node_tcp_valid")
    # transport ports
    x.cond("node_tcp_valid", valid("tcp"), "tbl_tcp_sport", "node_udp_valid")
    x.step("tbl_tcp_sport", [(f"{s}.src_port_hash", "tcp.srcPort", f"{s}.hash_seed")], "tbl_tcp_dport")
    x.step("tbl_tcp_dport", [(f"{s}.dst_port_hash", "tcp.dstPort", f"{s}.hash_seed")], "tbl_tcp_write")
    x.step("tbl_tcp_write", [("tcp.srcPort", f"{s}.src_port_hash"), ("tcp.dstPort", f"{s}.dst_port_hash")],
           "tbl_tcp_csum")
    x.step("tbl_tcp_csum", [("tcp.checksum", "tcp.srcPort", "tcp.dstPort", f"{s}.l4_proto")], "node_udp_valid")
    x.cond("node_udp_valid", valid("udp"), "tbl_udp_sport", "egress_port_stats")
    x.step("tbl_udp_sport", [(f"{s}.src_port_hash", "udp.srcPort", f"{s}.hash_seed")], "tbl_udp_dport")
    x.step("tbl_udp_dport", [(f"{s}.dst_port_hash", "udp.dstPort", f"{s}.hash_seed")], "tbl_udp_write")
    x.step("tbl_udp_write", [("udp.srcPort", f"{s}.src_port_hash"), ("udp.dstPort", f"{s}.dst_port_hash")],
           "tbl_udp_csum")
    x.step("tbl_udp_csum", [("udp.checksum", "udp.srcPort", "udp.dstPort", f"{s}.l4_proto")], "egress_port_stats")
    x.counter("egress_port_stats", f"{sm}.egress_spec", None, 512)
    return program("traffic_anony", headers, states, "start", x.stateful, list(x.actions.values()), x.mats, "forward")


def same_path_stateful() -> dict:
    """Two tables on one path, the second matching what the first wrote, both reading one register."""
    headers = [
        header("meta", [("a", 8), ("b", 8), ("idx", 7)], metadata=True),
        header("ethernet", ETHERNET),
    ]
    states = [state("start", "ethernet", transitions=[(None, "accept")])]
    actions = [
        action("read_a", (), [prim("register_read", F("meta.a"), S("r"), F("meta.idx"))]),
        action("read_b", (), [prim("register_read", F("meta.b"), S("r"), F("meta.idx"))]),
    ]
    ingress = [
        table("first", [("ethernet.dstAddr", "exact")], 64, ["read_a"], {"read_a": "second"}),
        table("second", [("meta.a", "exact")], 64, ["read_b"], {"read_b": None}),
    ]
    return program("same_path_stateful", headers, states, "start", [register("r", 8, 128)], actions, ingress, "first")


def bifurcation() -> dict:
    """Minimal split case: match_control_packet writes two registers on a branch of its own,
    and two lookups on the other branch each read one of them."""
    headers = [
        header("meta", [("idx", 7), ("v4", 8), ("v6", 8), ("sel", 8)], metadata=True),
        header("h", [("k", 32), ("k6", 32), ("x", 8), ("y", 8)]),
    ]
    states = [state("start", "h", transitions=[(None, "accept")])]
    actions = [
        action("write_both", (), [
            prim("register_write", S("r4"), F("meta.idx"), F("h.x")),
            prim("register_write", S("r6"), F("meta.idx"), F("h.y")),
        ]),
        action("read4", [("p", 8)], [
            prim("register_read", F("meta.v4"), S("r4"), F("meta.idx")),
            prim("assign", F("h.k6"), P("p")),
        ]),
        action("read6", (), [prim("register_read", F("meta.v6"), S("r6"), F("meta.idx"))]),
    ]
    ingress = [
        cond("c", cmp("==", F("meta.sel"), C(1)), true="match_control_packet", false="ipv4_port_lookup"),
        table("match_control_packet", [("h.x", "exact")], 16, ["write_both"], {"write_both": None}),
        table("ipv4_port_lookup", [("h.k", "exact")], 64, ["read4"], {"read4": "ipv6_port_lookup"}),
        table("ipv6_port_lookup", [("h.k6", "exact")], 64, ["read6"], {"read6": None}),
    ]
    stateful = [register("r4", 8, 128), register("r6", 8, 128)]
    return program("bifurcation", headers, states, "start", stateful, actions, ingress, "c")


def empty_program() -> dict:
    return program("empty", [], [], None)


FIXTURES = {
    "qos_modifier.nir.json": qos_modifier,
    "l2l3_simple.nir.json": l2l3_simple,
    "l2l3_complex.nir.json": l2l3_complex,
    "traffic_anony.nir.json": traffic_anony,
    "reject_same_path_stateful.nir.json": same_path_stateful,
    "bifurcation.nir.json": bifurcation,
    "empty.nir.json": empty_program,
}


def render(builder) -> str:
    return dump_ir(load_ir(builder()))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true", help="compare instead of writing")
    args = ap.parse_args(argv)
    OUT.mkdir(exist_ok=True)
    stale = 0
    for name, builder in FIXTURES.items():
        text = render(builder)
        path = OUT / name
        if args.check:
            old = path.read_text() if path.exists() else ""
            if old != text:
                stale += 1
                sys.stdout.writelines(difflib.unified_diff(old.splitlines(True), text.splitlines(True), name, name))
        else:
            path.write_text(text)
            print(f"wrote {path.relative_to(ROOT)}")
    return 1 if stale else 0


if __name__ == "__main__":
    raise SystemExit(main())

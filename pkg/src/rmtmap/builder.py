"""Terse constructors for NIR documents.

Used by the fixture generator and by the randomized tests; every helper
returns plain JSON-ready dicts.
"""

from __future__ import annotations


def F(name: str) -> dict:
    return {"field": name}


def P(name: str) -> dict:
    return {"param": name}


def C(value: int) -> dict:
    return {"const": value}


def S(name: str) -> dict:
    return {"stateful": name}


def header(name: str, fields, metadata: bool = False, bridged: bool = False) -> dict:
    out: dict = {"name": name}
    if metadata:
        out["metadata"] = True
    if bridged:
        out["bridged"] = True
    out["fields"] = [{"name": n, "width": w} for n, w in fields]
    return out


def state(name: str, extract=None, select=None, transitions=()) -> dict:
    """``transitions`` items are (value, next), (value, mask, next) or (None, next) for default."""
    trans = []
    for t in transitions:
        if len(t) == 2:
            value, nxt = t
            mask = None
        else:
            value, mask, nxt = t
        trans.append({
            "value": None if value is None else f"0x{value:x}",
            "mask": None if mask is None else f"0x{mask:x}",
            "next": nxt,
        })
    return {"name": name, "extract": extract, "select": select, "transitions": trans}


def register(name: str, width: int, length: int, access: str = "indirect", table=None, kind: str = "register") -> dict:
    out = {"name": name, "kind": kind, "element_width": width, "length": length, "access": access}
    if table is not None:
        out["table"] = table
    return out


def prim(op: str, dest=None, *src, cond=None) -> dict:
    out: dict = {"op": op}
    if dest is not None:
        out["dest"] = dest
    if src:
        out["src"] = list(src)
    if cond is not None:
        out["cond"] = cond
    return out


def action(name: str, params=(), primitives=()) -> dict:
    return {"name": name, "params": [{"name": n, "width": w} for n, w in params], "primitives": list(primitives)}


def table(name: str, keys=(), size: int = 1, actions=(), next=None) -> dict:
    out: dict = {"name": name}
    if keys:
        out["keys"] = [{"field": f, "match": k} for f, k in keys]
    out["size"] = size
    if actions:
        out["actions"] = list(actions)
    out["next"] = dict(next or {})
    return out


def cond(name: str, expr: dict, true=None, false=None) -> dict:
    return {"name": name, "condition": expr, "next": {"true": true, "false": false}}


def valid(h: str) -> dict:
    return {"op": "valid", "header": h}


def hit(t: str) -> dict:
    return {"op": "hit", "table": t}


def cmp(op: str, a: dict, b: dict) -> dict:
    return {"op": op, "args": [a, b]}


def program(name: str, headers, states, start, stateful=(), actions=(), ingress=(), ingress_root=None,
            egress=(), egress_root=None) -> dict:
    return {
        "nir_version": 1,
        "name": name,
        "headers": list(headers),
        "parser": {"start": start, "states": list(states)},
        "stateful": list(stateful),
        "actions": list(actions),
        "ingress": {"root": ingress_root, "mats": list(ingress)},
        "egress": {"root": egress_root, "mats": list(egress)},
    }


STANDARD_METADATA = [
    ("ingress_port", 9), ("egress_spec", 9), ("egress_port", 9), ("instance_type", 32),
    ("packet_length", 32), ("enq_timestamp", 32), ("enq_qdepth", 19), ("deq_timedelta", 32),
    ("deq_qdepth", 19), ("mcast_grp", 16), ("checksum_error", 1), ("parser_error", 32),
    ("priority", 3), ("_padding", 3),
]

# the older, smaller intrinsic metadata of the first-generation language
STANDARD_METADATA_V14 = [
    ("ingress_port", 9), ("packet_length", 32), ("egress_spec", 9), ("egress_port", 9),
    ("egress_instance", 32), ("instance_type", 32), ("clone_spec", 32), ("_padding", 5),
]

ETHERNET = [("dstAddr", 48), ("srcAddr", 48), ("etherType", 16)]
IPV4 = [("version", 4), ("ihl", 4), ("diffserv", 8), ("totalLen", 16), ("identification", 16), ("flags", 3),
        ("fragOffset", 13), ("ttl", 8), ("protocol", 8), ("hdrChecksum", 16), ("srcAddr", 32), ("dstAddr", 32)]
VLAN = [("pcp", 3), ("cfi", 1), ("vid", 12), ("etherType", 16)]
TCP = [("srcPort", 16), ("dstPort", 16), ("seqNo", 32), ("ackNo", 32), ("dataOffset", 4), ("res", 4),
       ("flags", 8), ("window", 16), ("checksum", 16), ("urgentPtr", 16)]
UDP = [("srcPort", 16), ("dstPort", 16), ("length_", 16), ("checksum", 16)]
IPV6 = [("version", 4), ("trafficClass", 8), ("flowLabel", 20), ("payloadLen", 16), ("nextHdr", 8),
        ("hopLimit", 8), ("srcAddr", 128), ("dstAddr", 128)]

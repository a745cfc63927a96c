"""Adapter from the BMv2-style JSON that the reference compiler emits to NIR.

Only the subset the mapper can use is translated. Anything outside it is
reported with ``UnsupportedConstruct`` rather than silently dropped.

Conventions worth knowing:

* The compiler packs local temporaries into a metadata header called
  ``scalars``. Those temporaries live in the PHV only for the gress that
  uses them, so they come out as an ordinary header. Fields named
  ``userMetadata.<x>`` are the program's own metadata struct and come out
  as a separate metadata header ``meta``.
* A keyless table only ever runs its default action, so its NIR size is 1
  whatever ``max_size`` says.
* ``__HIT__``/``__MISS__`` successors become an explicit conditional node
  ``node_<table>_hit`` so that the branch shows up in the dependency graph.
* Tables and conditionals are listed depth first from the root, so the
  NIR reads in control-flow order.
* ``& 0xff..`` width masks around arithmetic are dropped; NIR arithmetic is
  implicitly truncated to the destination width.
"""

from __future__ import annotations

from pathlib import PurePath
from typing import Any

from .errors import SchemaError, UnresolvedReference, UnsupportedConstruct

USER_META = "userMetadata."

_COMPARE = {"==", "!=", "<", "<=", ">", ">="}
_ARITH_OPS = {"+", "-", "*", "<<", ">>", "&", "|", "^", "~"}


def _int(v: Any) -> int:
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, int):
        return v
    if isinstance(v, str):
        return int(v, 0)
    raise SchemaError("value", f"not a number: {v!r}")


def _hex(v: int | None) -> str | None:
    return None if v is None else f"0x{v:x}"


class _Ctx:
    def __init__(self, doc: dict):
        self.doc = doc
        self.field_names: dict[tuple[str, str], str] = {}
        self.calculations = {c["name"]: c for c in doc.get("calculations", [])}

    def field(self, ref: list, where: str) -> str:
        key = (ref[0], ref[1])
        if key not in self.field_names:
            raise UnresolvedReference(".".join(ref), where)
        return self.field_names[key]


def _headers(doc: dict, ctx: _Ctx) -> list[dict]:
    types = {t["name"]: t for t in doc.get("header_types", [])}
    out: list[dict] = []
    user_meta: list[dict] = []
    for h in doc.get("headers", []):
        name = h["name"]
        if h.get("header_stack") or name.endswith("]"):
            raise UnsupportedConstruct("header stack", name)
        t = types.get(h["header_type"])
        if t is None:
            raise UnresolvedReference(h["header_type"], f"headers/{name}")
        if t.get("max_length") is not None:
            raise UnsupportedConstruct("variable-length header", name)
        fields = []
        for f in t["fields"]:
            fname, width = f[0], f[1]
            if width == "*" or not isinstance(width, int):
                raise UnsupportedConstruct("variable-length header", f"{name}.{fname}")
            if fname == "$valid$":
                continue
            if name == "scalars" and fname.startswith(USER_META):
                short = fname[len(USER_META):]
                user_meta.append({"name": short, "width": width})
                ctx.field_names[(name, fname)] = f"meta.{short}"
                continue
            fields.append({"name": fname, "width": width})
            ctx.field_names[(name, fname)] = f"{name}.{fname}"
        if not fields:
            continue
        entry: dict = {"name": name, "fields": fields}
        # the temporaries header is flagged metadata by the compiler but is per-gress
        if h.get("metadata") and name != "scalars":
            entry["metadata"] = True
        if h.get("bridged"):
            entry["bridged"] = True
        out.append(entry)
    if user_meta:
        out.append({"name": "meta", "metadata": True, "fields": user_meta})
    return out


def _parser(doc: dict, ctx: _Ctx) -> dict:
    parsers = doc.get("parsers", [])
    if not parsers:
        return {"start": None, "states": []}
    p = parsers[0]
    states = []
    for s in p.get("parse_states", []):
        where = f"parsers/{s['name']}"
        extract = None
        for op in s.get("parser_ops", []):
            kind = op.get("op")
            if kind in ("extract_VL", "extract_stack"):
                raise UnsupportedConstruct("variable-length header", where)
            if kind != "extract":
                raise UnsupportedConstruct(f"parser op {kind}", where)
            if extract is not None:
                raise UnsupportedConstruct("several extracts in one state", where)
            extract = op["parameters"][0]["value"]
        key = s.get("transition_key", [])
        if len(key) > 1:
            raise UnsupportedConstruct("multi-field select", where)
        select = ctx.field(key[0]["value"], where) if key else None
        trans = []
        for t in s.get("transitions", []):
            nxt = t.get("next_state") or "accept"
            if t.get("type") == "default" or t.get("value") in (None, "default"):
                trans.append({"value": None, "mask": None, "next": nxt})
            else:
                mask = t.get("mask")
                trans.append({"value": _hex(_int(t["value"])), "mask": _hex(None if mask is None else _int(mask)),
                              "next": nxt})
        states.append({"name": s["name"], "extract": extract, "select": select, "transitions": trans})
    return {"start": p.get("init_state"), "states": states}


def _stateful(doc: dict) -> list[dict]:
    out = []
    for r in doc.get("register_arrays", []):
        out.append({"name": r["name"], "kind": "register", "element_width": r["bitwidth"], "length": r["size"],
                    "access": "indirect"})
    for kind, key in (("counter", "counter_arrays"), ("meter", "meter_arrays")):
        for c in doc.get(key, []):
            if c.get("is_direct"):
                raise UnsupportedConstruct("direct stateful attachment", c["name"])
            out.append({"name": c["name"], "kind": kind, "element_width": 32, "length": c["size"],
                        "access": "indirect"})
    return out


def _is_width_mask(e: dict) -> bool:
    if e.get("type") != "hexstr":
        return False
    v = _int(e["value"])
    return v > 0 and (v & (v + 1)) == 0


def _leaves(e: dict, params: list[str], ctx: _Ctx, where: str) -> list[dict]:
    """Operands of an arithmetic expression in source order."""
    kind = e.get("type")
    if kind == "expression":
        v = e["value"]
        if "type" in v:  # the compiler wraps top-level expressions twice
            return _leaves(v, params, ctx, where)
        op = v.get("op")
        if op in ("d2b", "b2d"):
            return _leaves(v["right"], params, ctx, where)
        if op == "&" and _is_width_mask(v["right"]):
            return _leaves(v["left"], params, ctx, where)
        if op not in _ARITH_OPS:
            raise UnsupportedConstruct(f"expression op {op}", where)
        out = []
        for side in ("left", "right"):
            if v.get(side) is not None:
                out += _leaves(v[side], params, ctx, where)
        return out
    return [_operand(e, params, ctx, where)]


def _operand(e: dict, params: list[str], ctx: _Ctx, where: str) -> dict:
    kind = e.get("type")
    if kind == "field":
        return {"field": ctx.field(e["value"], where)}
    if kind == "runtime_data":
        return {"param": params[e["value"]]}
    if kind in ("hexstr", "bool"):
        return {"const": _int(e["value"])}
    if kind in ("register_array", "counter_array", "meter_array"):
        return {"stateful": e["value"]}
    raise UnsupportedConstruct(f"operand {kind}", where)


def _primitive(p: dict, params: list[str], ctx: _Ctx, where: str) -> dict:
    op = p["op"]
    args = p.get("parameters", [])
    if "atomic" in op:
        raise UnsupportedConstruct("atomic block", where)
    if op == "assign":
        dest = _operand(args[0], params, ctx, where)
        if args[1].get("type") == "expression":
            return {"op": "arith", "dest": dest, "src": _leaves(args[1], params, ctx, where)}
        return {"op": "assign", "dest": dest, "src": [_operand(args[1], params, ctx, where)]}
    if op == "register_read":
        return {"op": "register_read", "dest": _operand(args[0], params, ctx, where),
                "src": [_operand(a, params, ctx, where) for a in args[1:]]}
    if op == "register_write":
        return {"op": "register_write", "dest": _operand(args[0], params, ctx, where),
                "src": [x for a in args[1:] for x in _leaves(a, params, ctx, where)]}
    if op == "count":
        return {"op": "counter_op", "src": [_operand(a, params, ctx, where) for a in args]}
    if op == "execute_meter":
        return {"op": "meter_op", "dest": _operand(args[2], params, ctx, where),
                "src": [_operand(a, params, ctx, where) for a in args[:2]]}
    if op == "modify_field_with_hash_based_offset":
        calc = ctx.calculations.get(args[2]["value"])
        if calc is None:
            raise UnresolvedReference(str(args[2]["value"]), where)
        src = [_operand(i, params, ctx, where) for i in calc.get("input", [])]
        return {"op": "hash", "dest": _operand(args[0], params, ctx, where), "src": src}
    if op == "mark_to_drop":
        return {"op": "assign", "dest": {"field": ctx.field(["standard_metadata", "egress_spec"], where)},
                "src": [{"const": 511}]}
    raise UnsupportedConstruct(f"primitive {op}", where)


def _actions(doc: dict, ctx: _Ctx) -> list[dict]:
    out = []
    for a in doc.get("actions", []):
        params = [r["name"] for r in a.get("runtime_data", [])]
        where = f"actions/{a['name']}"
        if a.get("atomic"):
            raise UnsupportedConstruct("atomic block", where)
        out.append({
            "name": a["name"],
            "params": [{"name": r["name"], "width": r["bitwidth"]} for r in a.get("runtime_data", [])],
            "primitives": [_primitive(p, params, ctx, where) for p in a.get("primitives", [])],
        })
    return out


def _expr(e: dict, ctx: _Ctx, where: str) -> dict:
    kind = e.get("type")
    if kind == "expression":
        v = e["value"]
        if "type" in v:
            return _expr(v, ctx, where)
        op = v["op"]
        if op in ("d2b", "b2d"):
            return _expr(v["right"], ctx, where)
        if op == "valid":
            ref = v["right"]
            return {"op": "valid", "header": ref["value"] if ref["type"] == "header" else ref["value"][0]}
        if op in _COMPARE or op in ("and", "or"):
            return {"op": op, "args": [_expr(v["left"], ctx, where), _expr(v["right"], ctx, where)]}
        if op == "not":
            return {"op": "not", "args": [_expr(v["right"], ctx, where)]}
        raise UnsupportedConstruct(f"condition op {op}", where)
    if kind == "field":
        if e["value"][1] == "$valid$":
            return {"op": "valid", "header": e["value"][0]}
        return {"field": ctx.field(e["value"], where)}
    if kind in ("hexstr", "bool"):
        return {"const": _int(e["value"])}
    raise UnsupportedConstruct(f"condition operand {kind}", where)


def _control(pipe: dict | None, ctx: _Ctx) -> dict:
    if pipe is None:
        return {"root": None, "mats": []}
    actions_by_id = {a["id"]: a["name"] for a in ctx.doc.get("actions", []) if "id" in a}
    mats: list[dict] = []
    for t in pipe.get("tables", []):
        where = f"pipelines/{pipe['name']}/{t['name']}"
        if t.get("direct_meters") or t.get("direct_counters"):
            raise UnsupportedConstruct("direct stateful attachment", where)
        keys = [{"field": ctx.field(k["target"], where), "match": k["match_type"]} for k in t.get("key", [])]
        acts = list(t.get("actions") or [actions_by_id[i] for i in t.get("action_ids", [])])
        nexts = t.get("next_tables", {})
        mat: dict = {"name": t["name"]}
        if keys:
            mat["keys"] = keys
        mat["size"] = t.get("max_size", 1) if keys else 1
        mat["actions"] = acts
        if "__HIT__" in nexts or "__MISS__" in nexts:
            node = f"node_{t['name']}_hit"
            mat["next"] = {a: node for a in acts}
            mats.append(mat)
            mats.append({"name": node, "condition": {"op": "hit", "table": t["name"]},
                         "next": {"true": nexts.get("__HIT__"), "false": nexts.get("__MISS__")}})
            continue
        mat["next"] = {a: nexts.get(a) for a in acts}
        mats.append(mat)
    for c in pipe.get("conditionals", []):
        where = f"pipelines/{pipe['name']}/{c['name']}"
        mats.append({"name": c["name"], "condition": _expr(c["expression"], ctx, where),
                     "next": {"true": c.get("true_next"), "false": c.get("false_next")}})
    return {"root": pipe.get("init_table"), "mats": _preorder(mats, pipe.get("init_table"))}


def _preorder(mats: list[dict], root: str | None) -> list[dict]:
    """Depth-first order from the root, true branch before false; unreachable nodes keep source order."""
    by_name = {m["name"]: m for m in mats}
    seen: list[str] = []
    stack = [root] if root else []
    while stack:
        name = stack.pop()
        if name is None or name in seen or name not in by_name:
            continue
        seen.append(name)
        stack.extend(reversed(list(by_name[name]["next"].values())))
    seen += [m["name"] for m in mats if m["name"] not in seen]
    return [by_name[n] for n in seen]


def bmv2_to_nir(doc: dict) -> dict:
    """Translate a parsed BMv2-style document into a NIR document (a dict)."""
    if not isinstance(doc, dict):
        raise SchemaError("$", "document must be an object")
    ctx = _Ctx(doc)
    headers = _headers(doc, ctx)
    pipes = {p["name"]: p for p in doc.get("pipelines", [])}
    raw_name = doc.get("program") or "program"
    return {
        "nir_version": 1,
        "name": PurePath(raw_name).stem.split(".")[0],
        "headers": headers,
        "parser": _parser(doc, ctx),
        "stateful": _stateful(doc),
        "actions": _actions(doc, ctx),
        "ingress": _control(pipes.get("ingress"), ctx),
        "egress": _control(pipes.get("egress"), ctx),
    }

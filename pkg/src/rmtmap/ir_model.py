"""Normalized program IR (NIR).

A NIR document is the hardware-independent view of a P4 program that the
backend consumes: header instances with their fields, the parse graph, the
stateful objects, the action bodies and, per gress, the logical MATs wired
together by their ``next`` maps. ``parse_ir`` validates and resolves a
document; ``dump_ir`` writes the canonical text form back out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from graphlib import CycleError, TopologicalSorter
from importlib import resources
from typing import Iterable, Iterator

import jsonschema

from .errors import CyclicControlFlow, SchemaError, UnresolvedReference

ACCEPT = "accept"
REJECT = "reject"
TERMINALS = (ACCEPT, REJECT)

MATCH_KINDS = ("exact", "lpm", "ternary", "range")
OPCODES = ("assign", "cond_assign", "arith", "register_read", "register_write", "counter_op", "meter_op", "hash")
STATEFUL_OPCODES = ("register_read", "register_write", "counter_op", "meter_op")
COMPARISONS = ("==", "!=", "<", "<=", ">", ">=")
BOOLEAN_OPS = ("and", "or", "not")


# ---------------------------------------------------------------------------
# headers


@dataclass(frozen=True)
class HeaderField:
    name: str  # "header.field"
    bit_width: int
    is_metadata: bool = False
    bridged: bool = False

    @property
    def header(self) -> str:
        return self.name.split(".", 1)[0]

    @property
    def replicated(self) -> bool:
        """Metadata and bridged fields live in both gresses."""
        return self.is_metadata or self.bridged


@dataclass(frozen=True)
class Header:
    name: str
    fields: tuple[HeaderField, ...]
    is_metadata: bool = False
    bridged: bool = False

    @property
    def bit_width(self) -> int:
        return sum(f.bit_width for f in self.fields)

    def offset_of(self, field_name: str) -> int:
        """Bit offset of a field from the start of the header."""
        off = 0
        for f in self.fields:
            if f.name == field_name:
                return off
            off += f.bit_width
        raise KeyError(field_name)


# ---------------------------------------------------------------------------
# parse graph


@dataclass(frozen=True)
class Transition:
    value: int | None  # None marks the default transition
    mask: int | None
    next_state: str

    @property
    def is_default(self) -> bool:
        return self.value is None


@dataclass(frozen=True)
class ParseState:
    name: str
    extracted_header: str | None
    select_field: HeaderField | None
    transitions: tuple[Transition, ...]
    extract_bits: int = 0


@dataclass(frozen=True)
class ParseGraph:
    states: tuple[ParseState, ...]
    start: str | None

    @cached_property
    def by_name(self) -> dict[str, ParseState]:
        return {s.name: s for s in self.states}

    def state(self, name: str) -> ParseState:
        return self.by_name[name]

    @property
    def edge_count(self) -> int:
        return sum(len(s.transitions) for s in self.states)

    def parents(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {s.name: [] for s in self.states}
        for s in self.states:
            for t in s.transitions:
                if t.next_state in out and s.name not in out[t.next_state]:
                    out[t.next_state].append(s.name)
        return out


# ---------------------------------------------------------------------------
# stateful objects, actions and expressions


@dataclass(frozen=True)
class StatefulObject:
    name: str
    kind: str  # register | counter | meter
    element_width: int
    length: int
    access: str = "indirect"  # direct | indirect
    table: str | None = None  # owning table of a direct object


@dataclass(frozen=True)
class Operand:
    kind: str  # field | param | const | stateful
    value: str | int

    def to_json(self) -> dict:
        return {self.kind: self.value}


@dataclass(frozen=True)
class Expr:
    """Condition expression tree.

    Leaves are ``field`` (value = field name) and ``const`` (value = int).
    ``valid`` names a header and ``hit`` a table in ``value``; the other ops
    combine ``args``.
    """

    op: str
    args: tuple["Expr", ...] = ()
    value: str | int | None = None

    def walk(self) -> Iterator["Expr"]:
        yield self
        for a in self.args:
            yield from a.walk()

    def fields(self) -> set[str]:
        return {e.value for e in self.walk() if e.op == "field"}  # type: ignore[misc]

    def valid_headers(self) -> set[str]:
        return {e.value for e in self.walk() if e.op == "valid"}  # type: ignore[misc]

    def hit_tables(self) -> set[str]:
        return {e.value for e in self.walk() if e.op == "hit"}  # type: ignore[misc]

    def inputs(self) -> set[str]:
        """Everything the condition reads, validity bits named ``hdr.$valid``."""
        return self.fields() | {f"{h}.$valid" for h in self.valid_headers()}

    def evaluate(self, env: dict) -> int:
        """Evaluate with ``env`` mapping field names, ``valid:h`` and ``hit:t`` keys."""
        op = self.op
        if op == "field":
            return int(env[self.value])
        if op == "const":
            return int(self.value)  # type: ignore[arg-type]
        if op == "valid":
            return int(bool(env[f"valid:{self.value}"]))
        if op == "hit":
            return int(bool(env[f"hit:{self.value}"]))
        vals = [a.evaluate(env) for a in self.args]
        if op == "not":
            return int(not vals[0])
        if op == "and":
            return int(all(vals))
        if op == "or":
            return int(any(vals))
        a, b = vals
        return int({"==": a == b, "!=": a != b, "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op])

    def to_json(self) -> dict:
        if self.op == "field":
            return {"field": self.value}
        if self.op == "const":
            return {"const": self.value}
        if self.op == "valid":
            return {"op": "valid", "header": self.value}
        if self.op == "hit":
            return {"op": "hit", "table": self.value}
        return {"op": self.op, "args": [a.to_json() for a in self.args]}


@dataclass(frozen=True)
class ActionPrimitive:
    opcode: str
    dest: Operand | None
    sources: tuple[Operand, ...] = ()
    cond: Expr | None = None  # only for cond_assign

    def written_fields(self) -> set[str]:
        if self.dest is not None and self.dest.kind == "field":
            return {self.dest.value}  # type: ignore[arg-type]
        return set()

    def read_fields(self) -> set[str]:
        out = {s.value for s in self.sources if s.kind == "field"}
        if self.cond is not None:
            out |= self.cond.inputs()
        return out  # type: ignore[return-value]

    def stateful_refs(self) -> set[str]:
        refs = {s.value for s in self.sources if s.kind == "stateful"}
        if self.dest is not None and self.dest.kind == "stateful":
            refs.add(self.dest.value)
        return refs  # type: ignore[return-value]

    def params_used(self) -> set[str]:
        return {s.value for s in self.sources if s.kind == "param"}  # type: ignore[misc]


@dataclass(frozen=True)
class Action:
    name: str
    params: tuple[tuple[str, int], ...]
    primitives: tuple[ActionPrimitive, ...]

    @property
    def arg_bits(self) -> int:
        return sum(w for _, w in self.params)

    def written_fields(self) -> set[str]:
        return set().union(*(p.written_fields() for p in self.primitives)) if self.primitives else set()

    def read_fields(self) -> set[str]:
        return set().union(*(p.read_fields() for p in self.primitives)) if self.primitives else set()

    def stateful_refs(self) -> set[str]:
        return set().union(*(p.stateful_refs() for p in self.primitives)) if self.primitives else set()


# ---------------------------------------------------------------------------
# match-action tables and the program


@dataclass(frozen=True)
class MatchKey:
    field: str
    kind: str


@dataclass(frozen=True)
class LogicalMat:
    name: str
    match_keys: tuple[MatchKey, ...] = ()
    size: int = 1
    actions: tuple[Action, ...] = ()
    next: tuple[tuple[str, str | None], ...] = ()  # outcome -> target (None = END)
    condition: Expr | None = None

    @property
    def is_conditional(self) -> bool:
        return self.condition is not None

    def targets(self) -> list[str]:
        seen: list[str] = []
        for _, t in self.next:
            if t is not None and t not in seen:
                seen.append(t)
        return seen


@dataclass(frozen=True)
class ProgramIr:
    name: str
    headers: tuple[Header, ...]
    parse_graph: ParseGraph
    stateful: tuple[StatefulObject, ...]
    actions: tuple[Action, ...]
    ingress_mats: tuple[LogicalMat, ...]
    egress_mats: tuple[LogicalMat, ...]
    ingress_root: str | None
    egress_root: str | None

    @property
    def header_fields(self) -> tuple[HeaderField, ...]:
        return tuple(f for h in self.headers for f in h.fields)

    @cached_property
    def fields_by_name(self) -> dict[str, HeaderField]:
        return {f.name: f for f in self.header_fields}

    @cached_property
    def headers_by_name(self) -> dict[str, Header]:
        return {h.name: h for h in self.headers}

    @cached_property
    def stateful_by_name(self) -> dict[str, StatefulObject]:
        return {s.name: s for s in self.stateful}

    def mats(self, gress: str) -> tuple[LogicalMat, ...]:
        return self.ingress_mats if gress == "ingress" else self.egress_mats

    def root(self, gress: str) -> str | None:
        return self.ingress_root if gress == "ingress" else self.egress_root


# ---------------------------------------------------------------------------
# JSON -> IR


def _schema() -> dict:
    text = resources.files("rmtmap").joinpath("schemas/nir.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


_VALIDATOR: jsonschema.protocols.Validator | None = None


def _validator():
    global _VALIDATOR
    if _VALIDATOR is None:
        schema = _schema()
        cls = jsonschema.validators.validator_for(schema)
        _VALIDATOR = cls(schema)
    return _VALIDATOR


def _json_path(parts: Iterable) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _num(v) -> int | None:
    if v is None:
        return None
    return int(v, 16) if isinstance(v, str) else int(v)


def _expr(obj: dict) -> Expr:
    if "field" in obj:
        return Expr("field", value=obj["field"])
    if "const" in obj:
        return Expr("const", value=_num(obj["const"]))
    op = obj.get("op")
    if op == "valid":
        return Expr("valid", value=obj["header"])
    if op == "hit":
        return Expr("hit", value=obj["table"])
    args = tuple(_expr(a) for a in obj.get("args", ()))
    want = 1 if op == "not" else 2
    if (op in COMPARISONS and len(args) != 2) or (op in BOOLEAN_OPS and len(args) < want):
        raise SchemaError(f"expression {op}", f"wrong number of arguments ({len(args)})")
    return Expr(op, args)


def _operand(obj: dict) -> Operand:
    ((kind, value),) = obj.items()
    return Operand(kind, _num(value) if kind == "const" else value)


def _check_acyclic(gress: str, mats: dict[str, LogicalMat]) -> None:
    graph = {name: set(m.targets()) for name, m in mats.items()}
    try:
        tuple(TopologicalSorter({k: v for k, v in graph.items()}).static_order())
    except CycleError as exc:
        cycle = exc.args[1]
        raise CyclicControlFlow(f"{gress}: " + " -> ".join(reversed(cycle)), "control flow must be loop-free") from None


def load_ir(doc: dict) -> ProgramIr:
    """Validate a decoded NIR object and resolve every reference."""
    errors = sorted(_validator().iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise SchemaError(_json_path(err.absolute_path), err.message)

    # headers and fields
    headers: list[Header] = []
    field_index: dict[str, HeaderField] = {}
    for h in doc["headers"]:
        if any(x.name == h["name"] for x in headers):
            raise SchemaError(f"headers.{h['name']}", "duplicate header name")
        meta, bridged = h.get("metadata", False), h.get("bridged", False)
        fields = []
        for f in h["fields"]:
            hf = HeaderField(f"{h['name']}.{f['name']}", f["width"], meta, bridged)
            if hf.name in field_index:
                raise SchemaError(f"headers.{h['name']}.{f['name']}", "duplicate field name")
            field_index[hf.name] = hf
            fields.append(hf)
        headers.append(Header(h["name"], tuple(fields), meta, bridged))
    header_index = {h.name: h for h in headers}

    def need_field(name: str, where: str) -> HeaderField:
        if name not in field_index:
            raise UnresolvedReference(name, where)
        return field_index[name]

    # parse graph
    pdoc = doc["parser"]
    state_names = [s["name"] for s in pdoc["states"]]
    if len(set(state_names)) != len(state_names):
        raise SchemaError("parser.states", "duplicate state name")
    states = []
    for s in pdoc["states"]:
        where = f"parser state {s['name']}"
        hdr = s.get("extract")
        if hdr is not None and hdr not in header_index:
            raise UnresolvedReference(hdr, where)
        sel = need_field(s["select"], where) if s.get("select") else None
        trans = []
        for t in s["transitions"]:
            if t["next"] not in state_names and t["next"] not in TERMINALS:
                raise UnresolvedReference(t["next"], where)
            trans.append(Transition(_num(t.get("value")), _num(t.get("mask")), t["next"]))
        if not trans:
            raise SchemaError(f"parser.states.{s['name']}", "a state needs at least one transition")
        if sel is None and any(not t.is_default for t in trans):
            raise SchemaError(f"parser.states.{s['name']}", "valued transition without a select field")
        states.append(ParseState(s["name"], hdr, sel, tuple(trans), header_index[hdr].bit_width if hdr else 0))
    start = pdoc["start"]
    if start is not None and start not in state_names:
        raise UnresolvedReference(start, "parser.start")
    if start is None and states:
        raise SchemaError("parser.start", "states declared without a start state")
    graph = ParseGraph(tuple(states), start)
    _check_parse_graph(graph)

    # stateful objects
    stateful = []
    for o in doc["stateful"]:
        if any(x.name == o["name"] for x in stateful):
            raise SchemaError(f"stateful.{o['name']}", "duplicate stateful object")
        stateful.append(StatefulObject(o["name"], o["kind"], o["element_width"], o["length"], o["access"], o.get("table")))
    stateful_index = {o.name: o for o in stateful}

    # actions
    actions = []
    for a in doc["actions"]:
        if any(x.name == a["name"] for x in actions):
            raise SchemaError(f"actions.{a['name']}", "duplicate action name")
        params = tuple((p["name"], p["width"]) for p in a["params"])
        pnames = {p for p, _ in params}
        prims = []
        for p in a["primitives"]:
            where = f"action {a['name']}"
            dest = _operand(p["dest"]) if "dest" in p else None
            srcs = tuple(_operand(x) for x in p.get("src", ()))
            cond = _expr(p["cond"]) if "cond" in p else None
            for opnd in ([dest] if dest else []) + list(srcs):
                if opnd.kind == "field":
                    need_field(opnd.value, where)  # type: ignore[arg-type]
                elif opnd.kind == "param" and opnd.value not in pnames:
                    raise UnresolvedReference(opnd.value, where)  # type: ignore[arg-type]
                elif opnd.kind == "stateful" and opnd.value not in stateful_index:
                    raise UnresolvedReference(opnd.value, where)  # type: ignore[arg-type]
            prim = ActionPrimitive(p["op"], dest, srcs, cond)
            if prim.opcode in STATEFUL_OPCODES:
                refs = prim.stateful_refs()
                if not refs:
                    raise SchemaError(f"actions.{a['name']}", f"{prim.opcode} without a stateful operand")
                want = {"register_read": "register", "register_write": "register",
                        "counter_op": "counter", "meter_op": "meter"}[prim.opcode]
                for r in refs:
                    if stateful_index[r].kind != want:
                        raise SchemaError(f"actions.{a['name']}", f"{prim.opcode} on {stateful_index[r].kind} {r}")
            if cond is not None:
                _check_expr(cond, field_index, header_index, None, where)
            prims.append(prim)
        actions.append(Action(a["name"], params, tuple(prims)))
    action_index = {a.name: a for a in actions}

    # controls
    controls = {}
    for gress in ("ingress", "egress"):
        cdoc = doc[gress]
        names = [m["name"] for m in cdoc["mats"]]
        if len(set(names)) != len(names):
            raise SchemaError(f"{gress}.mats", "duplicate table name")
        mats = []
        for m in cdoc["mats"]:
            where = f"{gress} table {m['name']}"
            keys = []
            for k in m.get("keys", ()):
                need_field(k["field"], where)
                keys.append(MatchKey(k["field"], k["match"]))
            acts = []
            for an in m.get("actions", ()):
                if an not in action_index:
                    raise UnresolvedReference(an, where)
                acts.append(action_index[an])
            cond = _expr(m["condition"]) if m.get("condition") is not None else None
            if cond is not None:
                _check_expr(cond, field_index, header_index, set(names), where)
            nxt = []
            for outcome, target in m["next"].items():
                if target is not None and target not in names:
                    raise UnresolvedReference(target, where)
                nxt.append((outcome, target))
            size = m.get("size", 0 if cond is not None else 1)
            if cond is None and size < 1:
                raise SchemaError(f"{gress}.mats.{m['name']}.size", "non-conditional tables need size >= 1")
            mats.append(LogicalMat(m["name"], tuple(keys), size, tuple(acts), tuple(nxt), cond))
        root = cdoc["root"]
        if root is not None and root not in names:
            raise UnresolvedReference(root, f"{gress}.root")
        if root is None and mats:
            raise SchemaError(f"{gress}.root", "tables declared without a root")
        _check_acyclic(gress, {m.name: m for m in mats})
        controls[gress] = (tuple(mats), root)

    for o in stateful:
        if o.access == "direct":
            all_tables = {m.name for g in controls.values() for m in g[0]}
            if o.table is None or o.table not in all_tables:
                raise UnresolvedReference(o.table or "<none>", f"direct stateful {o.name}")

    return ProgramIr(
        name=doc["name"],
        headers=tuple(headers),
        parse_graph=graph,
        stateful=tuple(stateful),
        actions=tuple(actions),
        ingress_mats=controls["ingress"][0],
        egress_mats=controls["egress"][0],
        ingress_root=controls["ingress"][1],
        egress_root=controls["egress"][1],
    )


def _check_expr(e: Expr, fields, headers, tables, where: str) -> None:
    for node in e.walk():
        if node.op == "field" and node.value not in fields:
            raise UnresolvedReference(node.value, where)  # type: ignore[arg-type]
        if node.op == "valid" and node.value not in headers:
            raise UnresolvedReference(node.value, where)  # type: ignore[arg-type]
        if node.op == "hit" and tables is not None and node.value not in tables:
            raise UnresolvedReference(node.value, where)  # type: ignore[arg-type]


def _check_parse_graph(g: ParseGraph) -> None:
    if g.start is None:
        return
    deps = {s.name: {t.next_state for t in s.transitions if t.next_state not in TERMINALS} for s in g.states}
    try:
        tuple(TopologicalSorter(deps).static_order())
    except CycleError as exc:
        raise SchemaError("parser.states", "parse graph has a cycle: " + " -> ".join(exc.args[1])) from None
    # start must be able to reach accept
    seen, todo = set(), [g.start]
    while todo:
        n = todo.pop()
        if n == ACCEPT:
            return
        if n in seen or n == REJECT:
            continue
        seen.add(n)
        todo.extend(t.next_state for t in g.state(n).transitions)
    raise SchemaError("parser.start", "accept is unreachable from the start state")


def parse_ir(document: str) -> ProgramIr:
    """Parse NIR JSON text into a resolved ProgramIr."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError("<root>", f"not JSON: {exc}") from None
    return load_ir(doc)


def read_ir(path) -> ProgramIr:
    with open(path, encoding="utf-8") as fh:
        return parse_ir(fh.read())


# ---------------------------------------------------------------------------
# IR -> JSON


def _hex(v: int | None):
    return None if v is None else f"0x{v:x}"


def ir_to_json(ir: ProgramIr) -> dict:
    def mat(m: LogicalMat) -> dict:
        out: dict = {"name": m.name}
        if m.match_keys:
            out["keys"] = [{"field": k.field, "match": k.kind} for k in m.match_keys]
        if not m.is_conditional:
            out["size"] = m.size
        if m.actions:
            out["actions"] = [a.name for a in m.actions]
        if m.condition is not None:
            out["condition"] = m.condition.to_json()
        out["next"] = dict(m.next)
        return out

    def prim(p: ActionPrimitive) -> dict:
        out: dict = {"op": p.opcode}
        if p.dest is not None:
            out["dest"] = p.dest.to_json()
        if p.sources:
            out["src"] = [s.to_json() for s in p.sources]
        if p.cond is not None:
            out["cond"] = p.cond.to_json()
        return out

    def header(h: Header) -> dict:
        out: dict = {"name": h.name}
        if h.is_metadata:
            out["metadata"] = True
        if h.bridged:
            out["bridged"] = True
        out["fields"] = [{"name": f.name.split(".", 1)[1], "width": f.bit_width} for f in h.fields]
        return out

    def state(s: ParseState) -> dict:
        return {
            "name": s.name,
            "extract": s.extracted_header,
            "select": s.select_field.name if s.select_field else None,
            "transitions": [
                {"value": _hex(t.value), "mask": _hex(t.mask), "next": t.next_state} for t in s.transitions
            ],
        }

    def stateful(o: StatefulObject) -> dict:
        out = {"name": o.name, "kind": o.kind, "element_width": o.element_width, "length": o.length, "access": o.access}
        if o.table is not None:
            out["table"] = o.table
        return out

    return {
        "nir_version": 1,
        "name": ir.name,
        "headers": [header(h) for h in ir.headers],
        "parser": {"start": ir.parse_graph.start, "states": [state(s) for s in ir.parse_graph.states]},
        "stateful": [stateful(o) for o in ir.stateful],
        "actions": [
            {"name": a.name, "params": [{"name": n, "width": w} for n, w in a.params], "primitives": [prim(p) for p in a.primitives]}
            for a in ir.actions
        ],
        "ingress": {"root": ir.ingress_root, "mats": [mat(m) for m in ir.ingress_mats]},
        "egress": {"root": ir.egress_root, "mats": [mat(m) for m in ir.egress_mats]},
    }


def dump_ir(ir: ProgramIr) -> str:
    """Canonical NIR text: two-space indent, trailing newline."""
    return json.dumps(ir_to_json(ir), indent=2) + "\n"


def topological_order(mats: Iterable[LogicalMat]) -> list[str]:
    """A topological order of the MAT successor graph (acyclicity witness)."""
    mats = list(mats)
    preds: dict[str, set[str]] = {m.name: set() for m in mats}
    for m in mats:
        for t in m.targets():
            preds[t].add(m.name)
    ts = TopologicalSorter(preds)
    return list(ts.static_order())


def normalize_bmv2(document: str) -> str:
    """Translate a BMv2-style compiler JSON document into canonical NIR text."""
    from .bmv2 import bmv2_to_nir

    return dump_ir(load_ir(bmv2_to_nir(json.loads(document))))

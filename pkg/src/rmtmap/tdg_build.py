"""Table dependency graph construction.

The TDG of a gress has one node per logical MAT. Edges join every pair of
tables that are directly wired in the control flow, plus every pair on a
common control path that has a data dependency. Each edge records the set
of dependency kinds found and the strictest one.

Three rewrites prepare the graph for placement: conditionals become small
tables that write a 1-bit auxiliary field, tables touching indirect
stateful objects that must live in different stages are split, and every
node gets a level (how many stage boundaries must still follow it).
"""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field, replace
from functools import cached_property
from graphlib import TopologicalSorter

from .errors import LevelConflict, Rejection
from .ir_model import Action, ActionPrimitive, Expr, HeaderField, LogicalMat, MatchKey, Operand, ProgramIr


class DependencyKind(str, enum.Enum):
    MATCH = "match"
    ACTION = "action"
    SUCCESSOR = "successor"
    REVERSE_MATCH = "reverse_match"
    STATEFUL = "stateful"
    NONE = "none"


_RANK = {
    DependencyKind.NONE: 0,
    DependencyKind.REVERSE_MATCH: 1,
    DependencyKind.SUCCESSOR: 1,
    DependencyKind.ACTION: 2,
    DependencyKind.MATCH: 3,
}
# Successor and reverse-match tie; successor is reported on a tie.
_TIE = {DependencyKind.SUCCESSOR: 1, DependencyKind.REVERSE_MATCH: 0}

STAGE_SEPARATING = (DependencyKind.MATCH, DependencyKind.ACTION)


def strictest(kinds) -> DependencyKind:
    ordered = [k for k in kinds if k in _RANK]
    if not ordered:
        return DependencyKind.NONE
    return max(ordered, key=lambda k: (_RANK[k], _TIE.get(k, 0)))


@dataclass(frozen=True)
class TdgNode:
    name: str
    keys: tuple[MatchKey, ...] = ()
    size: int = 1
    actions: tuple[Action, ...] = ()
    next: tuple[tuple[str, str | None], ...] = ()
    condition: Expr | None = None
    origin: str = ""  # MAT this node came from
    part: int = 0  # 0 = not split, k = Part-k of a split table
    after: str | None = None  # previous part of the same split table
    indirect: frozenset = frozenset()
    direct: frozenset = frozenset()
    aux_field: str | None = None  # set on rewritten conditionals
    guard: tuple[tuple[str, int], ...] = ()  # auxiliary (field, value) pattern

    @property
    def is_conditional(self) -> bool:
        return self.condition is not None

    def targets(self) -> list[str]:
        seen: list[str] = []
        for _, t in self.next:
            if t is not None and t not in seen:
                seen.append(t)
        return seen

    @cached_property
    def match_fields(self) -> frozenset:
        out = {k.field for k in self.keys}
        if self.condition is not None:
            out |= self.condition.inputs()
        return frozenset(out)

    @cached_property
    def write_fields(self) -> frozenset:
        out: set[str] = set()
        for a in self.actions:
            out |= a.written_fields()
        return frozenset(out)

    @cached_property
    def read_fields(self) -> frozenset:
        out: set[str] = set()
        for a in self.actions:
            out |= a.read_fields()
        return frozenset(out)

    @property
    def has_exact_keys_only(self) -> bool:
        return bool(self.keys) and all(k.kind == "exact" for k in self.keys)

    @property
    def action_entry_bits(self) -> int:
        return max((a.arg_bits for a in self.actions), default=0)


@dataclass(frozen=True)
class TdgEdge:
    src: str
    dst: str
    kinds: frozenset
    control_flow: bool = False

    @property
    def strictest(self) -> DependencyKind:
        return strictest(self.kinds)

    @property
    def separates_stages(self) -> bool:
        return self.strictest in STAGE_SEPARATING


@dataclass(frozen=True)
class Tdg:
    gress: str
    nodes: tuple[TdgNode, ...]
    edges: tuple[TdgEdge, ...]
    root: str | None
    field_widths: tuple[tuple[str, int], ...]
    stateful: tuple  # StatefulObject values referenced by the program
    aux_fields: tuple[HeaderField, ...] = ()
    stateful_groups: tuple[tuple[str, ...], ...] = ()

    @cached_property
    def node(self) -> dict[str, TdgNode]:
        return {n.name: n for n in self.nodes}

    @cached_property
    def edge(self) -> dict[tuple[str, str], TdgEdge]:
        return {(e.src, e.dst): e for e in self.edges}

    @cached_property
    def widths(self) -> dict[str, int]:
        return dict(self.field_widths)

    @cached_property
    def stateful_by_name(self) -> dict:
        return {o.name: o for o in self.stateful}

    def width(self, name: str) -> int:
        if name.endswith(".$valid"):
            return 1
        return self.widths[name]

    def key_bits(self, n: TdgNode) -> int:
        return sum(self.width(k.field) for k in n.keys)

    def out_edges(self, name: str) -> list[TdgEdge]:
        return [e for e in self.edges if e.src == name]

    def in_edges(self, name: str) -> list[TdgEdge]:
        return [e for e in self.edges if e.dst == name]

    def index(self, name: str) -> int:
        return [n.name for n in self.nodes].index(name)

    def group_of(self, name: str) -> tuple[str, ...] | None:
        for g in self.stateful_groups:
            if name in g:
                return g
        return None

    def object_accessors(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for n in self.nodes:
            for o in sorted(n.indirect):
                out.setdefault(o, []).append(n.name)
        return out


@dataclass(frozen=True)
class LevelAssignment:
    levels: tuple[tuple[str, int], ...]

    @cached_property
    def map(self) -> dict[str, int]:
        return dict(self.levels)

    def __getitem__(self, name: str) -> int:
        return self.map[name]

    @property
    def max_level(self) -> int:
        return max(self.map.values(), default=-1)


# ---------------------------------------------------------------------------
# dependency detection


def _predicates(a: TdgNode, b: TdgNode) -> bool:
    """Does b's execution depend on what a did (hit, miss, action, branch)?"""
    if b.after is not None and b.after == a.name:
        return False  # split parts are tied by a forced match dependency instead
    if b.name in a.targets():
        if a.is_conditional:
            return True
        outcomes = {t for _, t in a.next}
        if len(outcomes) > 1:
            return True
    if b.condition is not None and a.origin in b.condition.hit_tables() and a.part in (0, 1):
        return True
    return False


def detect_dependency(a: TdgNode, b: TdgNode, path_related: bool) -> frozenset:
    """Dependency kinds from a to b. Only Stateful applies off-path."""
    kinds: set[DependencyKind] = set()
    if a.indirect & b.indirect:
        kinds.add(DependencyKind.STATEFUL)
    if not path_related:
        return frozenset(kinds)
    if a.write_fields & b.match_fields or b.after == a.name:
        kinds.add(DependencyKind.MATCH)
    elif a.write_fields & b.write_fields:
        kinds.add(DependencyKind.ACTION)
    if _predicates(a, b):
        kinds.add(DependencyKind.SUCCESSOR)
    if a.match_fields & b.write_fields:
        kinds.add(DependencyKind.REVERSE_MATCH)
    return frozenset(kinds)


def _node_order(nodes: list[TdgNode], root: str | None) -> list[TdgNode]:
    """Topological order, ties broken by declaration order."""
    index = {n.name: i for i, n in enumerate(nodes)}
    indeg = {n.name: 0 for n in nodes}
    for n in nodes:
        for x in n.targets():
            indeg[x] += 1
    ready = [index[n] for n, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = nodes[heapq.heappop(ready)]
        order.append(n)
        for x in n.targets():
            indeg[x] -= 1
            if indeg[x] == 0:
                heapq.heappush(ready, index[x])
    return order


def _reachability(nodes: list[TdgNode]) -> dict[str, set[str]]:
    reach: dict[str, set[str]] = {}
    for n in reversed(nodes):  # nodes are topologically ordered
        r: set[str] = set()
        for t in n.targets():
            r.add(t)
            r |= reach[t]
        reach[n.name] = r
    return reach


def _assemble(base: Tdg, nodes: list[TdgNode], root: str | None, aux=None) -> Tdg:
    nodes = _node_order(nodes, root)
    reach = _reachability(nodes)
    by = {n.name: n for n in nodes}
    edges: list[TdgEdge] = []
    for a in nodes:
        direct = set(a.targets())
        for b in nodes:
            if b.name not in reach[a.name]:
                continue
            kinds = detect_dependency(a, b, True)
            cf = b.name in direct
            if cf or kinds - {DependencyKind.SUCCESSOR}:
                edges.append(TdgEdge(a.name, b.name, kinds or frozenset({DependencyKind.NONE}), cf))
    t = replace(
        base,
        nodes=tuple(nodes),
        edges=tuple(edges),
        root=root,
        aux_fields=base.aux_fields if aux is None else tuple(aux),
    )
    return replace(t, stateful_groups=_stateful_groups(t))


def _stateful_groups(t: Tdg) -> tuple[tuple[str, ...], ...]:
    parent = {n.name: n.name for n in t.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for accessors in t.object_accessors().values():
        for other in accessors[1:]:
            parent[find(other)] = find(accessors[0])
    groups: dict[str, list[str]] = {}
    for n in t.nodes:
        if n.indirect:
            groups.setdefault(find(n.name), []).append(n.name)
    return tuple(tuple(g) for g in groups.values())


def _to_node(m: LogicalMat, ir: ProgramIr) -> TdgNode:
    refs: set[str] = set()
    for a in m.actions:
        refs |= a.stateful_refs()
    indirect = frozenset(r for r in refs if ir.stateful_by_name[r].access == "indirect")
    direct = frozenset(o.name for o in ir.stateful if o.access == "direct" and o.table == m.name)
    return TdgNode(
        name=m.name,
        keys=m.match_keys,
        size=m.size,
        actions=m.actions,
        next=m.next,
        condition=m.condition,
        origin=m.name,
        indirect=indirect,
        direct=direct | frozenset(r for r in refs if ir.stateful_by_name[r].access == "direct"),
    )


def build_tdg(ir: ProgramIr, gress: str = "ingress") -> Tdg:
    """Raw TDG of one gress, before any rewriting."""
    nodes = [_to_node(m, ir) for m in ir.mats(gress)]
    base = Tdg(
        gress=gress,
        nodes=(),
        edges=(),
        root=ir.root(gress),
        field_widths=tuple((f.name, f.bit_width) for f in ir.header_fields),
        stateful=ir.stateful,
    )
    return _assemble(base, nodes, ir.root(gress))


# ---------------------------------------------------------------------------
# conditional rewrite


AUX_HEADER = "aux"


def preprocess_conditionals(t: Tdg) -> Tdg:
    """Turn each conditional into a table that computes a 1-bit flag.

    The conditional's action writes its condition into a fresh auxiliary
    field. The table on each branch gets that field as a ternary key (1 on
    the true side, 0 on the false side) plus any flag its conditional was
    itself guarded by, so nested branches test every enclosing condition.
    Branch targets that are also reached some other way are left unkeyed.
    """
    conds = [n for n in t.nodes if n.is_conditional and n.aux_field is None]
    if not conds:
        return t
    nodes = {n.name: n for n in t.nodes}
    preds: dict[str, set[str]] = {n.name: set() for n in t.nodes}
    for n in t.nodes:
        for x in n.targets():
            preds[x].add(n.name)

    widths = dict(t.field_widths)
    aux_fields = list(t.aux_fields)
    for c in conds:  # topological, so an outer guard is settled before inner ones
        c = nodes[c.name]
        aux = f"{AUX_HEADER}.{c.name}"
        while aux in widths:
            aux += "_"
        widths[aux] = 1
        aux_fields.append(HeaderField(aux, 1))
        body = ActionPrimitive("cond_assign", Operand("field", aux), (), c.condition)
        act = Action(f"set_{c.name}", (), (body,))
        nodes[c.name] = replace(c, actions=c.actions + (act,), aux_field=aux)
        branch = dict(c.next)
        for outcome, value in (("true", 1), ("false", 0)):
            target = branch.get(outcome)
            if target is None or branch.get("true") == branch.get("false"):
                continue
            if preds[target] != {c.name}:
                continue
            x = nodes[target]
            guard = nodes[c.name].guard + ((aux, value),)
            keys = x.keys + tuple(MatchKey(f, "ternary") for f, _ in guard if f not in {k.field for k in x.keys})
            # a guarded conditional still needs one entry to evaluate itself
            nodes[target] = replace(x, keys=keys, guard=guard, size=max(x.size, 1))
    t = replace(t, field_widths=tuple(widths.items()))
    return _assemble(t, [nodes[n.name] for n in t.nodes], t.root, aux_fields)


# ---------------------------------------------------------------------------
# stateful checks and bifurcation


def forced_successors(t: Tdg) -> dict[str, set[str]]:
    """For each node, the nodes that must sit in a strictly later stage.

    b is forced after a when some TDG path from a to b crosses a Match or
    Action edge.
    """
    order = [n.name for n in t.nodes]
    out_edges: dict[str, list[TdgEdge]] = {n: [] for n in order}
    for e in t.edges:
        out_edges[e.src].append(e)
    reach: dict[str, set[str]] = {}
    forced: dict[str, set[str]] = {}
    for n in reversed(order):
        r: set[str] = set()
        f: set[str] = set()
        for e in out_edges[n]:
            r |= {e.dst} | reach[e.dst]
            if e.separates_stages:
                f |= {e.dst} | reach[e.dst]
            else:
                f |= forced[e.dst]
        reach[n], forced[n] = r, f
    return forced


def check_same_path_stateful(t: Tdg) -> None:
    forced = forced_successors(t)
    for obj, accessors in t.object_accessors().items():
        for a in accessors:
            for b in accessors:
                if b in forced[a]:
                    raise Rejection(
                        "same-path stateful",
                        f"{a} and {b} both access {obj} but a dependency chain forces them into different stages",
                        nodes=(a, b),
                        object=obj,
                    )


def _object_ranks(t: Tdg, m: TdgNode, forced) -> dict[str, int] | None:
    """Stage order of the objects m touches, or None if no split is needed."""
    objs = sorted(m.indirect)
    acc = t.object_accessors()
    others = {o: [x for x in acc[o] if x != m.name] for o in objs}
    before: dict[str, set[str]] = {o: set() for o in objs}  # o -> objects that must come earlier
    for o1 in objs:
        for o2 in objs:
            if o1 == o2:
                continue
            if any(y in forced[x] for x in others[o1] for y in others[o2]):
                before[o2].add(o1)
    if not any(before.values()):
        return None
    for o1 in objs:
        for o2 in before[o1]:
            if o1 in before[o2]:
                raise Rejection(
                    "stateful order conflict",
                    f"{m.name} touches {o1} and {o2} whose other users are ordered both ways",
                    nodes=(m.name,),
                    object=o1,
                )
    rank: dict[str, int] = {}
    for o in TopologicalSorter(before).static_order():
        rank[o] = max((rank[p] + 1 for p in before[o]), default=0)
    return rank


def _split_action(a: Action, rank: dict[str, int], parts: int, node: str) -> list[list[ActionPrimitive]]:
    pieces: list[list[ActionPrimitive]] = [[] for _ in range(parts)]
    touched = [max((rank[o] for o in p.stateful_refs() if o in rank), default=None) for p in a.primitives]
    if all(r is None for r in touched):
        pieces[0] = list(a.primitives)
        return pieces
    # cut k goes right after the last primitive touching an object of rank < k
    cuts = [0]
    for k in range(1, parts):
        last = max((i + 1 for i, r in enumerate(touched) if r is not None and r < k), default=0)
        cuts.append(max(last, cuts[-1]))
    cuts.append(len(a.primitives))
    for k in range(parts):
        pieces[k] = list(a.primitives[cuts[k]:cuts[k + 1]])
    for k, piece in enumerate(pieces):
        for p in piece:
            for o in p.stateful_refs():
                if o in rank and rank[o] != k:
                    raise Rejection(
                        "stateful order conflict",
                        f"action {a.name} of {node} touches {o} out of stage order",
                        nodes=(node,),
                        object=o,
                    )
    return pieces


def _split(t: Tdg, m: TdgNode, rank: dict[str, int]) -> list[TdgNode]:
    parts = max(rank.values()) + 1
    base = m.origin or m.name
    first = m.part or 1
    names = [f"{base}--Part-{first + k}" for k in range(parts)]
    per_part: list[list[Action]] = [[] for _ in range(parts)]
    for a in m.actions:
        for k, prims in enumerate(_split_action(a, rank, parts, m.name)):
            if k > 0 and not prims:
                continue
            used = set().union(*(p.params_used() for p in prims)) if prims else set()
            params = tuple(p for p in a.params if p[0] in used)
            per_part[k].append(Action(f"{a.name}--Part-{first + k}", params, tuple(prims)))
    out = []
    for k in range(parts):
        objs = set()
        for a in per_part[k]:
            objs |= a.stateful_refs()
        nxt = m.next if k == parts - 1 else (("always", names[k + 1]),)
        out.append(
            replace(
                m,
                name=names[k],
                keys=m.keys if k == 0 else (),
                actions=tuple(per_part[k]),
                next=nxt,
                part=first + k,
                after=m.after if k == 0 else names[k - 1],
                indirect=frozenset(o for o in m.indirect if o in objs),
                guard=m.guard if k == 0 else (),
            )
        )
    return out


def bifurcate_stateful(t: Tdg) -> Tdg:
    """Reject impossible stateful sharing and split tables that need two stages."""
    check_same_path_stateful(t)
    for _ in range(len(t.nodes) + 1):
        forced = forced_successors(t)
        target = None
        for m in t.nodes:
            if len(m.indirect) >= 2:
                rank = _object_ranks(t, m, forced)
                if rank is not None:
                    target = (m, rank)
                    break
        if target is None:
            break
        m, rank = target
        pieces = _split(t, m, rank)
        nodes = []
        for n in t.nodes:
            if n.name == m.name:
                nodes.extend(pieces)
                continue
            if m.name in n.targets():
                n = replace(n, next=tuple((o, pieces[0].name if x == m.name else x) for o, x in n.next))
            nodes.append(n)
        root = pieces[0].name if t.root == m.name else t.root
        t = _assemble(t, nodes, root)
        check_same_path_stateful(t)
    return t


# ---------------------------------------------------------------------------
# levels


def base_levels(t: Tdg) -> dict[str, int]:
    """Longest chain of Match/Action edges from each node to a sink."""
    level: dict[str, int] = {}
    outs: dict[str, list[TdgEdge]] = {n.name: [] for n in t.nodes}
    for e in t.edges:
        outs[e.src].append(e)
    for n in reversed(t.nodes):
        level[n.name] = max((level[e.dst] + (1 if e.separates_stages else 0) for e in outs[n.name]), default=0)
    return level


def assign_levels(t: Tdg, max_rounds: int | None = None) -> LevelAssignment:
    """Levels with every stateful group lifted to its highest member."""
    level = base_levels(t)
    outs: dict[str, list[TdgEdge]] = {n.name: [] for n in t.nodes}
    for e in t.edges:
        outs[e.src].append(e)
    rounds = max_rounds if max_rounds is not None else len(t.nodes) + 1
    for _ in range(rounds + 1):
        changed = False
        for g in t.stateful_groups:
            top = max(level[n] for n in g)
            for n in g:
                if level[n] != top:
                    level[n] = top
                    changed = True
        for n in reversed(t.nodes):
            need = max((level[e.dst] + (1 if e.separates_stages else 0) for e in outs[n.name]), default=0)
            if need > level[n.name]:
                level[n.name] = need
                changed = True
        if not changed:
            return LevelAssignment(tuple((n.name, level[n.name]) for n in t.nodes))
    raise LevelConflict("stateful group levels cannot be equalised without breaking a match/action edge")


def prepare_tdg(ir: ProgramIr, gress: str = "ingress") -> tuple[Tdg, LevelAssignment]:
    """Full preprocessing pipeline: build, rewrite conditionals, split, level."""
    t = build_tdg(ir, gress)
    t = preprocess_conditionals(t)
    t = bifurcate_stateful(t)
    return t, assign_levels(t)

"""Parse graph -> parser TCAM state table.

States are grouped into clusters that the parser can handle in a single
lookup cycle. Each cluster becomes one parser state id; every route from a
cluster's root to a transition leaving the cluster becomes one TCAM entry.
Entries are emitted depth-first with declaration order kept at each state
and the default transition last, which is a valid first-match priority.
A final compaction pass drops entries shadowed by a later entry with the
same outcome and merges same-outcome entries one bit apart.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import StateTooLarge
from .hw_spec import STATE_ID_BITS, ParserSpec
from .ir_model import ACCEPT, REJECT, TERMINALS, HeaderField, ParseGraph, ParseState


@dataclass(frozen=True)
class ParserCluster:
    id: int
    member_states: tuple[str, ...]
    total_extract_bits: int
    lookup_fields: tuple[tuple[str, int], ...]  # (field, width) in slot order
    headers_identified: int
    span_bits: int

    @property
    def root(self) -> str:
        return self.member_states[0]


@dataclass(frozen=True)
class StateTableEntry:
    current_cluster: int
    match_values: tuple[tuple[int, int], ...]  # (value, mask) per lookup slot
    next_cluster: int | str  # cluster id, ACCEPT or REJECT
    extract_directives: tuple[tuple[str, int, int], ...]  # (header, offset, width)
    move_ahead_bits: int
    path: tuple[str, ...] = ()  # parse states walked, for reports


@dataclass(frozen=True)
class ParserVerdict:
    accepted: bool
    entries: int
    depth: int
    widest_payload_bits: int
    entry_width_bits: int

    @property
    def utilization_pct(self) -> float:
        return round(self.entries / self.depth * 100, 2) if self.depth else 0.0

    @property
    def reason(self) -> str:
        if self.accepted:
            return ""
        if self.entries > self.depth:
            return f"parser table needs {self.entries} entries, TCAM holds {self.depth}"
        return f"lookup payload {self.widest_payload_bits}b exceeds {self.entry_width_bits}b entry"


def _slots(width: int, p: ParserSpec) -> int:
    return -(-width // p.lookup_field_width_bits)


class _Budget:
    """Running totals for one cluster under construction."""

    def __init__(self, g: ParseGraph, p: ParserSpec):
        self.g, self.p = g, p
        self.members: list[str] = []
        self.extract = 0
        self.headers = 0
        self.fields: list[tuple[str, int]] = []
        self.depth: dict[str, int] = {}  # bits extracted before reaching a state

    def _field_slots(self, fields) -> int:
        return sum(_slots(w, self.p) for _, w in fields)

    def fits(self, s: ParseState, entry_depth: int) -> bool:
        p = self.p
        fields = list(self.fields)
        if s.select_field is not None and s.select_field.name not in [f for f, _ in fields]:
            fields.append((s.select_field.name, s.select_field.bit_width))
        return (
            self.headers + (1 if s.extracted_header else 0) <= p.max_headers_per_cycle
            and self.extract + s.extract_bits <= p.max_extract_bits
            and entry_depth + s.extract_bits <= p.lookahead_bits
            and self._field_slots(fields) <= p.lookup_field_count
        )

    def add(self, s: ParseState, entry_depth: int) -> None:
        self.members.append(s.name)
        self.extract += s.extract_bits
        self.headers += 1 if s.extracted_header else 0
        if s.select_field is not None and s.select_field.name not in [f for f, _ in self.fields]:
            self.fields.append((s.select_field.name, s.select_field.bit_width))
        self.depth[s.name] = entry_depth


def _check_alone(s: ParseState, p: ParserSpec) -> None:
    if s.extract_bits > p.max_extract_bits:
        raise StateTooLarge(s.name, f"extraction window ({s.extract_bits}b > {p.max_extract_bits}b)")
    if s.extract_bits > p.lookahead_bits:
        raise StateTooLarge(s.name, f"lookahead buffer ({s.extract_bits}b > {p.lookahead_bits}b)")
    if s.select_field is not None and _slots(s.select_field.bit_width, p) > p.lookup_field_count:
        raise StateTooLarge(s.name, f"lookup width ({s.select_field.bit_width}b)")
    if (1 if s.extracted_header else 0) > p.max_headers_per_cycle:
        raise StateTooLarge(s.name, "headers per cycle")


def cluster_parse_graph(g: ParseGraph, p: ParserSpec) -> list[ParserCluster]:
    """Greedy breadth-first clustering under the per-cycle parser budgets.

    A state joins the cluster being grown only when every one of its
    parents is already inside it, so each cluster has a single entry point.
    States that cannot join start clusters of their own, in BFS order.
    """
    if g.start is None:
        return []
    for s in g.states:
        _check_alone(s, p)
    parents = g.parents()
    assigned: dict[str, int] = {}
    clusters: list[ParserCluster] = []
    roots: deque[str] = deque([g.start])
    queued = {g.start}

    while roots:
        root = roots.popleft()
        if root in assigned:
            continue
        b = _Budget(g, p)
        b.add(g.state(root), 0)
        frontier = deque([root])
        pending: list[str] = []
        while frontier:
            cur = frontier.popleft()
            for t in g.state(cur).transitions:
                child = t.next_state
                if child in TERMINALS or child in b.members or child in assigned or child in pending:
                    continue
                cs = g.state(child)
                if all(par in b.members for par in parents[child]):
                    depth = max(b.depth[par] + g.state(par).extract_bits for par in parents[child])
                    if b.fits(cs, depth):
                        b.add(cs, depth)
                        frontier.append(child)
                        continue
                pending.append(child)
        cid = len(clusters)
        for m in b.members:
            assigned[m] = cid
        span = max((b.depth[m] + g.state(m).extract_bits for m in b.members), default=0)
        clusters.append(ParserCluster(cid, tuple(b.members), b.extract, tuple(b.fields), b.headers, span))
        for c in pending:
            if c not in queued and c not in assigned:
                queued.add(c)
                roots.append(c)
    return clusters


def _slot_values(value: int | None, mask: int | None, width: int, p: ParserSpec) -> list[tuple[int, int]]:
    """Split a field comparison into per-slot (value, mask) pairs, msb slot first."""
    n = _slots(width, p)
    sw = p.lookup_field_width_bits
    full = (1 << width) - 1
    if value is None:
        v, m = 0, 0
    else:
        m = full if mask is None else (mask & full)
        v = value & m
    pad = n * sw - width  # left-pad into whole slots
    v <<= pad
    m <<= pad
    out = []
    for i in range(n):
        shift = (n - 1 - i) * sw
        out.append(((v >> shift) & ((1 << sw) - 1), (m >> shift) & ((1 << sw) - 1)))
    return out


def _overlaps(a: StateTableEntry, b: StateTableEntry) -> bool:
    return all((va ^ vb) & ma & mb == 0 for (va, ma), (vb, mb) in zip(a.match_values, b.match_values))


def _covers(big: StateTableEntry, small: StateTableEntry) -> bool:
    return all(mb & ~ms == 0 and (vs & mb) == (vb & mb)
               for (vb, mb), (vs, ms) in zip(big.match_values, small.match_values))


def _outcome(e: StateTableEntry) -> tuple:
    return (e.next_cluster, e.extract_directives)


def _clear_between(rows, i: int, j: int, probe: StateTableEntry) -> bool:
    """No row strictly between i and j can steal keys of ``probe`` with another outcome."""
    return all(not _overlaps(rows[k], probe) or _outcome(rows[k]) == _outcome(probe) for k in range(i + 1, j))


def _one_bit_merge(a: StateTableEntry, b: StateTableEntry) -> StateTableEntry | None:
    if any(ma != mb for (_, ma), (_, mb) in zip(a.match_values, b.match_values)):
        return None
    diff = [(k, (va ^ vb) & ma) for k, ((va, ma), (vb, _)) in enumerate(zip(a.match_values, b.match_values))
            if (va ^ vb) & ma]
    if len(diff) != 1 or diff[0][1] & (diff[0][1] - 1):
        return None
    k, bit = diff[0]
    slots = list(a.match_values)
    v, m = slots[k]
    slots[k] = (v & ~bit, m & ~bit)
    return StateTableEntry(a.current_cluster, tuple(slots), a.next_cluster, a.extract_directives,
                           a.move_ahead_bits, a.path)


def compact_entries(rows: list[StateTableEntry]) -> list[StateTableEntry]:
    """Shrink one cluster's first-match list without changing what any key hits."""
    rows = list(rows)
    changed = True
    while changed:
        changed = False
        for i in range(len(rows)):
            for j in range(i + 1, len(rows)):
                if _outcome(rows[j]) == _outcome(rows[i]) and _covers(rows[j], rows[i]) \
                        and _clear_between(rows, i, j, rows[i]):
                    del rows[i]
                    changed = True
                    break
                merged = None
                if _outcome(rows[j]) == _outcome(rows[i]) and _clear_between(rows, i, j, rows[j]):
                    merged = _one_bit_merge(rows[i], rows[j])
                if merged is not None:
                    rows[i] = merged
                    del rows[j]
                    changed = True
                    break
            if changed:
                break
    return rows


def generate_state_table(clusters: list[ParserCluster], g: ParseGraph, p: ParserSpec,
                         compact: bool = True) -> list[StateTableEntry]:
    """One entry per route from a cluster root to a transition leaving it.

    With ``compact`` the per-cluster lists are then shrunk by compact_entries.
    """
    if not clusters:
        return []
    of = {m: c.id for c in clusters for m in c.member_states}
    entries: list[StateTableEntry] = []

    for c in clusters:
        slot_base: dict[str, int] = {}
        k = 0
        for f, w in c.lookup_fields:
            slot_base[f] = k
            k += _slots(w, p)
        members = set(c.member_states)

        def emit(slots, nxt, directives, path):
            padded = list(slots) + [(0, 0)] * (p.lookup_field_count - len(slots))
            move = sum(w for _, _, w in directives)
            entries.append(StateTableEntry(c.id, tuple(padded), nxt, tuple(directives), move, tuple(path)))

        def walk(state: str, slots: list, directives: list, offset: int, path: list) -> None:
            s = g.state(state)
            path = path + [state]
            if s.extracted_header:
                directives = directives + [(s.extracted_header, offset, s.extract_bits)]
                offset += s.extract_bits
            has_default = False
            for t in s.transitions:
                cur = list(slots)
                if s.select_field is not None:
                    f = s.select_field
                    base = slot_base[f.name]
                    for i, vm in enumerate(_slot_values(t.value, t.mask, f.bit_width, p)):
                        # a slot already constrained on this route keeps its value
                        if cur[base + i][1] == 0:
                            cur[base + i] = vm
                has_default |= t.is_default
                nxt = t.next_state
                if nxt in members:
                    walk(nxt, cur, directives, offset, path)
                else:
                    emit(cur, nxt if nxt in TERMINALS else of[nxt], directives, path)
            if not has_default and state != c.root:
                # nothing matched inside the cluster: stop rather than fall
                # through to a sibling route's wildcard entry
                emit(slots, REJECT, directives, path)

        start = len(entries)
        walk(c.root, [(0, 0)] * k, [], 0, [])
        if compact:
            entries[start:] = compact_entries(entries[start:])
    return entries


def check_parser_capacity(entries: list[StateTableEntry], p: ParserSpec) -> ParserVerdict:
    """Accept iff the entries fit the TCAM depth and every payload fits an entry."""
    width = p.tcam_entry_width_bits
    widest = max((len(e.match_values) * p.lookup_field_width_bits + STATE_ID_BITS for e in entries), default=0)
    ok = len(entries) <= p.tcam_depth and widest <= width
    return ParserVerdict(ok, len(entries), p.tcam_depth, widest, width)


# ---------------------------------------------------------------------------
# interpreters used by tests and the explain command


def interpret_graph(g: ParseGraph, packet: dict[str, int]) -> tuple[str, tuple[str, ...]]:
    """Walk the parse graph directly. ``packet`` maps select field -> value."""
    if g.start is None:
        return ACCEPT, ()
    out: list[str] = []
    state = g.start
    while state not in TERMINALS:
        s = g.state(state)
        if s.extracted_header:
            out.append(s.extracted_header)
        nxt = REJECT
        for t in s.transitions:
            if t.is_default:
                nxt = t.next_state
                break
            v = packet.get(s.select_field.name, 0)  # type: ignore[union-attr]
            m = t.mask if t.mask is not None else (1 << s.select_field.bit_width) - 1  # type: ignore[union-attr]
            if (v & m) == (t.value & m):
                nxt = t.next_state
                break
        state = nxt
    return state, tuple(out)


def simulate_table(clusters: list[ParserCluster], entries: list[StateTableEntry], p: ParserSpec,
                   packet: dict[str, int]) -> tuple[str, tuple[str, ...]]:
    """Run the generated TCAM table on the same abstract packet."""
    if not clusters:
        return ACCEPT, ()
    slot_src: dict[int, list[tuple[str, int, int]]] = {}
    for c in clusters:
        srcs = []
        for f, w in c.lookup_fields:
            n = _slots(w, p)
            for i in range(n):
                srcs.append((f, w, i))
        slot_src[c.id] = srcs
    by_cluster: dict[int, list[StateTableEntry]] = {}
    for e in entries:
        by_cluster.setdefault(e.current_cluster, []).append(e)

    out: list[str] = []
    cur: int | str = 0
    while cur not in TERMINALS:
        key = []
        for f, w, i in slot_src[cur]:  # type: ignore[index]
            key.append(_slot_values(packet.get(f, 0), None, w, p)[i][0])
        hit = None
        for e in by_cluster.get(cur, []):  # type: ignore[arg-type]
            if all((key[i] & m) == (v & m) for i, (v, m) in enumerate(e.match_values[: len(key)])):
                hit = e
                break
        if hit is None:
            return REJECT, tuple(out)
        out.extend(h for h, _, _ in hit.extract_directives)
        cur = hit.next_cluster
    return cur, tuple(out)  # type: ignore[return-value]

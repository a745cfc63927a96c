"""Placement of leveled TDG nodes onto physical match-action stages.

Levels are placed from the highest down. Inside a level, stateful groups
go first and must fit in one stage each; remaining tables follow with
non-exact tables ahead of exact ones. A table whose entries do not fit in
one stage continues in the next one.

Block accounting:

* TCAM: a match of ``w`` bits needs a gang of ``ceil(w / T_W)`` blocks per
  ``T_L`` entries.
* SRAM exact match: entries are ``w + 8`` bits wide (the 8 bits hold a
  version and next-table pointer) and are word packed with ``pack_entries``.
* Action data and stateful arrays are word packed the same way. A block
  never holds data for more than one table or object.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .errors import EntryTooWide, Overflow, Rejection
from .hw_spec import DelayModel, HardwareSpec, SramSpec, StageSpec, TcamMatSpec, Violation
from .tdg_build import STAGE_SEPARATING, DependencyKind, LevelAssignment, Tdg, TdgNode, strictest

EXACT_ENTRY_OVERHEAD_BITS = 8


@dataclass(frozen=True)
class MapConfig:
    packing_factor: int = 2
    action_entry_cap: int = 16384
    action_entry_mode: str = "fixed"  # fixed | per_match_entry

    def __post_init__(self):
        if self.packing_factor < 1:
            raise ValueError("packing_factor must be >= 1")
        if self.action_entry_cap < 1:
            raise ValueError("action_entry_cap must be >= 1")
        if self.action_entry_mode not in ("fixed", "per_match_entry"):
            raise ValueError(f"unknown action entry mode {self.action_entry_mode!r}")


@dataclass(frozen=True)
class Packing:
    unit: int
    per_row: int
    blocks: int


def pack_entries(entry_width: int, count: int, sram: SramSpec, p_f: int) -> Packing:
    """Fewest SRAM blocks holding ``count`` entries of ``entry_width`` bits.

    A packing unit of ``u`` side-by-side blocks holds
    ``floor(u * S_W / entry_width)`` entries per row. Units of 1..p_f blocks
    are tried; ties keep the narrower unit. Entries wider than p_f blocks
    fall back to the narrowest gang that holds one entry per row.
    """
    if entry_width < 1 or count < 1:
        raise ValueError("entry_width and count must be positive")
    best: Packing | None = None
    for u in range(1, p_f + 1):
        per_row = (u * sram.block_width_bits) // entry_width
        if per_row < 1:
            continue
        blocks = u * math.ceil(count / (per_row * sram.block_depth))
        if best is None or blocks < best.blocks:
            best = Packing(u, per_row, blocks)
    if best is not None:
        return best
    gang = math.ceil(entry_width / sram.block_width_bits)
    if gang > sram.block_count:
        raise EntryTooWide(entry_width)
    return Packing(gang, 1, gang * math.ceil(count / sram.block_depth))


def tcam_blocks(width: int, entries: int, tcam: TcamMatSpec) -> int:
    if entries <= 0:
        return 0
    return math.ceil(max(width, 1) / tcam.block_width_bits) * math.ceil(entries / tcam.block_depth)


def action_entries(placed: int, cfg: MapConfig) -> int:
    if cfg.action_entry_mode == "fixed":
        return min(cfg.action_entry_cap, placed)
    return placed


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class StageChunk:
    stage: int
    entries: int
    tcam_entries: int = 0
    sram_entries: int = 0
    tcam_blocks: int = 0
    sram_match_blocks: int = 0
    sram_action_blocks: int = 0
    sram_stateful_blocks: int = 0
    match_xbar_bits: int = 0  # TCB + SCB bits claimed by this chunk
    tcb_bits: int = 0
    scb_bits: int = 0
    acb_bits: int = 0
    memory_ports: int = 0
    fields_written: tuple[str, ...] = ()
    stateful_objects: tuple[str, ...] = ()


@dataclass(frozen=True)
class MatPlacement:
    mat: str
    stages: tuple[StageChunk, ...]

    @property
    def first_stage(self) -> int:
        return self.stages[0].stage

    @property
    def last_stage(self) -> int:
        return self.stages[-1].stage

    @property
    def entries(self) -> int:
        return sum(c.entries for c in self.stages)


@dataclass(frozen=True)
class StageAllocation:
    index: int
    tcam_blocks: int
    sram_match_blocks: int
    sram_action_blocks: int
    sram_stateful_blocks: int
    tcb_bits: int
    scb_bits: int
    acb_bits: int
    memory_ports: int
    mats: tuple[str, ...]
    field_writes: tuple[tuple[str, int], ...]

    @property
    def sram_blocks(self) -> int:
        return self.sram_match_blocks + self.sram_action_blocks + self.sram_stateful_blocks


@dataclass(frozen=True)
class PipelineMapping:
    placements: tuple[MatPlacement, ...]
    stages: tuple[StageAllocation, ...]
    transitions: tuple[tuple[int, int, str], ...]  # (stage, next stage, strictest kind)
    latency_cycles: int

    @property
    def occupied_stages(self) -> list[int]:
        return [s.index for s in self.stages if s.mats]

    @property
    def stage_count(self) -> int:
        return len(self.occupied_stages)

    @property
    def tcam_blocks(self) -> int:
        return sum(s.tcam_blocks for s in self.stages)

    @property
    def sram_blocks(self) -> int:
        return sum(s.sram_blocks for s in self.stages)

    def placement(self, name: str) -> MatPlacement:
        for p in self.placements:
            if p.mat == name:
                return p
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "placements": [
                {"mat": p.mat, "stages": [asdict(c) for c in p.stages]} for p in self.placements
            ],
            "stages": [asdict(s) for s in self.stages],
            "transitions": [list(t) for t in self.transitions],
            "latency_cycles": self.latency_cycles,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


# ---------------------------------------------------------------------------
# mutable per-stage bookkeeping used while mapping


class _Stage:
    def __init__(self, index: int, spec: StageSpec):
        self.index = index
        self.spec = spec
        self.tcam = 0
        self.sram_match = 0
        self.sram_action = 0
        self.sram_stateful = 0
        self.tcb = 0
        self.scb = 0
        self.acb = 0
        self.ports = 0
        self.writes: dict[str, int] = {}
        self.mats: list[str] = []
        self.objects: set[str] = set()

    def copy(self) -> "_Stage":
        c = _Stage(self.index, self.spec)
        c.__dict__.update({k: (v.copy() if isinstance(v, (dict, list, set)) else v) for k, v in self.__dict__.items()})
        return c

    @property
    def sram_free(self) -> int:
        return self.spec.sram.block_count - self.sram_match - self.sram_action - self.sram_stateful

    def commit(self, mat: str, c: StageChunk, tag: str = "") -> None:
        self.tcam += c.tcam_blocks
        self.sram_match += c.sram_match_blocks
        self.sram_action += c.sram_action_blocks
        self.sram_stateful += c.sram_stateful_blocks
        self.tcb += c.tcb_bits
        self.scb += c.scb_bits
        self.acb += c.acb_bits
        self.ports += c.memory_ports
        for f in c.fields_written:
            self.writes[tag + f] = self.writes.get(tag + f, 0) + 1
        self.mats.append(mat)
        self.objects |= set(c.stateful_objects)

    def freeze(self) -> StageAllocation:
        return StageAllocation(
            self.index, self.tcam, self.sram_match, self.sram_action, self.sram_stateful,
            self.tcb, self.scb, self.acb, self.ports, tuple(self.mats), tuple(sorted(self.writes.items())),
        )


def _acb_bits(t: Tdg, n: TdgNode) -> int:
    return sum(t.width(f) for f in n.read_fields)


def _region_ports(sram_match: int, action: int, objects) -> int:
    """Memory-port accesses per packet: one per SRAM region a table touches."""
    return (1 if sram_match else 0) + (1 if action else 0) + len(objects)


class _Mapper:
    def __init__(self, t: Tdg, levels: LevelAssignment, hw: HardwareSpec, cfg: MapConfig, stages=None, tag=""):
        self.t, self.levels, self.hw, self.cfg = t, levels, hw, cfg
        # ``stages`` is shared when a second gress is placed into the same pipeline;
        # ``tag`` keeps that gress's field writes apart from the first one's
        self.stages = stages if stages is not None else [_Stage(k, hw.stages[k]) for k in range(hw.total_stages)]
        self.tag = tag
        self.placed: dict[str, list[StageChunk]] = {}

    # -- feasibility of one chunk in one stage ---------------------------

    def _chunk(self, st: _Stage, n: TdgNode, remaining: int, objects=(), obj_owner=True) -> StageChunk | None:
        """Largest chunk of ``n`` that fits in ``st``; None if nothing fits."""
        spec = st.spec
        t, cfg = self.t, self.cfg
        if any(st.writes.get(self.tag + f, 0) for f in n.write_fields):
            return None
        acb = _acb_bits(t, n)
        if st.acb + acb > spec.action_xbar_bits:
            return None
        act_bits = n.action_entry_bits
        objects = tuple(sorted(objects))
        stateful_blocks = 0
        if obj_owner:
            for o in objects:
                obj = t.stateful_by_name[o]
                stateful_blocks += pack_entries(obj.element_width, obj.length, spec.sram, cfg.packing_factor).blocks

        def action_blocks(placed: int) -> int:
            if act_bits <= 0 or placed <= 0:
                return 0
            return pack_entries(act_bits, action_entries(placed, cfg), spec.sram, cfg.packing_factor).blocks

        def fits(tcam_n: int, sram_n: int) -> StageChunk | None:
            w = t.key_bits(n)
            tb = tcam_blocks(w, tcam_n, spec.tcam) if tcam_n else 0
            sb = (pack_entries(w + EXACT_ENTRY_OVERHEAD_BITS, sram_n, spec.sram, cfg.packing_factor).blocks
                  if sram_n else 0)
            placed = tcam_n + sram_n if n.keys else remaining
            ab = action_blocks(placed)
            tcb = w if tcam_n else 0
            scb = w if sram_n else 0
            ports = _region_ports(sb, ab, objects)
            if (
                st.tcam + tb > spec.tcam.block_count
                or st.sram_match + sb > spec.sram_mat.block_count
                or sb + ab + stateful_blocks > st.sram_free
                or st.tcb + tcb > spec.tcam.match_xbar_bits
                or st.scb + scb > spec.sram_mat.match_xbar_bits
                or st.ports + ports > spec.sram.port_count
            ):
                return None
            return StageChunk(
                stage=st.index,
                entries=placed,
                tcam_entries=tcam_n,
                sram_entries=sram_n,
                tcam_blocks=tb,
                sram_match_blocks=sb,
                sram_action_blocks=ab,
                sram_stateful_blocks=stateful_blocks,
                match_xbar_bits=tcb + scb,
                tcb_bits=tcb,
                scb_bits=scb,
                acb_bits=acb,
                memory_ports=ports,
                fields_written=tuple(sorted(n.write_fields)),
                stateful_objects=objects,
            )

        if not n.keys:
            return fits(0, 0)

        def largest(make) -> int:
            lo, hi = 0, remaining
            while lo < hi:
                mid = (lo + hi + 1) // 2
                if make(mid) is not None:
                    lo = mid
                else:
                    hi = mid - 1
            return lo

        kinds = {k.kind for k in n.keys}
        sram_n = 0
        if n.has_exact_keys_only and spec.sram_mat.block_count > 0:
            try:
                sram_n = largest(lambda k: fits(0, k))
            except EntryTooWide:
                sram_n = 0
        tcam_n = 0
        if sram_n < remaining and kinds <= spec.tcam.supported_match_kinds:
            rest = remaining - sram_n
            lo, hi = 0, rest
            while lo < hi:
                mid = (lo + hi + 1) // 2
                if fits(mid, sram_n) is not None:
                    lo = mid
                else:
                    hi = mid - 1
            tcam_n = lo
        if tcam_n + sram_n == 0:
            return None
        return fits(tcam_n, sram_n)

    # -- placement -------------------------------------------------------

    def _earliest(self, n: TdgNode) -> int:
        s = 0
        for e in self.t.in_edges(n.name):
            if e.src not in self.placed:
                continue
            last = self.placed[e.src][-1].stage
            kind = e.strictest
            if kind in STAGE_SEPARATING:
                s = max(s, last + 1)
            elif kind in (DependencyKind.SUCCESSOR, DependencyKind.REVERSE_MATCH):
                s = max(s, last)
        return s

    def _diagnose(self, n: TdgNode) -> Rejection:
        """Say why ``n`` fits nowhere, naming the first failing constraint."""
        spec = self.hw.stages[0]
        w = self.t.key_bits(n)
        exact = n.has_exact_keys_only
        if n.keys and w > spec.tcam.match_xbar_bits and (not exact or w > spec.sram_mat.match_xbar_bits):
            return Rejection("crossbar overflow", f"stage 0: {n.name} needs {w} match crossbar bits", mat=n.name)
        if _acb_bits(self.t, n) > spec.action_xbar_bits:
            return Rejection("crossbar overflow", f"stage 0: {n.name} needs {_acb_bits(self.t, n)} action crossbar bits",
                             mat=n.name)
        kinds = {k.kind for k in n.keys}
        if n.keys and not exact and not kinds <= spec.tcam.supported_match_kinds:
            return Rejection("unsupported match kind", f"{n.name} uses {sorted(kinds)}", mat=n.name)
        return Rejection("out of stages", f"{n.name} does not fit in an empty stage", mat=n.name)

    def place_single(self, n: TdgNode) -> None:
        remaining = n.size if n.keys else 1
        s = self._earliest(n)
        chunks: list[StageChunk] = []
        objects = tuple(sorted(n.direct))
        empty = _Stage(0, self.hw.stages[0])
        if self._chunk(empty, n, 1 if n.keys else remaining, objects) is None:
            raise self._diagnose(n)
        while remaining > 0:
            if s >= self.hw.total_stages:
                raise Rejection("out of stages", f"{n.name} still has {remaining} entries after stage {s - 1}",
                                mat=n.name)
            c = self._chunk(self.stages[s], n, remaining, objects if not chunks else ())
            if c is not None:
                self.stages[s].commit(n.name, c, self.tag)
                chunks.append(c)
                remaining -= c.entries if n.keys else remaining
            s += 1
        self.placed[n.name] = chunks

    def _try_group(self, st: _Stage, members: list[TdgNode]) -> dict[str, StageChunk] | None:
        st = st.copy()
        owners: dict[str, str] = {}
        for n in members:
            for o in sorted(n.indirect):
                owners.setdefault(o, n.name)
        out = {}
        for n in members:
            objs = tuple(sorted(n.indirect | n.direct))
            own = tuple(o for o in objs if owners.get(o, n.name) == n.name)
            remaining = n.size if n.keys else 1
            c = self._chunk(st, n, remaining, objs, obj_owner=False)
            if c is None:
                return None
            # charge owned objects' blocks to the first accessor
            blocks = sum(
                pack_entries(self.t.stateful_by_name[o].element_width, self.t.stateful_by_name[o].length,
                             st.spec.sram, self.cfg.packing_factor).blocks
                for o in own
            )
            if blocks > st.sram_free - c.sram_match_blocks - c.sram_action_blocks:
                return None
            if n.keys and c.entries < remaining:
                return None
            c = StageChunk(**{**asdict(c), "sram_stateful_blocks": blocks, "fields_written": tuple(c.fields_written),
                              "stateful_objects": tuple(c.stateful_objects)})
            st.commit(n.name, c, self.tag)
            out[n.name] = c
        return out

    def place_group(self, members: list[TdgNode]) -> None:
        start = max(self._earliest(n) for n in members)
        for s in range(start, self.hw.total_stages):
            got = self._try_group(self.stages[s], members)
            if got is not None:
                for n in members:
                    self.stages[s].commit(n.name, got[n.name], self.tag)
                    self.placed[n.name] = [got[n.name]]
                return
        names = ", ".join(n.name for n in members)
        if self._try_group(_Stage(0, self.hw.stages[0]), members) is None:
            raise Rejection("stateful group too large", f"{{{names}}} does not fit in one stage", group=names)
        raise Rejection("out of stages", f"no stage from {start} can host stateful group {{{names}}}", group=names)

    def run(self) -> None:
        t = self.t
        for n in t.nodes:
            if len({a.name for a in n.actions}) > self.hw.stages[0].instr_mem_per_mat:
                raise Rejection("instruction memory overflow",
                                f"{n.name} has {len(n.actions)} actions, limit {self.hw.stages[0].instr_mem_per_mat}",
                                mat=n.name)
        self._check_externs()
        index = {n.name: i for i, n in enumerate(t.nodes)}
        for level in sorted(set(self.levels.map.values()), reverse=True):
            todo = [n for n in t.nodes if self.levels[n.name] == level]
            units: list[list[TdgNode]] = []
            seen: set[str] = set()
            for n in todo:
                if n.name in seen:
                    continue
                g = t.group_of(n.name)
                if n.indirect and not g:
                    g = (n.name,)
                if g and (len(g) > 1 or n.indirect):
                    members = [t.node[m] for m in g]
                    members.sort(key=lambda x: (x.has_exact_keys_only, index[x.name]))
                    units.append(members)
                    seen |= set(g)
                else:
                    units.append([n])
                    seen.add(n.name)
            in_level = {n.name for n in todo}
            unit_of = {m.name: i for i, u in enumerate(units) for m in u}
            blockers = {i: set() for i in range(len(units))}
            for e in t.edges:
                if e.src in in_level and e.dst in in_level and unit_of[e.src] != unit_of[e.dst]:
                    blockers[unit_of[e.dst]].add(unit_of[e.src])

            def priority(i: int):
                u = units[i]
                return (0 if len(u) > 1 or u[0].indirect else 1, 0 if not all(m.has_exact_keys_only for m in u) else 1,
                        min(index[m.name] for m in u))

            done: set[int] = set()
            while len(done) < len(units):
                ready = [i for i in range(len(units)) if i not in done and blockers[i] <= done]
                i = min(ready, key=priority)
                if len(units[i]) > 1 or units[i][0].indirect:
                    self.place_group(units[i])
                else:
                    self.place_single(units[i][0])
                done.add(i)

    def _check_externs(self) -> None:
        ext = self.hw.stages[0].externs
        widths = []
        for e in ext:
            if e.kind == "register":
                digits = "".join(ch for ch in e.name.rsplit("_", 1)[-1] if ch.isdigit())
                if digits:
                    widths.append(int(digits))
        used = {o for n in self.t.nodes for o in n.indirect | n.direct}
        for name in sorted(used):
            o = self.t.stateful_by_name[name]
            if o.kind == "register" and widths and not any(w >= o.element_width for w in widths):
                raise Rejection("extern unavailable", f"no register extern is {o.element_width}b wide", object=name)
            if not any(e.kind == o.kind for e in ext) and ext:
                raise Rejection("extern unavailable", f"no {o.kind} extern", object=name)

    def result(self) -> PipelineMapping:
        placements = tuple(MatPlacement(n.name, tuple(self.placed[n.name])) for n in self.t.nodes)
        stages = stage_allocations(placements)
        transitions = stage_transitions(placements, self.t)
        m = PipelineMapping(placements, stages, transitions, 0)
        return PipelineMapping(placements, stages, transitions, compute_latency(m, self.hw.delay))


def stage_allocations(placements) -> tuple[StageAllocation, ...]:
    """Per-stage totals of the given placements, stages 0 through the last one used."""
    last = max((c.stage for p in placements for c in p.stages), default=-1)
    acc = [_Stage(k, None) for k in range(last + 1)]
    for p in placements:
        for c in p.stages:
            acc[c.stage].commit(p.mat, c)
    return tuple(st.freeze() for st in acc)


def stage_transitions(placements, t: Tdg) -> tuple[tuple[int, int, str], ...]:
    """Strictest dependency between tables in each pair of consecutive occupied stages."""
    by_stage: dict[int, set[str]] = {}
    for p in placements:
        for c in p.stages:
            by_stage.setdefault(c.stage, set()).add(p.mat)
    occupied = sorted(by_stage)
    out = []
    for a, b in zip(occupied, occupied[1:]):
        kinds = set()
        for e in t.edges:
            if e.src in by_stage[a] and e.dst in by_stage[b]:
                kinds.add(e.strictest)
        k = strictest(kinds)
        out.append((a, b, "default" if k == DependencyKind.NONE else k.value))
    return tuple(out)


def map_tdg(t: Tdg, levels: LevelAssignment, hw: HardwareSpec, cfg: MapConfig | None = None) -> PipelineMapping:
    """Place every node; raises Rejection naming the first unsatisfiable constraint."""
    m = _Mapper(t, levels, hw, cfg or MapConfig())
    m.run()
    return m.result()


def map_program(parts, hw: HardwareSpec, cfg: MapConfig | None = None) -> dict[str, PipelineMapping]:
    """Place several gresses into one pipeline.

    ``parts`` maps a gress name to its (Tdg, LevelAssignment). Gresses are
    placed in the given order onto the same physical stages, so every stage
    budget is shared by all of them. Each returned mapping lists only its own
    placements; ``combined_stages`` gives the summed per-stage view.
    """
    cfg = cfg or MapConfig()
    stages = None
    out = {}
    for gress, (t, levels) in parts.items():
        m = _Mapper(t, levels, hw, cfg, stages=stages, tag=f"{gress}:")
        m.run()
        out[gress] = m.result()
        stages = m.stages
    return out


def combined_stages(mappings) -> tuple[StageAllocation, ...]:
    """Per-stage usage summed over several gress mappings."""
    placements = [p for m in mappings for p in m.placements]
    return stage_allocations(placements)


def validate_shared_budgets(mappings, hw: HardwareSpec) -> list[Violation]:
    """Check that the summed claims of all gresses fit each stage.

    Each gress should also pass ``validate_mapping`` on its own, which
    confirms its claimed blocks and bits cover what it needs.
    """
    out = []
    for st in combined_stages(mappings):
        if not st.mats:
            continue
        spec = hw.stages[st.index]
        checks = [
            ("TCAM", st.tcam_blocks, spec.tcam.block_count),
            ("SRAM match", st.sram_match_blocks, spec.sram_mat.block_count),
            ("SRAM", st.sram_blocks, spec.sram.block_count),
            ("TCB", st.tcb_bits, spec.tcam.match_xbar_bits),
            ("SCB", st.scb_bits, spec.sram_mat.match_xbar_bits),
            ("ACB", st.acb_bits, spec.action_xbar_bits),
            ("memory ports", st.memory_ports, spec.sram.port_count),
        ]
        for name, used, cap in checks:
            if used > cap:
                out.append(Violation(f"{name} overflow stage {st.index}", f"{used} > {cap} (all gresses)"))
    return out


def compute_latency(m: PipelineMapping, d: DelayModel) -> int:
    """One full stage plus the dependency delay at each stage boundary."""
    return d.stage_cycle_length + sum(d.delay(kind) for _, _, kind in m.transitions)


# ---------------------------------------------------------------------------
# independent validation


def validate_mapping(m: PipelineMapping, t: Tdg, hw: HardwareSpec, p_f: int = 2) -> list[Violation]:
    """Re-check a mapping against the hardware from scratch.

    Only the TDG, the hardware spec and the per-chunk entry counts are
    trusted; every block count, crossbar sum and ordering is recomputed.
    """
    out: list[Violation] = []
    where: dict[str, list[StageChunk]] = {p.mat: list(p.stages) for p in m.placements}

    for n in t.nodes:
        if n.name not in where or not where[n.name]:
            out.append(Violation("unplaced", f"{n.name} has no stage"))
    per_stage: dict[int, list[tuple[TdgNode, StageChunk]]] = {}
    for name, chunks in where.items():
        if name not in t.node:
            out.append(Violation("unknown table", name))
            continue
        n = t.node[name]
        for c in chunks:
            per_stage.setdefault(c.stage, []).append((n, c))
        if n.keys and sum(c.tcam_entries + c.sram_entries for c in chunks) < n.size:
            out.append(Violation("entry capacity", f"{name} holds fewer than {n.size} entries"))

    obj_stage: dict[str, set[int]] = {}
    obj_blocks: dict[tuple[str, int], int] = {}
    for k, items in sorted(per_stage.items()):
        if k < 0 or k >= hw.total_stages:
            out.append(Violation("stage range", f"stage {k} outside 0..{hw.total_stages - 1}"))
            continue
        spec = hw.stages[k]
        tcam = sram_m = sram_total = tcb = scb = acb = ports = 0
        writes: dict[str, list[str]] = {}
        stateful_blocks_here = 0
        for n, c in items:
            w = t.key_bits(n)
            if c.tcam_entries:
                need = tcam_blocks(w, c.tcam_entries, spec.tcam)
                if c.tcam_blocks < need:
                    out.append(Violation(f"TCAM capacity stage {k}", f"{n.name} needs {need} blocks"))
                if not {x.kind for x in n.keys} <= spec.tcam.supported_match_kinds:
                    out.append(Violation(f"match kind stage {k}", n.name))
                tcb += w
            if c.sram_entries:
                if not n.has_exact_keys_only:
                    out.append(Violation(f"match kind stage {k}", f"{n.name} in SRAM with non-exact keys"))
                need = pack_entries(w + EXACT_ENTRY_OVERHEAD_BITS, c.sram_entries, spec.sram, p_f).blocks
                if c.sram_match_blocks < need:
                    out.append(Violation(f"SRAM capacity stage {k}", f"{n.name} needs {need} match blocks"))
                scb += w
            if n.action_entry_bits and c.entries and c.sram_action_blocks < 1:
                out.append(Violation(f"action memory stage {k}", f"{n.name} has no action block"))
            tcam += c.tcam_blocks
            sram_m += c.sram_match_blocks
            sram_total += c.sram_match_blocks + c.sram_action_blocks + c.sram_stateful_blocks
            stateful_blocks_here += c.sram_stateful_blocks
            acb += sum(t.width(f) for f in n.read_fields)
            touched = set(n.indirect) | (set(n.direct) if c is where[n.name][0] else set())
            ports += _region_ports(c.sram_match_blocks, c.sram_action_blocks, touched)
            for f in n.write_fields:
                writes.setdefault(f, []).append(n.name)
            for o in n.indirect:
                obj_stage.setdefault(o, set()).add(k)
            if len({a.name for a in n.actions}) > spec.instr_mem_per_mat:
                out.append(Violation(f"instruction memory stage {k}", n.name))
        for o in {o for n, _ in items for o in n.indirect}:
            obj = t.stateful_by_name[o]
            obj_blocks[(o, k)] = pack_entries(obj.element_width, obj.length, spec.sram, p_f).blocks
        need_stateful = sum(b for (o, kk), b in obj_blocks.items() if kk == k)
        if stateful_blocks_here < need_stateful:
            out.append(Violation(f"stateful memory stage {k}", f"{stateful_blocks_here} < {need_stateful} blocks"))
        if tcam > spec.tcam.block_count:
            out.append(Violation(f"TCAM overflow stage {k}", f"{tcam} > {spec.tcam.block_count}"))
        if sram_m > spec.sram_mat.block_count:
            out.append(Violation(f"SRAM match overflow stage {k}", f"{sram_m} > {spec.sram_mat.block_count}"))
        if sram_total > spec.sram.block_count:
            out.append(Violation(f"SRAM overflow stage {k}", f"{sram_total} > {spec.sram.block_count}"))
        if tcb > spec.tcam.match_xbar_bits:
            out.append(Violation(f"TCB overflow stage {k}", f"{tcb} > {spec.tcam.match_xbar_bits}"))
        if scb > spec.sram_mat.match_xbar_bits:
            out.append(Violation(f"SCB overflow stage {k}", f"{scb} > {spec.sram_mat.match_xbar_bits}"))
        if acb > spec.action_xbar_bits:
            out.append(Violation(f"ACB overflow stage {k}", f"{acb} > {spec.action_xbar_bits}"))
        if ports > spec.sram.port_count:
            out.append(Violation(f"memory ports stage {k}", f"{ports} > {spec.sram.port_count}"))
        for f, ws in writes.items():
            if len(ws) > 1:
                out.append(Violation(f"field write conflict stage {k}", f"{f} written by {', '.join(sorted(ws))}"))

    for o, ks in obj_stage.items():
        if len(ks) > 1:
            out.append(Violation("stateful co-staging", f"{o} accessed in stages {sorted(ks)}"))

    for e in t.edges:
        if e.src not in where or e.dst not in where or not where[e.src] or not where[e.dst]:
            continue
        a_last = max(c.stage for c in where[e.src])
        b_first = min(c.stage for c in where[e.dst])
        kind = e.strictest
        if kind in STAGE_SEPARATING and b_first <= a_last:
            out.append(Violation("dependency order", f"{e.src} -{kind.value}-> {e.dst}: stage {b_first} <= {a_last}"))
        elif kind in (DependencyKind.SUCCESSOR, DependencyKind.REVERSE_MATCH) and b_first < a_last:
            out.append(Violation("dependency order", f"{e.src} -{kind.value}-> {e.dst}: stage {b_first} < {a_last}"))
    return out

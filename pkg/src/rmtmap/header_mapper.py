"""Header field -> PHV container allocation.

Fields are taken largest first. Each field is covered by repeatedly taking
the container class that wastes the least of what is still uncovered,
breaking ties toward the wider class. A 17-bit field therefore lands in
16 + 8 and a 48-bit field in 32 + 16.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import PhvExhausted
from .hw_spec import HardwareSpec
from .ir_model import HeaderField, ProgramIr


@dataclass(frozen=True)
class PhvPool:
    """Remaining container stock, keyed by class width."""

    remaining: tuple[tuple[int, int], ...]  # (bit_width, count) ascending by width

    @classmethod
    def from_hw(cls, hw: HardwareSpec) -> "PhvPool":
        return cls(tuple(sorted((c.bit_width, c.count) for c in hw.phv_classes)))

    @classmethod
    def of(cls, stock: dict[int, int]) -> "PhvPool":
        return cls(tuple(sorted(stock.items())))

    def as_dict(self) -> dict[int, int]:
        return dict(self.remaining)

    @property
    def widths(self) -> list[int]:
        return [w for w, _ in self.remaining]


@dataclass(frozen=True)
class FieldAssignment:
    field: str
    gress: str
    bit_width: int
    containers: tuple[int, ...]  # most-significant slice first

    @property
    def waste(self) -> int:
        return sum(self.containers) - self.bit_width

    def slices(self) -> list[tuple[int, int, int]]:
        """(container width, field msb, field lsb) per container, msb first."""
        out, hi = [], self.bit_width - 1
        for c in self.containers:
            lo = max(hi - c + 1, 0)
            out.append((c, hi, lo))
            hi = lo - 1
        return out


@dataclass(frozen=True)
class PhvAllocation:
    assignments: tuple[FieldAssignment, ...]
    pool_after: PhvPool

    @property
    def header_bits(self) -> int:
        return sum(a.bit_width for a in self.assignments)

    @property
    def used_bits(self) -> int:
        return sum(sum(a.containers) for a in self.assignments)

    @property
    def waste_bits(self) -> int:
        return self.used_bits - self.header_bits

    def consumed(self, gress: str | None = None) -> dict[int, int]:
        out: dict[int, int] = {w: 0 for w in self.pool_after.widths}
        for a in self.assignments:
            if gress is None or a.gress == gress:
                for c in a.containers:
                    out[c] = out.get(c, 0) + 1
        return out

    def merged(self, other: "PhvAllocation") -> "PhvAllocation":
        return PhvAllocation(self.assignments + other.assignments, other.pool_after)


def _field_key(f: HeaderField) -> tuple:
    return (-f.bit_width, f.name)


def fill_field(width: int, stock: dict[int, int]) -> list[int] | None:
    """Containers for one field, most significant slice first, or None.

    Each step takes the class that wastes the least of what is still
    uncovered (``max(w - remaining, 0)``), the wider class on a tie. Any
    step keeps "stock bits >= uncovered bits" true if it held before, so the
    field fails only when the whole stock is too small for it.
    """
    if sum(w * n for w, n in stock.items()) < width:
        return None
    chosen: list[int] = []
    left = dict(stock)
    remaining = width
    while remaining > 0:
        options = [w for w, n in left.items() if n > 0]
        best = min(options, key=lambda w: (max(w - remaining, 0), -w))
        left[best] -= 1
        chosen.append(best)
        remaining -= best
    return chosen


def map_headers(fields, pool: PhvPool, gress: str = "ingress") -> PhvAllocation:
    """Allocate containers to ``fields`` from ``pool``.

    Raises PhvExhausted if the stock runs out part way through.
    """
    stock = pool.as_dict()
    out = []
    for f in sorted(fields, key=_field_key):
        chosen = fill_field(f.bit_width, stock)
        if chosen is None:
            raise PhvExhausted(f.name, f.bit_width)
        for c in chosen:
            stock[c] -= 1
        out.append(FieldAssignment(f.name, gress, f.bit_width, tuple(chosen)))
    return PhvAllocation(tuple(out), PhvPool.of(stock))


def _mat_fields(mats) -> set[str]:
    names: set[str] = set()
    for m in mats:
        names.update(k.field for k in m.match_keys)
        for a in m.actions:
            names |= a.read_fields() | a.written_fields()
        if m.condition is not None:
            names |= m.condition.fields()
    return names


def partition_fields(ir: ProgramIr) -> tuple[list[HeaderField], list[HeaderField]]:
    """Split fields into the ingress and egress sets.

    Replicated fields (metadata, and headers marked as bridged to egress)
    go into both. Other fields go wherever the parser or the gress's tables
    touch them.
    """
    ingress_refs = _mat_fields(ir.ingress_mats)
    for s in ir.parse_graph.states:
        if s.extracted_header:
            ingress_refs.update(f.name for f in ir.headers_by_name[s.extracted_header].fields)
        if s.select_field is not None:
            ingress_refs.add(s.select_field.name)
    egress_refs = _mat_fields(ir.egress_mats)

    ingress, egress = [], []
    for f in ir.header_fields:
        if f.replicated or f.name in ingress_refs:
            ingress.append(f)
        if f.replicated or f.name in egress_refs:
            egress.append(f)
    return ingress, egress


def map_program_headers(ir: ProgramIr, hw: HardwareSpec, extra_ingress=()) -> PhvAllocation:
    """Ingress then egress, sharing one pool.

    ``extra_ingress`` fields (auxiliary condition bits) are allocated last
    from whatever stock is left, so they never disturb the main layout.
    """
    ingress, egress = partition_fields(ir)
    pool = PhvPool.from_hw(hw)
    alloc = map_headers(ingress, pool, "ingress")
    alloc = alloc.merged(map_headers(egress, alloc.pool_after, "egress"))
    if extra_ingress:
        alloc = alloc.merged(map_headers(extra_ingress, alloc.pool_after, "ingress-aux"))
    return alloc


def phv_stats(alloc: PhvAllocation, pool: PhvPool, exclude_gress=("ingress-aux", "egress-aux")) -> dict:
    """Totals in the shape of the evaluation tables.

    Waste is measured against container bits and truncated (not rounded)
    to two decimals, which is how the published tables report it.
    Auxiliary fields are left out of the headline numbers and reported on
    their own.
    """
    main = [a for a in alloc.assignments if a.gress not in exclude_gress]
    aux = [a for a in alloc.assignments if a.gress in exclude_gress]
    header_bits = sum(a.bit_width for a in main)
    container_bits = sum(sum(a.containers) for a in main)
    waste = (container_bits - header_bits) * 10000 // container_bits / 100 if container_bits else 0.0
    per_class = {}
    totals = pool.as_dict()
    for w in sorted(totals):
        per_class[str(w)] = {
            "used": sum(a.containers.count(w) for a in main),
            "aux": sum(a.containers.count(w) for a in aux),
            "total": totals[w],
        }
    return {
        "fields": len(main),
        "header_bits": header_bits,
        "container_bits": container_bits,
        "waste_bits": container_bits - header_bits,
        "waste_pct": waste,
        "per_class": per_class,
        "aux_fields": len(aux),
        "aux_container_bits": sum(sum(a.containers) for a in aux),
    }

"""Exception types shared across the compiler stages.

Input problems (bad JSON, missing keys, dangling names) derive from
``InputError`` and surface as CLI exit code 2. Programs that are well formed
but cannot be realised on the target derive from ``Rejection`` and surface
as exit code 3.
"""

from __future__ import annotations


class InputError(ValueError):
    """Malformed hardware spec or program IR."""

    def __init__(self, path: str, message: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if message else path)


class MissingField(InputError):
    pass


class TypeMismatch(InputError):
    pass


class BadRange(InputError):
    pass


class SchemaError(InputError):
    pass


class UnresolvedReference(InputError):
    def __init__(self, name: str, where: str = ""):
        self.name = name
        super().__init__(name, f"unresolved reference (in {where})" if where else "unresolved reference")


class CyclicControlFlow(InputError):
    pass


class UnsupportedConstruct(InputError):
    def __init__(self, kind: str, where: str = ""):
        self.kind = kind
        super().__init__(kind, where)


class Rejection(Exception):
    """The program cannot be mapped onto the hardware.

    ``reason`` is a short stable token used in reports and tests;
    ``detail`` is free text for humans.
    """

    def __init__(self, reason: str, detail: str = "", **context):
        self.reason = reason
        self.detail = detail
        self.context = context
        super().__init__(f"{reason}: {detail}" if detail else reason)


class PhvExhausted(Rejection):
    def __init__(self, field: str, width: int):
        self.field = field
        super().__init__("phv exhausted", f"no container stock left for {field} ({width}b)", field=field)


class StateTooLarge(Rejection):
    def __init__(self, state: str, budget: str):
        self.state = state
        super().__init__("parser state too large", f"state {state} alone exceeds {budget}", state=state)


class LevelConflict(Rejection):
    def __init__(self, detail: str):
        super().__init__("level conflict", detail)


class EntryTooWide(Rejection):
    def __init__(self, width: int):
        super().__init__("entry too wide", f"{width}b entry does not fit any SRAM packing unit", width=width)


class Overflow(Exception):
    """A single stage cannot host the request; callers try elsewhere."""

"""Hypothesis strategies shared by the property tests."""

from __future__ import annotations

from hypothesis import strategies as st

from rmtmap.builder import header, program, state
from rmtmap.ir_model import load_ir


@st.composite
def parse_graphs(draw, max_states: int = 6):
    """Random acyclic parse graphs plus a packet (select field -> value).

    Select values come from a tiny range so that equal, overlapping and
    one-bit-apart entries show up often.
    """
    n = draw(st.integers(1, max_states))
    headers, states = [], []
    for i in range(n):
        sel_w = draw(st.sampled_from([4, 8, 12, 16]))
        pad = draw(st.sampled_from([8, 24, 64, 120]))
        headers.append(header(f"h{i}", [("sel", sel_w), ("pad", pad)]))
    for i in range(n):
        targets = [f"s{j}" for j in range(i + 1, n)] + ["accept", "reject"]
        k = draw(st.integers(0, 4))
        trans = []
        for _ in range(k):
            value = draw(st.integers(0, 7))
            nxt = draw(st.sampled_from(targets))
            if draw(st.booleans()):
                trans.append((value, nxt))
            else:
                trans.append((value, draw(st.integers(0, 7)), nxt))
        if i == n - 1:
            trans.append((None, "accept"))  # accept stays reachable
        elif not trans or draw(st.booleans()):
            trans.append((None, draw(st.sampled_from(targets))))
        select = f"h{i}.sel" if any(t[0] is not None for t in trans) else None
        if select is None:
            trans = [t for t in trans if t[0] is None][:1]
        states.append(state(f"s{i}", f"h{i}", select, trans))
    # keep the graph connected from s0 so every state is reachable
    for i in range(1, n):
        if not any(t["next"] == f"s{i}" for s in states[:i] for t in s["transitions"]):
            states[i - 1]["transitions"].insert(0, {"value": None, "mask": None, "next": f"s{i}"})
            states[i - 1]["transitions"] = _default_last(states[i - 1]["transitions"])
    doc = program("random_parser", headers, states, "s0")
    packet = {f"h{i}.sel": draw(st.integers(0, 15)) for i in range(n)}
    return load_ir(doc), packet


def _default_last(trans):
    keyed = [t for t in trans if t["value"] is not None]
    default = [t for t in trans if t["value"] is None][:1]
    return keyed + default


def parse_outcome(result):
    """A rejected packet is rejected; what was extracted before that is moot."""
    verdict, headers = result
    return (verdict, ()) if verdict == "reject" else (verdict, headers)

"""Tag bits packed into the low bits of link words.

Node references are 64-byte aligned addresses, which leaves the low bits of
every link free for flags.  A node's ``next`` word uses

    bit0  persistence (durable) bit
    bit1  marked (logically deleted)
    bit2  dflag (successor removal in progress)

and its ``old`` word uses bit0 as the insert flag (iflag).  ``NIL`` is 0.
"""

from __future__ import annotations

import re

NIL = 0

DURABLE = 0x1
MARKED = 0x2
DFLAG = 0x4
IFLAG = 0x1

TAG_MASK = 0x7
NODE_ALIGN = 64

KEY_MIN = -(2**63)
KEY_MAX = 2**63 - 1


def unmark(link: int) -> int:
    return link & ~TAG_MASK


def mark_durable(link: int) -> int:
    return link | DURABLE


def mark_del(link: int) -> int:
    return link | MARKED


def mark_dflag(link: int) -> int:
    return link | DFLAG


def mark_iflag(link: int) -> int:
    return link | IFLAG


def clear_durable(link: int) -> int:
    return link & ~DURABLE


def is_durable(link: int) -> bool:
    return link != NIL and bool(link & DURABLE)


def is_marked(link: int) -> bool:
    return link != NIL and bool(link & MARKED)


def is_dflagged(link: int) -> bool:
    return link != NIL and bool(link & DFLAG)


def is_iflagged(link: int) -> bool:
    return link != NIL and bool(link & IFLAG)


def is_clean(link: int) -> bool:
    """Neither marked nor dflagged; the durable bit does not matter."""
    return not (link & (MARKED | DFLAG))


def encode(target: int, durable=False, marked=False, dflag=False) -> int:
    if target % NODE_ALIGN:
        raise ValueError(f"target {target:#x} is not {NODE_ALIGN}-byte aligned")
    return target | (DURABLE if durable else 0) | (MARKED if marked else 0) | (DFLAG if dflag else 0)


def decode(link: int) -> tuple[int, bool, bool, bool]:
    return unmark(link), bool(link & DURABLE), bool(link & MARKED), bool(link & DFLAG)


# Rendering used in the event log: 0xADDR followed by flag letters.
#   next words: D (durable), M (marked), F (dflag)
#   old words:  I (iflag), M, F
def render_next(link: int) -> str:
    s = hex(unmark(link))
    if link & DURABLE:
        s += "D"
    if link & MARKED:
        s += "M"
    if link & DFLAG:
        s += "F"
    return s


def render_old(link: int) -> str:
    s = hex(unmark(link))
    if link & IFLAG:
        s += "I"
    if link & MARKED:
        s += "M"
    if link & DFLAG:
        s += "F"
    return s


_RENDERED = re.compile(r"^(0x[0-9a-f]+)([DIMF]*)$")  # lowercase hex keeps D and F unambiguous
_BITS = {"D": DURABLE, "I": IFLAG, "M": MARKED, "F": DFLAG}


def parse_link(text: str) -> int:
    m = _RENDERED.match(text)
    if not m:
        raise ValueError(f"malformed link {text!r}")
    value = int(m.group(1), 16)
    for flag in m.group(2):
        value |= _BITS[flag]
    return value


def render_pair(pair) -> list[str] | None:
    if pair is None:
        return None
    return [render_next(pair[0]), render_old(pair[1])]


def parse_pair(item) -> tuple[int, int] | None:
    if item is None:
        return None
    return parse_link(item[0]), parse_link(item[1])

"""Rebuild a list from a persistent image after a crash.

Recovery is one pass over the persisted links reachable from head.  Every
kept node gets a clean, durable next link and a NIL old field.  The two
lists differ only in what a persisted mark means: in the Physical-Delete list
a remove takes effect when its unlink persists, so a persisted mark alone is
a remove that never happened; in the Logical-Delete list the persisted mark
is the point of no return, so marked nodes are dropped.
"""

from __future__ import annotations

import json
from pathlib import Path

from . import taglink as tl
from .ldlist import LdSet
from .pdlist import PdSet
from .substrate import PersistentImage, SimSubstrate, WordPair

IMPLS = {"pd": PdSet, "ld": LdSet}


class CorruptImage(Exception):
    """Persisted links that no correct execution can produce."""


def _kept_chain(image: PersistentImage, impl: str) -> list[int]:
    """Head, kept nodes in order, tail."""
    if impl not in IMPLS:
        raise ValueError(f"unknown impl {impl!r}")
    try:
        head, tail = image.head, image.tail
    except KeyError:
        raise CorruptImage("image has no sentinels") from None
    chain = [head]
    seen = {head}
    node = head
    last_key = tl.KEY_MIN
    while node != tail:
        nxt = tl.unmark(image.cells[node][0])
        if nxt not in image.cells:
            raise CorruptImage(f"dangling link {nxt:#x} from {node:#x}")
        if nxt in seen:
            raise CorruptImage(f"cycle through {nxt:#x}")
        key = image.payload[nxt][0]
        if key <= last_key:
            raise CorruptImage(f"keys out of order at {nxt:#x}")
        seen.add(nxt)
        last_key = key
        node = nxt
        if node == tail:
            break
        if impl == "ld" and tl.is_marked(image.cells[node][0]):
            continue
        chain.append(node)
    chain.append(tail)
    return chain


def persistent_abstract_set(image: PersistentImage, impl: str) -> set[int]:
    """Keys the recovered set would hold, without building it."""
    return {image.payload[n][0] for n in _kept_chain(image, impl)[1:-1]}


def normalized_cells(image: PersistentImage, impl: str) -> dict[int, WordPair]:
    chain = _kept_chain(image, impl)
    values = {a: b for a, b in zip(chain, chain[1:])}
    out = {n: (tl.mark_durable(succ), tl.NIL) for n, succ in values.items()}
    out[chain[-1]] = image.cells[chain[-1]]
    return out


def recover(image: PersistentImage, impl: str, mem: SimSubstrate | None = None,
            contains="persist-last", **kw):
    """Rebuild a live set.  Reuses ``mem`` (already crashed) when given."""
    if mem is None:
        mem = SimSubstrate.from_image(image)
    mem.restore(normalized_cells(image, impl))
    return IMPLS[impl](mem, contains=contains, head=image.head, tail=image.tail, **kw)


def recover_pd(image: PersistentImage, mem: SimSubstrate | None = None, **kw) -> PdSet:
    return recover(image, "pd", mem, **kw)


def recover_ld(image: PersistentImage, mem: SimSubstrate | None = None, **kw) -> LdSet:
    return recover(image, "ld", mem, **kw)


# -- JSON-lines fixtures ----------------------------------------------------

def dump_image(image: PersistentImage, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cell in sorted(image.cells):
            key, value = image.payload[cell]
            fh.write(json.dumps({
                "cell": cell,
                "pair": tl.render_pair(image.cells[cell]),
                "key": key,
                "value": value,
            }) + "\n")


def load_image(path) -> PersistentImage:
    cells, payload = {}, {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rec = json.loads(line)
        cells[rec["cell"]] = tl.parse_pair(rec["pair"])
        payload[rec["cell"]] = (rec["key"], rec["value"])
    return PersistentImage(cells, payload)

"""Heap, working memory and fork forest, with the claim/merge/commit/abort rules.

Every operation is functional: it returns a new ``MemoryState`` and leaves its
argument untouched. Values are immutable, so copies are shallow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .values import IdSupply, ThreadId, TxId, Value, VarId, fresh_id, to_json


class InvalidLocation(LookupError):
    """A location that is neither in the heap nor claimed (an engine bug)."""


class ForestError(ValueError):
    pass


@dataclass
class MemoryState:
    heap: dict = field(default_factory=dict)  # VarId -> Value
    working: dict = field(default_factory=dict)  # VarId -> (Value, TxId)
    forest: dict = field(default_factory=dict)  # child ThreadId -> parent ThreadId

    def copy(self) -> "MemoryState":
        return MemoryState(dict(self.heap), dict(self.working), dict(self.forest))

    def owner(self, r: VarId) -> Optional[TxId]:
        entry = self.working.get(r)
        return entry[1] if entry is not None else None

    def visible(self, r: VarId):
        """Current value of ``r``: the claimed value if any, else the committed one."""
        entry = self.working.get(r)
        if entry is not None:
            return entry[0]
        return self.heap.get(r)

    def claims(self, k: TxId) -> set:
        return {r for r, (_, j) in self.working.items() if j == k}

    def key(self):
        return (
            frozenset(self.heap.items()),
            frozenset(self.working.items()),
            frozenset(self.forest.items()),
        )

    def to_json(self) -> dict:
        return {
            "heap": {str(r.id): to_json(v) for r, v in sorted(self.heap.items())},
            "working": {
                str(r.id): {"value": to_json(v), "tx": k.id}
                for r, (v, k) in sorted(self.working.items())
            },
            "forest": {str(c.id): p.id for c, p in sorted(self.forest.items())},
        }


def _known(state: MemoryState, r: VarId) -> None:
    if r not in state.heap and r not in state.working:
        raise InvalidLocation(f"{r!r} is not allocated")


def rename_tx(working: dict, k: TxId, j: TxId) -> dict:
    """``Δ[k ↦ j]``: every entry owned by ``k`` becomes owned by ``j``."""
    return {r: (v, j if owner == k else owner) for r, (v, owner) in working.items()}


def alloc_var(
    state: MemoryState, initial: Value, owner: TxId, supply: IdSupply | None = None
) -> tuple[MemoryState, VarId]:
    r = fresh_id("var", supply)
    while r in state.heap or r in state.working:
        r = fresh_id("var", supply)
    new = state.copy()
    new.working[r] = (initial, owner)
    return new, r


def claim_read(state: MemoryState, r: VarId, k: TxId) -> tuple[MemoryState, Value, Optional[TxId]]:
    """Read ``r`` on behalf of ``k``; claims it or merges ``k`` into its claimant."""
    _known(state, r)
    entry = state.working.get(r)
    if entry is None:
        value = state.heap[r]
        new = state.copy()
        new.working[r] = (value, k)
        return new, value, None
    value, j = entry
    if j == k:
        return state, value, None
    new = state.copy()
    new.working = rename_tx(state.working, k, j)
    return new, value, j


def claim_write(state: MemoryState, r: VarId, v: Value, k: TxId) -> tuple[MemoryState, Optional[TxId]]:
    _known(state, r)
    entry = state.working.get(r)
    new = state.copy()
    if entry is None or entry[1] == k:
        new.working[r] = (v, k)
        return new, None
    j = entry[1]
    new.working = rename_tx(state.working, k, j)
    new.working[r] = (v, j)
    return new, j


def commit_apply(state: MemoryState, k: TxId) -> MemoryState:
    new = state.copy()
    for r, (v, owner) in state.working.items():
        if owner == k:
            new.heap[r] = v
            del new.working[r]
    return new


def rollback_apply(state: MemoryState, k: TxId) -> MemoryState:
    """Drop every claim of ``k`` without touching the heap (retry)."""
    new = state.copy()
    new.working = {r: e for r, e in state.working.items() if e[1] != k}
    return new


def abort_apply(state: MemoryState, k: TxId, raising_root: ThreadId) -> MemoryState:
    """Abort ``k``: locations created inside ``k`` leak, claims vanish, the
    raiser's fork tree is removed."""
    new = state.copy()
    for r, (v, owner) in state.working.items():
        if owner == k:
            if r not in state.heap:
                new.heap[r] = v
            del new.working[r]
    new.forest = forest_remove(state.forest, forest_root(state.forest, raising_root))
    return new


# -- fork forest -----------------------------------------------------------


def forest_root(forest: dict, t: ThreadId) -> ThreadId:
    """Root of ``t``'s tree; an untracked thread is its own root."""
    seen = 0
    while t in forest:
        t = forest[t]
        seen += 1
        if seen > len(forest):
            raise ForestError("cycle in fork forest")
    return t


def forest_add_child(forest: dict, parent: ThreadId, child: ThreadId) -> dict:
    if child in forest or child == parent or _is_parent(forest, child):
        raise ForestError(f"{child!r} already in forest")
    new = dict(forest)
    new[child] = parent
    return new


def _is_parent(forest: dict, t: ThreadId) -> bool:
    return any(p == t for p in forest.values())


def forest_tree(forest: dict, root: ThreadId) -> set:
    """All threads whose root is ``root`` (including ``root``)."""
    members = {root}
    for t in forest:
        if forest_root(forest, t) == root:
            members.add(t)
    return members


def forest_remove(forest: dict, root: ThreadId) -> dict:
    tree = forest_tree(forest, root)
    return {c: p for c, p in forest.items() if c not in tree}

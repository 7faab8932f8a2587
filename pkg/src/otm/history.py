"""Recorded histories: events, trace files, happens-before, locality and consistency."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .values import ThreadId, TxId, Value, VarId, from_json, same_value, to_json

READ, WRITE, NEW, COMMIT, ABORT, MERGE = "read", "write", "new", "commit", "abort", "merge"
OPS = (READ, WRITE, NEW, COMMIT, ABORT, MERGE)
WRITES = (WRITE, NEW)
TERMINAL = (COMMIT, ABORT, MERGE)


class HistoryError(ValueError):
    pass


class TraceParseError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


@dataclass(frozen=True)
class Event:
    seq: int
    tx: TxId
    thread: ThreadId
    op: str
    var: Optional[VarId] = None
    value: Value = None
    into: Optional[TxId] = None

    @property
    def is_write(self) -> bool:
        return self.op in WRITES

    def to_json(self) -> dict:
        obj = {"seq": self.seq, "tx": self.tx.id, "thread": self.thread.id, "op": self.op}
        if self.op in (READ, WRITE, NEW):
            obj["var"] = self.var.id
            obj["value"] = to_json(self.value)
        if self.op == MERGE:
            obj["into"] = self.into.id
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "Event":
        op = obj["op"]
        if op not in OPS:
            raise ValueError(f"unknown op {op!r}")
        var = VarId(int(obj["var"])) if op in (READ, WRITE, NEW) else None
        value = from_json(obj["value"]) if op in (READ, WRITE, NEW) else None
        into = TxId(int(obj["into"])) if op == MERGE else None
        return cls(int(obj["seq"]), TxId(int(obj["tx"])), ThreadId(int(obj["thread"])), op, var, value, into)

    def __str__(self) -> str:
        if self.op in (READ, WRITE, NEW):
            return f"{self.op[0].upper()}_{self.tx!r}({self.var!r},{self.value!r})"
        if self.op == MERGE:
            return f"M_{self.tx!r}->{self.into!r}"
        return f"{self.op[0].upper()}_{self.tx!r}"


History = Sequence[Event]


# -- trace files -------------------------------------------------------------


def dumps(history: History) -> str:
    return "".join(json.dumps(e.to_json(), sort_keys=True, separators=(",", ":")) + "\n" for e in history)


def write_trace(path, history: History) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(history))


def loads(text: str) -> list[Event]:
    events = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            events.append(Event.from_json(json.loads(line)))
        except (ValueError, KeyError, TypeError) as e:
            raise TraceParseError(n, str(e)) from None
    return events


def read_trace(path) -> list[Event]:
    with open(path, encoding="utf-8") as f:
        return loads(f.read())


# -- structure ---------------------------------------------------------------


def validate(h: History) -> None:
    """Raise ``HistoryError`` unless ``h`` is well-formed."""
    last = None
    finished: dict[TxId, int] = {}
    alive: set[TxId] = set()
    for e in h:
        if last is not None and e.seq <= last:
            raise HistoryError(f"seq {e.seq} not increasing")
        last = e.seq
        if e.tx in finished:
            raise HistoryError(f"{e} issued after {e.tx!r} finished at seq {finished[e.tx]}")
        if e.op == MERGE:
            if e.into == e.tx or e.into in finished:
                raise HistoryError(f"{e} merges into a finished transaction")
            alive.add(e.into)
        if e.op in TERMINAL:
            finished[e.tx] = e.seq
        else:
            alive.add(e.tx)


def transactions(h: History) -> list[TxId]:
    """Transactions in order of first appearance (including merge targets)."""
    seen: dict[TxId, None] = {}
    for e in h:
        seen.setdefault(e.tx, None)
        if e.into is not None:
            seen.setdefault(e.into, None)
    return list(seen)


def status(h: History) -> dict[TxId, str]:
    """committed / aborted / merged / running for every transaction."""
    st = {k: "running" for k in transactions(h)}
    for e in h:
        if e.op == COMMIT:
            st[e.tx] = "committed"
        elif e.op == ABORT:
            st[e.tx] = "aborted"
        elif e.op == MERGE:
            st[e.tx] = "merged"
    return st


def first_op(h: History) -> dict[TxId, int]:
    """Seq of each transaction's first operation; merge events count only
    when the transaction issued nothing else."""
    first: dict[TxId, int] = {}
    fallback: dict[TxId, int] = {}
    for e in h:
        if e.op == MERGE:
            fallback.setdefault(e.tx, e.seq)
        else:
            first.setdefault(e.tx, e.seq)
    for k, s in fallback.items():
        first.setdefault(k, s)
    return first


def end_op(h: History) -> dict[TxId, int]:
    return {e.tx: e.seq for e in h if e.op in (COMMIT, ABORT)}


def happens_before(h: History) -> set[tuple[TxId, TxId]]:
    """Pairs ``(k, k2)`` with ``k`` committed or aborted before ``k2`` starts."""
    validate(h)
    first = first_op(h)
    end = end_op(h)
    return {(k, k2) for k, s in end.items() for k2, f in first.items() if k != k2 and s < f}


def is_local_read(h: History, i: int) -> bool:
    e = h[i]
    if e.op != READ:
        return False
    for p in reversed(h[:i]):
        if p.tx == e.tx and p.var == e.var:
            return p.is_write
    return False


def is_local_write(h: History, i: int) -> bool:
    e = h[i]
    if not e.is_write:
        return False
    for n in h[i + 1 :]:
        if n.tx == e.tx and n.var == e.var:
            return n.is_write
    return False


def nonlocal_(h: History) -> list[Event]:
    """The longest sub-history without local reads or writes.

    Single pass per round: for each (tx, var) track the last kept event; a
    read after a kept write is dropped, a write followed by another write
    drops the earlier one. Rounds repeat until nothing changes.
    """
    cur = list(h)
    while True:
        drop: set[int] = set()
        last: dict[tuple, int] = {}
        for i, e in enumerate(cur):
            if e.var is None:
                continue
            key = (e.tx, e.var)
            j = last.get(key)
            if j is not None:
                prev = cur[j]
                if e.op == READ and prev.is_write:
                    drop.add(i)
                elif e.is_write and prev.is_write:
                    drop.add(j)
            last[key] = i
        if not drop:
            return cur
        cur = [e for i, e in enumerate(cur) if i not in drop]


def consistent(h: History) -> bool:
    # a read after the transaction's own write must see the latest such write
    own: dict[tuple, Value] = {}
    for e in h:
        if e.var is None:
            continue
        key = (e.tx, e.var)
        if e.is_write:
            own[key] = e.value
        elif key in own and not same_value(own[key], e.value):
            return False
    nl = nonlocal_(h)
    written: dict[VarId, list] = {}
    for e in nl:
        if e.is_write:
            written.setdefault(e.var, []).append(e.value)
    for e in nl:
        if e.op == READ and not any(same_value(v, e.value) for v in written.get(e.var, ())):
            return False
    return True


def project(h: History, k: TxId) -> list[tuple]:
    return [(e.op, e.var, e.value, e.into) for e in h if e.tx == k]


def equivalent(h1: History, h2: History) -> bool:
    """Equal up to the relative position of operations of different transactions."""
    ks = set(transactions(h1))
    if ks != set(transactions(h2)):
        return False
    return all(project(h1, k) == project(h2, k) for k in ks)


def counts(h: Iterable[Event]) -> dict[str, int]:
    c = {op: 0 for op in OPS}
    for e in h:
        c[e.op] += 1
    return c

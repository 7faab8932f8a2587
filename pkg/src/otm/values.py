"""Identifiers and the value domain shared by the interpreter.

Values are plain immutable Python objects:

    ()              unit
    bool, int       booleans and integers
    str             characters (and short strings)
    None            the absent value of an empty MVar or future
    VarId/ThreadId  handles
    (a, b)          pairs
    VList           lists
    Exc             exception payloads (tag + value)
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, Union


@dataclass(frozen=True, order=True)
class VarId:
    id: int

    def __repr__(self) -> str:
        return f"r{self.id}"


@dataclass(frozen=True, order=True)
class TxId:
    id: int

    def __repr__(self) -> str:
        return f"k{self.id}"


@dataclass(frozen=True, order=True)
class ThreadId:
    id: int

    def __repr__(self) -> str:
        return f"t{self.id}"


@dataclass(frozen=True)
class VList:
    items: tuple = ()

    def __repr__(self) -> str:
        return f"VList({list(self.items)!r})"


@dataclass(frozen=True)
class Exc:
    tag: str
    payload: Any = ()


Value = Union[tuple, bool, int, str, None, VarId, ThreadId, VList, Exc]

EVAL_ERROR = "eval-error"

_KINDS = {"var": VarId, "tx": TxId, "thread": ThreadId}


class IdSupply:
    """Per-kind monotonically increasing id counters.

    Safe under concurrent callers. ``snapshot``/``from_snapshot`` let the
    deterministic engine copy the counters along with the rest of its state.
    """

    def __init__(self, var: int = 0, tx: int = 0, thread: int = 0):
        self._next = {"var": var, "tx": tx, "thread": thread}
        self._lock = threading.Lock()

    def fresh(self, kind: str):
        cls = _KINDS[kind]
        with self._lock:
            n = self._next[kind]
            self._next[kind] = n + 1
        return cls(n)

    def snapshot(self) -> tuple[int, int, int]:
        with self._lock:
            return (self._next["var"], self._next["tx"], self._next["thread"])

    @classmethod
    def from_snapshot(cls, snap: tuple[int, int, int]) -> "IdSupply":
        return cls(*snap)


_default_supply = IdSupply()


def fresh_id(kind: str, supply: IdSupply | None = None):
    """Return a fresh ``VarId``, ``TxId`` or ``ThreadId`` (``kind`` is var/tx/thread)."""
    if kind not in _KINDS:
        raise ValueError(f"unknown id kind {kind!r}")
    return (supply or _default_supply).fresh(kind)


# -- canonical JSON form ---------------------------------------------------


def to_json(v: Value) -> Any:
    if v is None:
        return {"t": "none"}
    if v == () and isinstance(v, tuple):
        return {"t": "unit"}
    if isinstance(v, bool):
        return {"t": "bool", "v": v}
    if isinstance(v, int):
        return {"t": "int", "v": v}
    if isinstance(v, str):
        return {"t": "char", "v": v}
    if isinstance(v, VarId):
        return {"t": "var", "v": v.id}
    if isinstance(v, ThreadId):
        return {"t": "thread", "v": v.id}
    if isinstance(v, tuple):
        if len(v) != 2:
            raise TypeError(f"tuples must be pairs, got {v!r}")
        return {"t": "pair", "v": [to_json(v[0]), to_json(v[1])]}
    if isinstance(v, VList):
        return {"t": "list", "v": [to_json(x) for x in v.items]}
    if isinstance(v, Exc):
        return {"t": "exc", "tag": v.tag, "v": to_json(v.payload)}
    raise TypeError(f"not a value: {v!r}")


def from_json(obj: Any) -> Value:
    try:
        tag = obj["t"]
    except (TypeError, KeyError):
        raise ValueError(f"malformed value {obj!r}") from None
    if tag == "none":
        return None
    if tag == "unit":
        return ()
    if tag == "bool":
        return bool(obj["v"])
    if tag == "int":
        return int(obj["v"])
    if tag == "char":
        return str(obj["v"])
    if tag == "var":
        return VarId(int(obj["v"]))
    if tag == "thread":
        return ThreadId(int(obj["v"]))
    if tag == "pair":
        a, b = obj["v"]
        return (from_json(a), from_json(b))
    if tag == "list":
        return VList(tuple(from_json(x) for x in obj["v"]))
    if tag == "exc":
        return Exc(obj["tag"], from_json(obj["v"]))
    raise ValueError(f"unknown value tag {tag!r}")


def same_value(a: Value, b: Value) -> bool:
    """Equality that does not conflate ``True`` with ``1``."""
    return a == b and to_json(a) == to_json(b)

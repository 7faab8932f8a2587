"""Opacity graphs and the opacity verdict.

Edges point from a transaction to one that must precede it in any witness
serialisation. For a total order ``<<`` on transactions, ``k -> k2`` when

1. ``k2`` happens before ``k``;
2. ``k`` reads something written by ``k2`` (the only red edges);
3. ``k2`` reads a location written by ``k`` and ``k2 << k``;
4. ``k2`` is committed, writes some ``r``, ``k2 << k3`` and ``k3`` reads ``r`` from ``k``.

Vertices are red for running or aborted transactions and black for committed
ones. Merged transactions are folded into the transaction that survived the
merge before deciding opacity; ``encode_merges`` gives the alternative
marker-location encoding used by the forest check.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .history import (
    ABORT,
    COMMIT,
    MERGE,
    NEW,
    READ,
    WRITE,
    Event,
    History,
    consistent,
    happens_before,
    nonlocal_,
    status,
    transactions,
    validate,
)
from .values import TxId, VarId, same_value

RED, BLACK = "red", "black"

SEARCH_LIMIT = 8


class OrderError(ValueError):
    """The order given to ``build_opg`` is not a total order on the transactions."""


# -- merge translation -----------------------------------------------------------


def survivors(h: History) -> dict[TxId, TxId]:
    """Map every merged-away transaction to the transaction it finally merged into."""
    into = {e.tx: e.into for e in h if e.op == MERGE}
    out = {}
    for k in into:
        j = into[k]
        seen = {k}
        while j in into and j not in seen:
            seen.add(j)
            j = into[j]
        out[k] = j
    return out


def fold_merges(h: History) -> list[Event]:
    """Attribute every event to its merge survivor and drop the merge events.

    Merged transactions share threads, locations and outcome, so the group
    is a single (multi-threaded) transaction.
    """
    alias = survivors(h)
    return [
        Event(e.seq, alias.get(e.tx, e.tx), e.thread, e.op, e.var, e.value, e.into)
        for e in h
        if e.op != MERGE
    ]


def encode_merges(h: History) -> list[Event]:
    """Replace each merge of ``k`` into ``j`` by: ``j`` creates and writes a fresh
    marker location, ``k`` reads it and stays commit-pending.

    Every other event keeps its recorded transaction. Sequence numbers are
    renumbered densely.
    """
    top = max((e.var.id for e in h if e.var is not None), default=-1)
    out: list[Event] = []
    marker = top
    for e in h:
        if e.op != MERGE:
            out.append(e)
            continue
        marker += 1
        m = VarId(marker)
        token = ("merge", e.tx.id)
        out.append(Event(0, e.into, e.thread, NEW, m, ()))
        out.append(Event(0, e.into, e.thread, WRITE, m, token))
        out.append(Event(0, e.tx, e.thread, READ, m, token))
    return [Event(i, e.tx, e.thread, e.op, e.var, e.value, e.into) for i, e in enumerate(out)]


# -- graph ---------------------------------------------------------------------------


@dataclass
class OpacityGraph:
    vertices: dict = field(default_factory=dict)  # TxId -> colour
    edges: dict = field(default_factory=dict)  # (TxId, TxId) -> colour

    def add_edge(self, u: TxId, v: TxId, colour: str) -> None:
        if u == v:
            return
        if self.edges.get((u, v)) != RED:
            self.edges[(u, v)] = colour

    def successors(self, u: TxId) -> list[TxId]:
        return sorted(v for (a, v) in self.edges if a == u)

    def out_degree(self, u: TxId) -> int:
        return sum(1 for (a, _) in self.edges if a == u)

    def to_dot(self) -> str:
        lines = ["digraph opg {"]
        for k, c in sorted(self.vertices.items()):
            lines.append(f'  "{k!r}" [color={c}];')
        for (u, v), c in sorted(self.edges.items()):
            lines.append(f'  "{u!r}" -> "{v!r}" [color={c}];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "vertices": {str(k.id): c for k, c in sorted(self.vertices.items())},
            "edges": [[u.id, v.id, c] for (u, v), c in sorted(self.edges.items())],
        }


def colours(h: History) -> dict[TxId, str]:
    return {k: BLACK if s == "committed" else RED for k, s in status(h).items()}


def reads_from(h: History) -> dict[int, TxId]:
    """Writer of each read in ``h`` (indexed by position) that another transaction wrote.

    The writer is the latest earlier write of the same value to the same
    location, preferring transactions committed before the read. Reads with
    no such write (including reads of a transaction's own writes) are absent.
    """
    out: dict[int, TxId] = {}
    committed_at: dict[TxId, int] = {}
    writes: dict[VarId, list[tuple[int, Event]]] = {}
    for i, e in enumerate(h):
        if e.op == COMMIT:
            committed_at[e.tx] = i
        elif e.is_write:
            writes.setdefault(e.var, []).append((i, e))
        elif e.op == READ:
            best = fallback = None
            for j, w in reversed(writes.get(e.var, [])):
                if w.tx == e.tx or not same_value(w.value, e.value):
                    continue
                if fallback is None:
                    fallback = w.tx
                c = committed_at.get(w.tx)
                if c is not None and c < i:
                    best = w.tx
                    break
            writer = best if best is not None else fallback
            if writer is not None:
                out[i] = writer
    return out


def _check_order(h: History, order: Sequence[TxId]) -> dict[TxId, int]:
    txs = set(transactions(h))
    pos = {k: i for i, k in enumerate(order)}
    if len(pos) != len(order) or set(pos) != txs:
        raise OrderError("order must list every transaction of the history exactly once")
    return pos


def build_opg(h: History, order: Sequence[TxId], *, hb: Optional[set] = None, rf: Optional[dict] = None) -> OpacityGraph:
    """Opacity graph of ``h`` (expected to be ``nonlocal``) under ``order``."""
    pos = _check_order(h, order)
    g = OpacityGraph(vertices=colours(h))
    hb = happens_before(h) if hb is None else hb
    rf = reads_from(h) if rf is None else rf
    for k2, k in hb:  # k2 happens before k
        g.add_edge(k, k2, BLACK)
    writers: dict[VarId, set] = {}
    readers: dict[VarId, set] = {}
    for e in h:
        if e.is_write:
            writers.setdefault(e.var, set()).add(e.tx)
        elif e.op == READ:
            readers.setdefault(e.var, set()).add(e.tx)
    for i, k2 in rf.items():
        g.edges[(h[i].tx, k2)] = RED
    for r, rs in readers.items():
        for k2 in rs:
            for k in writers.get(r, ()):
                if k != k2 and pos[k2] < pos[k]:
                    g.add_edge(k, k2, BLACK)
    for i, k in rf.items():
        k3, r = h[i].tx, h[i].var
        for k2 in writers.get(r, ()):
            if k2 != k and g.vertices[k2] == BLACK and pos[k2] < pos[k3]:
                g.add_edge(k, k2, BLACK)
    return g


def well_formed(g: OpacityGraph) -> bool:
    """No transaction reads from a running or aborted one: no red edge enters a red vertex."""
    return not any(c == RED and g.vertices[v] == RED for (_, v), c in g.edges.items())


def red_edges_only_from_red(g: OpacityGraph) -> bool:
    """The literal reading: every edge leaving a red vertex is red.

    Too strong for deciding opacity (an aborted transaction that merely
    happens after a committed one already violates it), but it is the
    property a red forest trivially has.
    """
    return not any(c != RED and g.vertices[u] == RED for (u, _), c in g.edges.items())


def ill_formed_edges(g: OpacityGraph) -> list[tuple[TxId, TxId]]:
    return sorted((u, v) for (u, v), c in g.edges.items() if c == RED and g.vertices[v] == RED)


def find_cycle(g: OpacityGraph) -> Optional[list[TxId]]:
    """Some cycle as a vertex list (first vertex not repeated), or None."""
    succ: dict[TxId, list[TxId]] = {k: [] for k in g.vertices}
    for u, v in sorted(g.edges):
        succ.setdefault(u, []).append(v)
        succ.setdefault(v, [])
    state: dict[TxId, int] = {}
    for root in sorted(succ):
        if state.get(root):
            continue
        path = [root]
        state[root] = 1
        iters = [iter(succ[root])]
        while iters:
            for v in iters[-1]:
                s = state.get(v, 0)
                if s == 1:
                    return path[path.index(v) :]
                if s == 0:
                    state[v] = 1
                    path.append(v)
                    iters.append(iter(succ[v]))
                    break
            else:
                state[path.pop()] = 2
                iters.pop()
    return None


def acyclic(g: OpacityGraph) -> bool:
    return find_cycle(g) is None


def forest_red_check(g: OpacityGraph) -> bool:
    """Every edge red, out-degree at most one, every vertex with an outgoing edge red, no cycle."""
    if any(c != RED for c in g.edges.values()):
        return False
    out: dict[TxId, int] = {}
    for u, _ in g.edges:
        out[u] = out.get(u, 0) + 1
    if any(n > 1 for n in out.values()):
        return False
    if any(g.vertices[u] != RED for u in out):
        return False
    return acyclic(g)


def forest_violations(g: OpacityGraph) -> list[str]:
    """Human-readable reasons why ``forest_red_check`` fails (empty if it holds)."""
    out = []
    for (u, v), c in sorted(g.edges.items()):
        if c != RED:
            out.append(f"black edge {u!r}->{v!r}")
    for u in sorted(g.vertices):
        d = g.out_degree(u)
        if d > 1:
            out.append(f"{u!r} has out-degree {d}")
        if d and g.vertices[u] != RED:
            out.append(f"black vertex {u!r} has an outgoing edge")
    cyc = find_cycle(g)
    if cyc:
        out.append("cycle " + "->".join(repr(k) for k in cyc))
    return out


# -- orders and verdicts -------------------------------------------------------------


def canonical_order(h: History) -> list[TxId]:
    """Finished transactions by commit/abort position, merged-away transactions
    just before their survivor, live ones last by first event."""
    end: dict[TxId, int] = {}
    first: dict[TxId, int] = {}
    for e in h:
        first.setdefault(e.tx, e.seq)
        if e.op in (COMMIT, ABORT):
            end[e.tx] = e.seq
    alias = survivors(h)
    big = float("inf")

    def key(k: TxId):
        anchor = alias.get(k, k)
        merged = 0 if k in alias else 1
        if anchor in end:
            return (0, end[anchor], merged, first.get(k, big), k.id)
        return (1, first.get(anchor, big), merged, first.get(k, big), k.id)

    return sorted(transactions(h), key=key)


@dataclass
class Verdict:
    opaque: bool
    order: Optional[list] = None
    violation: Optional[dict] = None
    heuristic: bool = False

    def to_json(self) -> dict:
        obj: dict = {"opaque": self.opaque, "heuristic": self.heuristic}
        if self.order is not None:
            obj["order"] = [k.id for k in self.order]
        if self.violation is not None:
            obj["violation"] = self.violation
        return obj

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _inconsistency(h: History) -> Optional[Event]:
    """The first read that makes ``h`` inconsistent."""
    for n in range(1, len(h) + 1):
        if not consistent(h[:n]):
            return h[n - 1]
    return None


def complete(h: History) -> list[Event]:
    """Finish every running transaction: commit those another transaction
    reads from (their readers could not be legal otherwise), abort the rest.

    The added events come after everything else, so happens-before is unchanged.
    """
    st = status(h)
    running = [k for k in transactions(h) if st[k] == "running"]
    if not running:
        return list(h)
    read_from = set(reads_from(h).values())
    out = list(h)
    seq = (h[-1].seq + 1) if h else 0
    for k in running:
        thread = next(e.thread for e in h if e.tx == k)
        out.append(Event(seq, k, thread, COMMIT if k in read_from else ABORT))
        seq += 1
    return out


def _attempt(h: History, order, hb, rf) -> tuple[bool, OpacityGraph]:
    g = build_opg(h, order, hb=hb, rf=rf)
    return well_formed(g) and acyclic(g), g


def opaque(h: History, search_limit: int = SEARCH_LIMIT) -> Verdict:
    """Decide opacity through the graph characterisation.

    Merges are folded first and running transactions completed (see
    ``complete``). The canonical order is tried; if it fails and
    there are at most ``search_limit`` transactions, every order is tried.
    Beyond that the canonical result is reported with ``heuristic=True``.
    """
    validate(h)
    folded = fold_merges(h)
    if not consistent(folded):
        bad = _inconsistency(folded)
        return Verdict(False, violation={"kind": "inconsistent", "event": bad.to_json() if bad else None})
    nl = complete(nonlocal_(folded))
    # real-time order comes from the full history: dropping a local first
    # write would otherwise make a transaction look as if it started later
    hb = happens_before(folded)
    rf = reads_from(nl)
    order = canonical_order(nl)
    ok, g = _attempt(nl, order, hb, rf)
    if ok:
        return Verdict(True, order=order)
    txs = transactions(nl)
    if len(txs) > search_limit:
        return Verdict(False, violation=_violation(g), heuristic=True)
    for perm in itertools.permutations(txs):
        ok, _ = _attempt(nl, perm, hb, rf)
        if ok:
            return Verdict(True, order=list(perm))
    return Verdict(False, violation=_violation(g))


def _violation(g: OpacityGraph) -> dict:
    cyc = find_cycle(g)
    if cyc is not None:
        return {"kind": "cycle", "cycle": [k.id for k in cyc]}
    return {"kind": "ill-formed", "edges": [[u.id, v.id] for u, v in ill_formed_edges(g)]}


def opg_of(h: History, encode: bool = True) -> OpacityGraph:
    """``OPG(nonlocal(h), canonical order)`` with merges encoded through marker
    locations (``encode=True``) or folded into their survivor."""
    if encode:
        full = encode_merges(h)
        return build_opg(nonlocal_(full), canonical_order(h), hb=happens_before(full))
    full = fold_merges(h)
    nl = nonlocal_(full)
    return build_opg(nl, canonical_order(nl), hb=happens_before(full))


def merge_forest(h: History) -> OpacityGraph:
    """The graph of merge edges alone: ``k -> j`` (red) when ``k`` merged into ``j``."""
    g = OpacityGraph(vertices=colours(h))
    for e in h:
        if e.op == MERGE:
            g.add_edge(e.tx, e.into, RED)
    return g

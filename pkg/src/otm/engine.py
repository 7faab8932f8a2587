"""Labelled transition system for open transactions.

A ``MachineState`` holds the memory, the thread family and the bookkeeping
needed by the scheduler. ``enabled`` lists every applicable rule instance as
``(ThreadId, rule)`` pairs and ``step`` applies one of them, returning the new
state (the old one is left untouched) and the transition label.

Thread-level rules: BindVal, BindEx, CatchVal, CatchEx, Eval, InChar,
OutChar, ForkIO, New, ForkT, Isolated.
Transaction-level rules (owned by one participant): Commit, Abort, Rollback.

Isolated blocks run to completion inside a single step. A block that ends in
``retry`` leaves no trace and is simply not enabled. When nothing but stuck
transactions remain, each stuck transaction may be rolled back; its threads
go back to the start of their atomic block and sleep until some location
they read (before writing it themselves) differs from the value first seen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

from . import memory as mem
from .action import (
    Action,
    Atomic,
    Bind,
    Catch,
    Fork,
    GetChar,
    Isolated,
    Kind,
    KindError,
    NewVar,
    OrElse,
    PutChar,
    Pure,
    ReadVar,
    Retried,
    Retry,
    Return,
    Returned,
    Threw,
    Throw,
    WriteVar,
    eval_pure,
)
from .history import ABORT, COMMIT, MERGE, NEW, READ, WRITE, Event
from .memory import MemoryState
from .values import Exc, IdSupply, ThreadId, TxId, Value, VarId, to_json

RUN, DONE, DIED = "run", "done", "died"

RETRY_EXC = Exc("retry", ())

ISOLATED_FUEL = 100_000


class SchedulerContractError(RuntimeError):
    """``step`` was called with a choice that is not enabled."""


class ProtocolError(RuntimeError):
    pass


# -- labels ------------------------------------------------------------------


@dataclass(frozen=True)
class Tau:
    def __str__(self) -> str:
        return "tau"


@dataclass(frozen=True)
class New:
    tx: TxId

    def __str__(self) -> str:
        return f"new<{self.tx!r}>"


@dataclass(frozen=True)
class Co:
    tx: TxId

    def __str__(self) -> str:
        return f"co<{self.tx!r}>"


@dataclass(frozen=True)
class Ab:
    tx: TxId
    thread: ThreadId
    exc: Value

    def __str__(self) -> str:
        return f"ab<{self.tx!r},{self.thread!r},{self.exc!r}>"


@dataclass(frozen=True)
class AbBar:
    tx: TxId
    thread: ThreadId
    exc: Value

    def __str__(self) -> str:
        return f"ab~<{self.tx!r},{self.thread!r},{self.exc!r}>"


@dataclass(frozen=True)
class In:
    char: str

    def __str__(self) -> str:
        return f"?{self.char}"


@dataclass(frozen=True)
class Out:
    char: str

    def __str__(self) -> str:
        return f"!{self.char}"


TAU = Tau()


def transaction(label) -> Optional[TxId]:
    return getattr(label, "tx", None)


# -- threads -------------------------------------------------------------------


class Interner:
    """Maps thread-position descriptions to small ints (shared across states)."""

    def __init__(self):
        self._table: dict = {}

    def __call__(self, item) -> int:
        n = self._table.get(item)
        if n is None:
            n = self._table[item] = len(self._table)
        return n


@dataclass(frozen=True)
class Saved:
    """What a transactional thread resumes with after commit.

    Threads forked inside the transaction have ``root`` false; their
    continuation is ``return``.
    """

    io_stack: Optional[tuple]
    atomic: Optional[Atomic] = None
    entry_key: int = 0
    root: bool = True


@dataclass(frozen=True)
class Thread:
    id: ThreadId
    term: Action
    stack: Optional[tuple] = None  # cons list of Bind/Catch frames
    tx: Optional[TxId] = None
    saved: Optional[Saved] = None
    status: str = RUN
    wake: Optional[tuple] = None  # ((VarId, value), ...) to wait on before New
    reads: tuple = ()  # (VarId, value) observed from outside in the current attempt
    writes: frozenset = frozenset()  # locations written or created in the current attempt
    key: int = 0
    result: Value = None

    @property
    def in_tx(self) -> bool:
        return self.tx is not None

    @property
    def is_root(self) -> bool:
        return self.saved is not None and self.saved.root

    @property
    def level(self) -> Kind:
        return Kind.OTM if self.in_tx else Kind.IO

    @property
    def waiting(self) -> bool:
        """At ``return`` with nothing left to do inside its transaction."""
        return self.in_tx and self.stack is None and isinstance(self.term, Return)

    @property
    def raising(self) -> bool:
        return self.in_tx and self.stack is None and isinstance(self.term, Throw)


def _focus(term: Action, stack):
    while isinstance(term, (Bind, Catch)):
        stack = (term, stack)
        term = term.first if isinstance(term, Bind) else term.body
    return term, stack


def _canon(v: Value):
    if type(v) in (int, str, VarId, ThreadId) or v is None:
        return (type(v).__name__, v)
    return json.dumps(to_json(v), sort_keys=True)


# -- isolated sub-machine --------------------------------------------------------


class _IsoCtx:
    """Scratch state for one isolated run; discarded if the run retries."""

    def __init__(self, memory: MemoryState, tx: TxId, thread: ThreadId, ids: tuple, written=frozenset()):
        self.memory = memory
        self.written = set(written)
        self.tx = tx
        self.thread = thread
        self.supply = IdSupply.from_snapshot(ids)
        self.events: list[tuple] = []  # (tx, op, var, value, into)
        self.merges: list[tuple[TxId, TxId]] = []
        self.reads: list[tuple[VarId, Value]] = []
        self.fuel = ISOLATED_FUEL

    def snapshot(self):
        return (self.memory, self.tx, len(self.events), len(self.merges), len(self.reads), set(self.written), self.supply.snapshot())

    def restore(self, snap) -> None:
        self.memory, self.tx, ne, nm, nr, self.written, ids = snap
        del self.events[ne:]
        del self.merges[nm:]
        del self.reads[nr:]
        self.supply = IdSupply.from_snapshot(ids)

    def merge(self, j: TxId) -> None:
        self.events.append((self.tx, MERGE, None, None, j))
        self.merges.append((self.tx, j))
        self.tx = j


def _check_itm(term: Action) -> None:
    if term.kind is not None and term.kind is not Kind.ITM:
        raise KindError(f"{type(term).__name__} ({term.kind.value}) inside an isolated block")


def _eval_itm(ctx: _IsoCtx, term: Action):
    stack = None
    while True:
        ctx.fuel -= 1
        if ctx.fuel < 0:
            raise RuntimeError("isolated block did not terminate")
        term, stack = _focus(term, stack)
        _check_itm(term)
        if isinstance(term, (Return, Throw, Retry)):
            if stack is None:
                if isinstance(term, Return):
                    return Returned(term.value)
                if isinstance(term, Throw):
                    return Threw(term.value)
                return Retried()
            frame, stack = stack
            if isinstance(frame, Bind):
                term = frame.cont(term.value) if isinstance(term, Return) else term
            elif isinstance(term, Throw):
                term = frame.handler(term.value)
            continue
        if isinstance(term, Pure):
            term = eval_pure(term.fn, term.arg)
        elif isinstance(term, NewVar):
            ctx.memory, r = mem.alloc_var(ctx.memory, term.value, ctx.tx, ctx.supply)
            ctx.events.append((ctx.tx, NEW, r, term.value, None))
            ctx.written.add(r)
            term = Return(r)
        elif isinstance(term, ReadVar):
            ctx.memory, value, j = mem.claim_read(ctx.memory, term.var, ctx.tx)
            if j is not None:
                ctx.merge(j)
            ctx.events.append((ctx.tx, READ, term.var, value, None))
            if term.var not in ctx.written:
                ctx.reads.append((term.var, value))
            term = Return(value)
        elif isinstance(term, WriteVar):
            ctx.memory, j = mem.claim_write(ctx.memory, term.var, term.value, ctx.tx)
            if j is not None:
                ctx.merge(j)
            ctx.events.append((ctx.tx, WRITE, term.var, term.value, None))
            ctx.written.add(term.var)
            term = Return(())
        elif isinstance(term, OrElse):
            snap = ctx.snapshot()
            first = _eval_itm(ctx, term.first)
            if isinstance(first, Retried):
                ctx.restore(snap)
                term = term.second
            elif isinstance(first, Returned):
                term = Return(first.value)
            else:
                term = Throw(first.value)
        else:
            raise KindError(f"{type(term).__name__} is not allowed inside an isolated block")


@dataclass
class IsolatedRun:
    outcome: object
    memory: MemoryState
    tx: TxId
    events: list
    merges: list
    reads: list
    ids: tuple
    written: frozenset = frozenset()


# -- machine state ---------------------------------------------------------------


@dataclass
class MachineState:
    memory: MemoryState
    threads: dict  # ThreadId -> Thread, insertion ordered by id
    alias: dict = field(default_factory=dict)  # merged TxId -> surviving TxId
    inputs: str = ""
    output: str = ""
    ids: tuple = (0, 0, 0)  # next var / tx / thread id
    history: Optional[tuple] = None  # cons list, newest first
    history_len: int = 0
    touched: frozenset = frozenset()  # transactions that issued an operation
    restarts_left: int = 1_000_000
    interner: Interner = field(default_factory=Interner, repr=False, compare=False)
    _trials: dict = field(default_factory=dict, repr=False, compare=False)
    _enabled: Optional[list] = field(default=None, repr=False, compare=False)
    suppressed_rollback: bool = False

    def copy(self) -> "MachineState":
        return replace(
            self,
            memory=self.memory,
            threads=dict(self.threads),
            alias=dict(self.alias),
            _trials={},
            _enabled=None,
        )

    # -- queries

    def resolve(self, k: Optional[TxId]) -> Optional[TxId]:
        while k in self.alias:
            k = self.alias[k]
        return k

    def events(self) -> list[Event]:
        out = []
        node = self.history
        while node is not None:
            out.append(node[0])
            node = node[1]
        out.reverse()
        return out

    def live_transactions(self) -> dict[TxId, list[Thread]]:
        groups: dict[TxId, list[Thread]] = {}
        for th in self.threads.values():
            if th.in_tx:
                groups.setdefault(self.resolve(th.tx), []).append(th)
        return groups

    def participants(self, k: TxId) -> list[Thread]:
        k = self.resolve(k)
        return [th for th in self.threads.values() if th.in_tx and self.resolve(th.tx) == k]

    def key(self):
        """Hashable summary used for memoised exploration."""
        threads = tuple(
            (t.id.id, t.status, t.key, self.resolve(t.tx), t.wake, t.reads, t.writes)
            for t in self.threads.values()
        )
        return (self.memory.key(), threads, self.inputs, self.output, self.ids, self.restarts_left)

    def terminal_key(self):
        threads = tuple((t.id.id, t.status, _canon(t.result)) for t in self.threads.values())
        return (frozenset((r, _canon(v)) for r, v in self.memory.heap.items()), threads, self.output)

    # -- mutation helpers (used on fresh copies only)

    def _fresh(self, kind: str):
        v, k, t = self.ids
        if kind == "tx":
            self.ids = (v, k + 1, t)
            return TxId(k)
        if kind == "thread":
            self.ids = (v, k, t + 1)
            return ThreadId(t)
        raise ValueError(kind)

    def _record(self, tx: TxId, thread: ThreadId, op: str, var=None, value=None, into=None) -> None:
        e = Event(self.history_len, tx, thread, op, var, value, into)
        self.history = (e, self.history)
        self.history_len += 1

    def _set(self, th: Thread) -> None:
        self.threads[th.id] = th

    def _advance(self, th: Thread, rule: str, token=None, **changes) -> Thread:
        key = self.interner((th.key, rule, token))
        new = replace(th, key=key, **changes)
        return _settle(new)


def _settle(th: Thread) -> Thread:
    """Focus the term and absorb finished plain threads."""
    term, stack = _focus(th.term, th.stack)
    if term is not th.term or stack is not th.stack:
        th = replace(th, term=term, stack=stack)
    if not th.in_tx and th.status == RUN and stack is None:
        if isinstance(term, Return):
            th = replace(th, status=DONE, result=term.value)
        elif isinstance(term, Throw):
            th = replace(th, status=DIED, result=term.value)
    return th


def initial_state(program: Action, inputs: str = "", max_restarts: int = 1_000_000) -> MachineState:
    if program.kind not in (None, Kind.IO):
        raise KindError(f"a program must be an IO action, got {program.kind.value}")
    st = MachineState(memory=MemoryState(), threads={}, inputs=inputs, restarts_left=max_restarts)
    tid = st._fresh("thread")
    st._set(_settle(Thread(tid, program, key=st.interner(("main",)))))
    return st


# -- isolated execution ------------------------------------------------------------


def _trial(state: MachineState, th: Thread, body: Action) -> IsolatedRun:
    cached = state._trials.get(th.id)
    if cached is not None:
        return cached
    ctx = _IsoCtx(state.memory, state.resolve(th.tx), th.id, state.ids, th.writes)
    outcome = _eval_itm(ctx, body)
    run = IsolatedRun(
        outcome, ctx.memory, ctx.tx, ctx.events, ctx.merges, ctx.reads, ctx.supply.snapshot(), frozenset(ctx.written)
    )
    state._trials[th.id] = run
    return run


def _apply_isolated(state: MachineState, th: Thread, run: IsolatedRun) -> MachineState:
    new = state.copy()
    new.memory = run.memory
    new.ids = run.ids
    touched = set(state.touched)
    for tx, op, var, value, into in run.events:
        new._record(tx, th.id, op, var, value, into)
        touched.add(tx)
        if into is not None:
            touched.add(into)
    for k, j in run.merges:
        new.alias[k] = j
    new.touched = frozenset(touched)
    return new


def run_isolated(state: MachineState, t: ThreadId, body: Action):
    """Run ``body`` in isolation for transactional thread ``t``.

    Returns ``(state, outcome)``. On ``Returned``/``Threw`` the memory effects,
    merges and events are kept; on ``Retried`` the state is returned unchanged.
    The thread's own term is not touched.
    """
    th = state.threads[t]
    if not th.in_tx:
        raise ProtocolError(f"{t!r} is not inside a transaction")
    run = _trial(state.copy(), th, body)
    if isinstance(run.outcome, Retried):
        return state, run.outcome
    new = _apply_isolated(state, th, run)
    new._set(replace(new.threads[t], tx=run.tx, reads=th.reads + tuple(run.reads), writes=run.written))
    return new, run.outcome


def eval_orelse(state: MachineState, t: ThreadId, first: Action, second: Action):
    return run_isolated(state, t, OrElse(first, second))


# -- enabled rules -----------------------------------------------------------------


def _pure_rule(th: Thread) -> Optional[str]:
    term = th.term
    if isinstance(term, Pure):
        return "Eval"
    if isinstance(term, (Return, Throw, Retry)) and th.stack is not None:
        frame = th.stack[0]
        if isinstance(frame, Bind):
            return "BindVal" if isinstance(term, Return) else "BindEx"
        return "CatchEx" if isinstance(term, Throw) else "CatchVal"
    return None


def _woken(state: MachineState, th: Thread) -> bool:
    if th.wake is None:
        return True
    return any(
        r not in state.memory.heap and r not in state.memory.working
        or _canon(state.memory.visible(r)) != _canon(v)
        for r, v in th.wake
    )


def _thread_rules(state: MachineState, th: Thread) -> list[str]:
    if th.status != RUN:
        return []
    rule = _pure_rule(th)
    if rule is not None:
        return [rule]
    term = th.term
    if isinstance(term, (Return, Throw)):
        return []  # waiting for commit / raising: handled per transaction
    if isinstance(term, Retry):
        raise KindError(f"retry outside an isolated block in {th.id!r}")
    if term.kind is not None and term.kind is not th.level:
        raise KindError(f"{type(term).__name__} ({term.kind.value}) at {th.level.value} level in {th.id!r}")
    if not th.in_tx:
        if isinstance(term, GetChar):
            return ["InChar"] if state.inputs else []
        if isinstance(term, PutChar):
            return ["OutChar"]
        if isinstance(term, Fork):
            return ["ForkIO"]
        if isinstance(term, Atomic):
            return ["New"] if _woken(state, th) else []
    else:
        if isinstance(term, Fork):
            return ["ForkT"]
        if isinstance(term, Isolated):
            run = _trial(state, th, term.body)
            return [] if isinstance(run.outcome, Retried) else ["Isolated"]
    raise KindError(f"{type(term).__name__} cannot run at {th.level.value} level")


def enabled(state: MachineState) -> list[tuple[ThreadId, str]]:
    """All applicable rule instances, sorted by thread then rule name."""
    if state._enabled is not None:
        return state._enabled
    out: list[tuple[ThreadId, str]] = []
    blocked: set[ThreadId] = set()
    for th in state.threads.values():
        rules = _thread_rules(state, th)
        out.extend((th.id, r) for r in rules)
        if not rules and th.in_tx and isinstance(th.term, Isolated):
            blocked.add(th.id)
    stuck_txs = []
    for k, group in state.live_transactions().items():
        owner = min(th.id for th in group)
        if all(th.waiting for th in group):
            out.append((owner, "Commit"))
            continue
        raisers = [th for th in group if th.raising]
        for th in raisers:
            out.append((th.id, "Abort"))
        if not raisers and all(th.waiting or th.id in blocked for th in group):
            stuck_txs.append(owner)
    state.suppressed_rollback = False
    if not out and stuck_txs:
        if state.restarts_left > 0:
            out.extend((owner, "Rollback") for owner in stuck_txs)
        else:
            state.suppressed_rollback = True
    out.sort(key=lambda c: (c[0].id, c[1]))
    state._enabled = out
    return out


# -- steps ---------------------------------------------------------------------------


def step(state: MachineState, choice: tuple[ThreadId, str]):
    """Apply one enabled rule instance; returns ``(new_state, label)``."""
    if choice not in enabled(state):
        raise SchedulerContractError(f"{choice!r} is not enabled")
    t, rule = choice
    th = state.threads[t]
    handler = _RULES[rule]
    return handler(state, th)


def _step_pure(state: MachineState, th: Thread, rule: str):
    new = state.copy()
    term = th.term
    if rule == "Eval":
        nxt = eval_pure(term.fn, term.arg)
        new._set(new._advance(th, rule, (type(nxt).__name__, _canon(nxt.value)), term=nxt))
        return new, TAU
    frame, rest = th.stack
    if rule == "BindVal":
        nxt = frame.cont(term.value)
    elif rule == "CatchEx":
        nxt = frame.handler(term.value)
    else:
        nxt = term
    new._set(new._advance(th, rule, None, term=nxt, stack=rest))
    return new, TAU


def _step_inchar(state: MachineState, th: Thread):
    new = state.copy()
    c, new.inputs = state.inputs[0], state.inputs[1:]
    new._set(new._advance(th, "InChar", c, term=Return(c)))
    return new, In(c)


def _step_outchar(state: MachineState, th: Thread):
    new = state.copy()
    c = th.term.char
    new.output = state.output + c
    new._set(new._advance(th, "OutChar", None, term=Return(())))
    return new, Out(c)


def _step_forkio(state: MachineState, th: Thread):
    new = state.copy()
    child = new._fresh("thread")
    parent = new._advance(th, "ForkIO", child.id, term=Return(child))
    new._set(parent)
    new._set(_settle(Thread(child, th.term.body, key=new.interner((parent.key, "child")))))
    return new, TAU


def _step_new(state: MachineState, th: Thread):
    new = state.copy()
    k = new._fresh("tx")
    saved = Saved(th.stack, th.term, th.key)
    new._set(new._advance(th, "New", None, term=th.term.body, stack=None, tx=k, saved=saved, wake=None, reads=(), writes=frozenset()))
    return new, New(k)


def _step_forkt(state: MachineState, th: Thread):
    new = state.copy()
    child = new._fresh("thread")
    k = state.resolve(th.tx)
    new.memory = replace(state.memory, forest=mem.forest_add_child(state.memory.forest, th.id, child))
    parent = new._advance(th, "ForkT", child.id, term=Return(child), tx=k)
    new._set(parent)
    body = th.term.body
    new._set(_settle(Thread(child, body, tx=k, saved=Saved(None, root=False), key=new.interner((parent.key, "child")))))
    return new, TAU


def _step_isolated(state: MachineState, th: Thread):
    run = _trial(state, th, th.term.body)
    new = _apply_isolated(state, th, run)
    nxt = Return(run.outcome.value) if isinstance(run.outcome, Returned) else Throw(run.outcome.value)
    token = (type(run.outcome).__name__, _canon(run.outcome.value))
    new._set(new._advance(th, "Isolated", token, term=nxt, tx=run.tx, reads=th.reads + tuple(run.reads), writes=run.written))
    return new, TAU


def _finish_trees(new: MachineState, group: list[Thread]) -> None:
    forest = new.memory.forest
    for th in group:
        root = mem.forest_root(forest, th.id)
        forest = mem.forest_remove(forest, root)
    if forest != new.memory.forest:
        new.memory = replace(new.memory, forest=forest)


def _step_commit(state: MachineState, th: Thread):
    k = state.resolve(th.tx)
    group = state.participants(k)
    if not all(p.waiting for p in group):
        raise ProtocolError(f"commit of {k!r} with unready participants")
    new = state.copy()
    new.memory = mem.commit_apply(state.memory, k)
    _finish_trees(new, group)
    if k in state.touched:
        new._record(k, th.id, COMMIT)
    for p in group:
        v = p.term.value
        stack = p.saved.io_stack if p.is_root else None
        new._set(new._advance(p, "Commit", _canon(v), term=Return(v), stack=stack, tx=None, saved=None, reads=(), writes=frozenset()))
    return new, Co(k)


def propagate_abort(state: MachineState, k: TxId, raiser: ThreadId, exc: Value):
    """Abort ``k`` on behalf of ``raiser``: leak, clean up, rethrow at the raiser's
    root, kill the rest of that tree and restart foreign participants."""
    k = state.resolve(k)
    group = state.participants(k)
    forest = state.memory.forest
    root = mem.forest_root(forest, raiser)
    new = state.copy()
    new.memory = mem.abort_apply(state.memory, k, raiser)
    _finish_trees(new, group)
    if k in state.touched:
        new._record(k, raiser, ABORT)
    for p in group:
        same_tree = mem.forest_root(forest, p.id) == root
        if same_tree and p.id == root and p.is_root:
            new._set(new._advance(p, "Abort", _canon(exc), term=Throw(exc), stack=p.saved.io_stack, tx=None, saved=None, reads=(), writes=frozenset()))
        elif p.is_root and not same_tree:
            new._set(_restart(new, p, wake=None))
        else:
            del new.threads[p.id]
    return new, Ab(k, raiser, exc)


def _restart(new: MachineState, p: Thread, wake) -> Thread:
    return _settle(
        replace(
            p,
            term=p.saved.atomic,
            stack=p.saved.io_stack,
            tx=None,
            saved=None,
            reads=(),
            writes=frozenset(),
            wake=wake,
            key=p.saved.entry_key,
        )
    )


def _step_abort(state: MachineState, th: Thread):
    return propagate_abort(state, th.tx, th.id, th.term.value)


def _step_rollback(state: MachineState, th: Thread):
    k = state.resolve(th.tx)
    group = state.participants(k)
    forest = state.memory.forest
    observed: dict[ThreadId, dict] = {}
    for p in group:
        reads = list(p.reads)
        if isinstance(p.term, Isolated):
            reads += _trial(state, p, p.term.body).reads
        bucket = observed.setdefault(mem.forest_root(forest, p.id), {})
        for r, v in reads:
            bucket.setdefault(r, v)
    new = state.copy()
    new.memory = mem.rollback_apply(state.memory, k)
    _finish_trees(new, group)
    new.restarts_left -= 1
    if k in state.touched:
        new._record(k, th.id, ABORT)
    for p in group:
        if p.is_root:
            wake = tuple(sorted(observed.get(p.id, {}).items(), key=lambda rv: rv[0].id))
            new._set(_restart(new, p, wake=wake))
        else:
            del new.threads[p.id]
    return new, AbBar(k, th.id, RETRY_EXC)


_RULES = {
    "Eval": lambda s, t: _step_pure(s, t, "Eval"),
    "BindVal": lambda s, t: _step_pure(s, t, "BindVal"),
    "BindEx": lambda s, t: _step_pure(s, t, "BindEx"),
    "CatchVal": lambda s, t: _step_pure(s, t, "CatchVal"),
    "CatchEx": lambda s, t: _step_pure(s, t, "CatchEx"),
    "InChar": _step_inchar,
    "OutChar": _step_outchar,
    "ForkIO": _step_forkio,
    "New": _step_new,
    "ForkT": _step_forkt,
    "Isolated": _step_isolated,
    "Commit": _step_commit,
    "Abort": _step_abort,
    "Rollback": _step_rollback,
}


def attempt_commit(state: MachineState, k: TxId):
    """Commit ``k`` if every participant is ready; ``ProtocolError`` otherwise."""
    group = state.participants(k)
    if not group:
        raise ProtocolError(f"{k!r} is not live")
    return _step_commit(state, min(group, key=lambda p: p.id))


def io_char(state: MachineState, t: ThreadId):
    th = state.threads[t]
    if isinstance(th.term, GetChar):
        if not state.inputs:
            raise SchedulerContractError("input stream is empty")
        return _step_inchar(state, th)
    if isinstance(th.term, PutChar):
        return _step_outchar(state, th)
    raise SchedulerContractError(f"{t!r} is not at getChar/putChar")


def check_invariants(state: MachineState) -> None:
    """Assert the structural invariants that must hold after every step."""
    live = set(state.live_transactions())
    for r, (v, owner) in state.memory.working.items():
        assert owner in live, f"{r!r} claimed by dead transaction {owner!r}"
    for th in state.threads.values():
        if th.in_tx:
            assert state.resolve(th.tx) in live
        else:
            assert th.saved is None

"""The action algebra: IO, open (OTM) and isolated (ITM) computations.

Actions are immutable trees. ``Return``, ``Throw``, ``Pure``, ``Bind`` and
``Catch`` are polymorphic (their kind is fixed by the context that runs them
unless given explicitly); every other node has a fixed kind::

    ITM   Retry, OrElse, NewVar, ReadVar, WriteVar
    OTM   Isolated, Fork
    IO    Atomic, ForkIO, GetChar, PutChar

Kind violations that are visible at construction raise ``KindError``; the
rest are caught by the engine when a continuation produces the action.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

from .values import EVAL_ERROR, Exc, Value, VarId


class Kind(enum.Enum):
    IO = "IO"
    OTM = "OTM"
    ITM = "ITM"


class KindError(TypeError):
    pass


def join_kinds(a: Optional[Kind], b: Optional[Kind]) -> Optional[Kind]:
    if a is None:
        return b
    if b is None or a is b:
        return a
    raise KindError(f"cannot combine {a.value} and {b.value} actions")


class Action:
    kind: Optional[Kind] = None
    __slots__ = ()


@dataclass(frozen=True, eq=False)
class Return(Action):
    value: Value
    kind: Optional[Kind] = None


@dataclass(frozen=True, eq=False)
class Throw(Action):
    value: Value
    kind: Optional[Kind] = None


@dataclass(frozen=True, eq=False)
class Retry(Action):
    kind: Optional[Kind] = Kind.ITM


@dataclass(frozen=True, eq=False)
class Pure(Action):
    """A host computation applied to a value (rule Eval)."""

    fn: Callable[[Value], Value]
    arg: Value = ()
    kind: Optional[Kind] = None


@dataclass(frozen=True, eq=False)
class Bind(Action):
    first: Action
    cont: Callable[[Value], Action]
    kind: Optional[Kind] = None


@dataclass(frozen=True, eq=False)
class Catch(Action):
    body: Action
    handler: Callable[[Value], Action]
    kind: Optional[Kind] = None


@dataclass(frozen=True, eq=False)
class OrElse(Action):
    first: Action
    second: Action
    kind: Optional[Kind] = Kind.ITM


@dataclass(frozen=True, eq=False)
class NewVar(Action):
    value: Value
    kind: Optional[Kind] = Kind.ITM


@dataclass(frozen=True, eq=False)
class ReadVar(Action):
    var: VarId
    kind: Optional[Kind] = Kind.ITM


@dataclass(frozen=True, eq=False)
class WriteVar(Action):
    var: VarId
    value: Value
    kind: Optional[Kind] = Kind.ITM


@dataclass(frozen=True, eq=False)
class Isolated(Action):
    body: Action
    kind: Optional[Kind] = Kind.OTM


@dataclass(frozen=True, eq=False)
class Fork(Action):
    """``fork`` inside an open transaction (OTM) or ``forkIO`` (IO)."""

    body: Action
    kind: Optional[Kind] = Kind.OTM


@dataclass(frozen=True, eq=False)
class Atomic(Action):
    body: Action
    kind: Optional[Kind] = Kind.IO


@dataclass(frozen=True, eq=False)
class GetChar(Action):
    kind: Optional[Kind] = Kind.IO


@dataclass(frozen=True, eq=False)
class PutChar(Action):
    char: str
    kind: Optional[Kind] = Kind.IO


# -- outcomes --------------------------------------------------------------


@dataclass(frozen=True)
class Returned:
    value: Value


@dataclass(frozen=True)
class Threw:
    value: Value


@dataclass(frozen=True)
class Retried:
    pass


Outcome = Returned | Threw | Retried


# -- constructors ----------------------------------------------------------


def ret(value: Value = (), kind: Optional[Kind] = None) -> Action:
    return Return(value, kind)


def throw(value: Value, kind: Optional[Kind] = None) -> Action:
    return Throw(value, kind)


def retry() -> Action:
    return Retry()


def pure(fn: Callable[[Value], Value], arg: Value = (), kind: Optional[Kind] = None) -> Action:
    return Pure(fn, arg, kind)


def seq(first: Action, then: Callable[[Value], Action], kind: Optional[Kind] = None) -> Action:
    return Bind(first, then, join_kinds(first.kind, kind))


def then(first: Action, second: Action) -> Action:
    """``first >> second``."""
    kind = join_kinds(first.kind, second.kind)
    return Bind(first, lambda _: second, kind)


def catch(body: Action, handler: Callable[[Value], Action], kind: Optional[Kind] = None) -> Action:
    return Catch(body, handler, join_kinds(body.kind, kind))


def _require(action: Action, allowed: tuple, what: str) -> None:
    if action.kind is not None and action.kind not in allowed:
        names = "/".join(k.value for k in allowed)
        raise KindError(f"{what} expects a {names} action, got {action.kind.value}")


def or_else(first: Action, second: Action) -> Action:
    _require(first, (Kind.ITM,), "orElse")
    _require(second, (Kind.ITM,), "orElse")
    return OrElse(first, second)


def new_var(value: Value) -> Action:
    return NewVar(value)


def read_var(var: VarId) -> Action:
    return ReadVar(var)


def write_var(var: VarId, value: Value) -> Action:
    return WriteVar(var, value)


def isolated(body: Action) -> Action:
    _require(body, (Kind.ITM,), "isolated")
    return Isolated(body)


def fork(body: Action) -> Action:
    _require(body, (Kind.OTM,), "fork")
    return Fork(body, Kind.OTM)


def fork_io(body: Action) -> Action:
    _require(body, (Kind.IO,), "forkIO")
    return Fork(body, Kind.IO)


def atomic(body: Action) -> Action:
    _require(body, (Kind.OTM,), "atomic")
    return Atomic(body)


def atomically(body: Action) -> Action:
    """Closed STM transaction: ``atomic . isolated``."""
    return atomic(isolated(body))


def get_char() -> Action:
    return GetChar()


def put_char(c: str) -> Action:
    return PutChar(c)


def check(b: bool) -> Action:
    return Return((), Kind.ITM) if b else Retry()


def sequence_(actions, kind: Optional[Kind] = None) -> Action:
    """Run actions left to right, discarding results (``mapM_``)."""
    acc: Action = Return((), kind)
    for a in reversed(list(actions)):
        acc = then(a, acc)
    return acc


# -- pure term reductions ---------------------------------------------------


def eval_pure(fn: Callable[[Value], Value], arg: Value) -> Action:
    """Rule Eval: run a host computation; failures become an eval-error throw."""
    try:
        return Return(fn(arg))
    except Exception as e:  # host code is untrusted
        return Throw(Exc(EVAL_ERROR, f"{type(e).__name__}: {e}"))


def reduce_step(term: Action) -> Optional[tuple[str, Action]]:
    """One head reduction of a pure term, or ``None`` if ``term`` is stuck.

    ``Bind``/``Catch`` reduce only once their left operand is a final form
    (return, throw or retry); otherwise the caller must evaluate inside the
    evaluation context first.
    """
    if isinstance(term, Pure):
        return "Eval", eval_pure(term.fn, term.arg)
    if isinstance(term, Bind):
        first = term.first
        if isinstance(first, Return):
            return "BindVal", term.cont(first.value)
        if isinstance(first, (Throw, Retry)):
            return "BindEx", first
        return None
    if isinstance(term, Catch):
        body = term.body
        if isinstance(body, (Return, Retry)):
            return "CatchVal", body
        if isinstance(body, Throw):
            return "CatchEx", term.handler(body.value)
        return None
    return None


def evaluate(term: Action, fuel: int = 100_000):
    """Evaluate a term built only from pure nodes to an outcome.

    Uses an explicit evaluation-context stack; raises ``KindError`` on
    effectful nodes.
    """
    stack: list[Action] = []
    while fuel > 0:
        fuel -= 1
        if isinstance(term, (Bind, Catch)) and reduce_step(term) is None:
            stack.append(term)
            term = term.first if isinstance(term, Bind) else term.body
            continue
        step = reduce_step(term)
        if step is not None:
            term = step[1]
            continue
        if not isinstance(term, (Return, Throw, Retry)):
            raise KindError(f"{type(term).__name__} is not a pure term")
        if not stack:
            if isinstance(term, Return):
                return Returned(term.value)
            if isinstance(term, Throw):
                return Threw(term.value)
            return Retried()
        ctx = stack.pop()
        if isinstance(ctx, Bind):
            term = Bind(term, ctx.cont)
        else:
            term = Catch(term, ctx.handler)
    raise RuntimeError("evaluation fuel exhausted")

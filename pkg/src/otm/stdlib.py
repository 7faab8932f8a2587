"""Abstractions built only from the public action API.

Semaphores, accounts and crowdfunding campaigns, barriers, futures, MVars and
Petri nets. Every function returns an action; nothing here touches the engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .action import (
    Action,
    Kind,
    atomic,
    check,
    fork,
    fork_io,
    isolated,
    new_var,
    or_else,
    read_var,
    ret,
    retry,
    seq,
    sequence_,
    then,
    throw,
    write_var,
)
from .values import Value, VarId

Semaphore = VarId
Account = VarId
Barrier = VarId
Future = VarId
MVar = VarId
Place = Semaphore


def modify_var(var: VarId, f: Callable[[Value], Value]) -> Action:
    return seq(read_var(var), lambda x: write_var(var, f(x)))


def assert_var(var: VarId, p: Callable[[Value], bool]) -> Action:
    return seq(read_var(var), lambda x: check(p(x)))


# -- semaphores ----------------------------------------------------------------


def new_semaphore(n: int = 0) -> Action:
    return new_var(n)


def up(s: Semaphore) -> Action:
    return modify_var(s, lambda n: n + 1)


def down(s: Semaphore) -> Action:
    return then(assert_var(s, lambda n: n > 0), modify_var(s, lambda n: n - 1))


def down_any(sems: Sequence[Semaphore]) -> Action:
    """Decrement the first semaphore that can be decremented; retry if none can."""
    if not sems:
        return retry()
    return or_else(down(sems[0]), down_any(sems[1:]))


# -- accounts and crowdfunding ------------------------------------------------------


def deposit(a: Account, n: int) -> Action:
    return modify_var(a, lambda x: x + n)


def withdraw(a: Account, n: int) -> Action:
    """Blocks until the account holds at least ``n``."""
    return then(assert_var(a, lambda x: x >= n), modify_var(a, lambda x: x - n))


def transfer(a1: Account, a2: Account, n: int) -> Action:
    return then(withdraw(a1, n), deposit(a2, n))


@dataclass(frozen=True)
class Campaign:
    account: Account
    target: int

    def __post_init__(self):
        if self.target <= 0:
            raise ValueError("campaign target must be positive")

    def as_value(self) -> Value:
        return (self.account, self.target)

    @classmethod
    def from_value(cls, v: Value) -> "Campaign":
        return cls(v[0], v[1])


def new_campaign(target: int) -> Action:
    """ITM action returning the campaign as an ``(account, target)`` pair."""
    return seq(new_var(0), lambda a: ret((a, target), Kind.ITM))


def back_campaign(a: Account, c: Campaign, k: int) -> Action:
    return transfer(a, c.account, k)


def campaign_commit(fundraiser: Account, c: Campaign) -> Action:
    """Retry until the target is met, then move the whole balance to the fundraiser."""
    return seq(
        read_var(c.account),
        lambda x: then(check(x >= c.target), transfer(c.account, fundraiser, x)),
    )


def await_campaign_closed(c: Campaign) -> Action:
    return assert_var(c.account, lambda x: x == 0)


# -- barriers ------------------------------------------------------------------


def _nobody_running(rw) -> bool:
    return rw[0] == 0


def _nobody_waiting(rw) -> bool:
    return rw[1] == 0


def new_barrier() -> Action:
    return new_var((0, 0))


def barrier_join(b: Barrier) -> Action:
    return then(assert_var(b, _nobody_waiting), modify_var(b, lambda rw: (rw[0] + 1, rw[1])))


def barrier_await(b: Barrier) -> Action:
    # two isolated blocks: one block would keep the others from reaching the barrier
    arrive = isolated(modify_var(b, lambda rw: (rw[0] - 1, rw[1] + 1)))
    cross = isolated(then(assert_var(b, _nobody_running), modify_var(b, lambda rw: (rw[0], rw[1] - 1))))
    return then(arrive, cross)


# -- futures -----------------------------------------------------------------------


def future_get(f: Future) -> Action:
    return seq(read_var(f), lambda v: retry() if v is None else ret(v, Kind.ITM))


def future_spawn(job: Action) -> Action:
    """Allocate a future and fork ``job`` into the current transaction to fill it."""

    def worker(future: Future) -> Action:
        return seq(job, lambda result: isolated(write_var(future, result)))

    return seq(
        isolated(new_var(None)),
        lambda future: then(fork(worker(future)), ret(future, Kind.OTM)),
    )


# -- MVars ---------------------------------------------------------------------------


def new_mvar(value: Value = None) -> Action:
    return new_var(value)


def take_mvar(m: MVar) -> Action:
    return seq(read_var(m), lambda v: retry() if v is None else then(write_var(m, None), ret(v, Kind.ITM)))


def put_mvar(m: MVar, value: Value) -> Action:
    return seq(read_var(m), lambda v: write_var(m, value) if v is None else retry())


# -- Petri nets --------------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    inputs: tuple
    outputs: tuple


@dataclass(frozen=True)
class PetriNet:
    places: tuple  # Place handles
    transitions: tuple  # Transition over place indices


def new_place(tokens: int) -> Action:
    return new_semaphore(tokens)


def petri_fire(inputs: Sequence[Place], outputs: Sequence[Place]) -> Action:
    """One atomic, non-isolated firing: take every input token, then emit outputs."""
    return then(
        sequence_([isolated(down(p)) for p in inputs], Kind.OTM),
        sequence_([isolated(up(p)) for p in outputs], Kind.OTM),
    )


def repeat_io(body: Action, rounds: int | None) -> Action:
    """Run an IO action ``rounds`` times, or forever when ``rounds`` is None."""
    if rounds is None:
        return then(body, _Forever(body))
    if rounds <= 0:
        return ret((), Kind.IO)
    return then(body, _Rounds(body, rounds - 1))


def _Forever(body: Action) -> Action:
    return seq(ret((), Kind.IO), lambda _: repeat_io(body, None))


def _Rounds(body: Action, rounds: int) -> Action:
    return seq(ret((), Kind.IO), lambda _: repeat_io(body, rounds))


def petri_transition(inputs: Sequence[Place], outputs: Sequence[Place], rounds: int | None = None) -> Action:
    """Fork a thread that keeps firing the transition (``rounds`` times, or forever)."""
    return fork_io(repeat_io(atomic(petri_fire(inputs, outputs)), rounds))


def counter_sum(heap: dict, places: Sequence[Place]) -> int:
    return sum(heap[p] for p in places)


__all__ = [name for name in dir() if not name.startswith("_")]

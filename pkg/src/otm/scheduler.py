"""Scheduling policies: reproducible single runs and bounded exhaustive exploration."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Union

from .action import Action
from .engine import Co, MachineState, enabled, initial_state, step, DONE, DIED
from .history import Event

FINISHED = "finished"
BLOCKED = "quiescent-blocked"
EXHAUSTED = "step-budget-exhausted"


@dataclass(frozen=True)
class RoundRobin:
    pass


@dataclass(frozen=True)
class SeededRandom:
    seed: int

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class Exhaustive:
    max_steps: int = 200
    max_restarts: int = 8

    def __post_init__(self):
        if self.max_steps <= 0 or self.max_restarts <= 0:
            raise ValueError("exploration bounds must be positive")


Policy = Union[RoundRobin, SeededRandom, Exhaustive]


@dataclass
class RunResult:
    state: MachineState
    verdict: str
    labels: list = field(default_factory=list)

    @property
    def history(self) -> list[Event]:
        return self.state.events()

    @property
    def steps(self) -> int:
        return len(self.labels)

    def thread_results(self) -> dict:
        return {t: (th.status, th.result) for t, th in self.state.threads.items()}

    def main_result(self):
        th = min(self.state.threads.values(), key=lambda th: th.id)
        return th.status, th.result

    def commit_labels(self) -> list[Co]:
        return [lb for lb in self.labels if isinstance(lb, Co)]


def _verdict(state: MachineState, choices: list) -> Optional[str]:
    if choices:
        return None
    if all(th.status in (DONE, DIED) for th in state.threads.values()):
        return FINISHED
    return EXHAUSTED if state.suppressed_rollback else BLOCKED


def _rr_pick(choices: list, last: Optional[int]):
    if last is not None:
        for c in choices:
            if c[0].id > last:
                return c
    return choices[0]


def run(
    program: Action,
    policy: Policy = RoundRobin(),
    inputs: str = "",
    max_steps: int = 10_000,
    max_restarts: int = 1_000,
) -> RunResult:
    """Run ``program`` once, choosing among enabled rules according to ``policy``."""
    if max_steps <= 0 or max_restarts <= 0:
        raise ValueError("bounds must be positive")
    if isinstance(policy, Exhaustive):
        raise ValueError("use explore() for exhaustive exploration")
    state = initial_state(program, inputs, max_restarts)
    rng = random.Random(policy.seed) if isinstance(policy, SeededRandom) else None
    labels: list = []
    last: Optional[int] = None
    while True:
        choices = enabled(state)
        verdict = _verdict(state, choices)
        if verdict is not None:
            return RunResult(state, verdict, labels)
        if len(labels) >= max_steps:
            return RunResult(state, EXHAUSTED, labels)
        if rng is not None:
            choice = choices[rng.randrange(len(choices))]
        else:
            choice = _rr_pick(choices, last)
            last = choice[0].id
        state, label = step(state, choice)
        labels.append(label)


@dataclass
class Exploration:
    results: list[RunResult]
    partial: bool = False
    states_visited: int = 0

    def verdicts(self) -> set[str]:
        return {r.verdict for r in self.results}

    def complete(self) -> list[RunResult]:
        return [r for r in self.results if r.verdict == FINISHED]


def explore(
    program: Action,
    max_steps: int = 200,
    max_restarts: int = 8,
    inputs: str = "",
    max_states: int = 500_000,
) -> Exploration:
    """Depth-first enumeration of every scheduling choice within bounds.

    States are memoised on ``MachineState.key()``; a state is revisited only
    when reached with more step budget left. One representative run is kept
    per distinct terminal state.
    """
    Exhaustive(max_steps, max_restarts)  # validates bounds
    root = initial_state(program, inputs, max_restarts)
    best_depth: dict = {}
    terminals: dict = {}
    partial = False
    stack: list = [(root, 0, None)]
    visited = 0
    while stack:
        state, depth, labels = stack.pop()
        key = state.key()
        seen = best_depth.get(key)
        if seen is not None and seen <= depth:
            continue
        best_depth[key] = depth
        visited += 1
        if visited > max_states:
            partial = True
            break
        choices = enabled(state)
        verdict = _verdict(state, choices)
        if verdict is None and depth >= max_steps:
            verdict = EXHAUSTED
        if verdict is not None:
            tkey = (verdict, state.terminal_key())
            if tkey not in terminals:
                terminals[tkey] = RunResult(state, verdict, _unroll(labels))
            continue
        for choice in reversed(choices):
            nxt, label = step(state, choice)
            stack.append((nxt, depth + 1, (label, labels)))
    return Exploration(list(terminals.values()), partial, visited)


def _unroll(cons) -> list:
    out = []
    while cons is not None:
        out.append(cons[0])
        cons = cons[1]
    out.reverse()
    return out

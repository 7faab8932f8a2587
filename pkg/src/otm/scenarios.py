"""Named example programs used by the CLI, the tests and the acceptance suite.

Every scenario's main thread returns a ``VList`` of the locations worth
reporting, so a terminal state can be summarised without knowing how the
program was built.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import stdlib as lib
from .action import (
    Action,
    Kind,
    atomic,
    atomically,
    catch,
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
from .values import Exc, VList


def _alloc_all(actions: list[Action], k: Callable[[list], Action], acc: Optional[list] = None) -> Action:
    """Run each IO action in turn and pass the list of results to ``k``."""
    acc = [] if acc is None else acc
    if not actions:
        return k(acc)
    return seq(actions[0], lambda v: _alloc_all(actions[1:], k, acc + [v]))


def _fork_all(bodies: list[Action]) -> Action:
    return sequence_([fork_io(b) for b in bodies], Kind.IO)


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    build: Callable[[dict], Action]
    defaults: dict = field(default_factory=dict)
    labels: Callable[[dict], list] = lambda p: []
    blocking: Callable[[dict], bool] = lambda p: False
    endless: Callable[[dict], bool] = lambda p: False  # only the step budget can stop it

    def params(self, overrides: Optional[dict] = None) -> dict:
        p = dict(self.defaults)
        for k, v in (overrides or {}).items():
            if k not in self.defaults:
                raise KeyError(f"scenario {self.name!r} has no parameter {k!r}")
            p[k] = v
        return p

    def program(self, overrides: Optional[dict] = None) -> Action:
        return self.build(self.params(overrides))

    def expects_blocking(self, overrides: Optional[dict] = None) -> bool:
        return self.blocking(self.params(overrides))

    def is_endless(self, overrides: Optional[dict] = None) -> bool:
        return self.endless(self.params(overrides))

    def observe(self, result, overrides: Optional[dict] = None) -> dict:
        """Label the main thread's reported locations with their final values."""
        status, handles = result.main_result()
        if status != "done" or not isinstance(handles, VList):
            return {}
        names = self.labels(self.params(overrides))
        heap = result.state.memory.heap
        return {name: heap.get(r) for name, r in zip(names, handles.items)}


# -- semaphores ----------------------------------------------------------------


def _semaphores(p: dict) -> Action:
    def body(s):
        s0, s1 = s
        taker = atomically(lib.down_any([s0, s1]))
        giver = atomically(lib.up(s0))
        return then(_fork_all([taker, giver]), ret(VList((s0, s1)), Kind.IO))

    return _alloc_all([atomically(lib.new_semaphore(0)), atomically(lib.new_semaphore(p["tokens"]))], body)


# -- master / worker --------------------------------------------------------------


def _master(b, c1, c2, request: int) -> Action:
    return then(
        isolated(write_var(b, request)),
        then(isolated(lib.up(c1)), then(isolated(lib.down(c2)), isolated(read_var(b)))),
    )


def _worker(b, c1, c2) -> Action:
    return then(
        isolated(lib.down(c1)),
        seq(isolated(read_var(b)), lambda x: then(isolated(write_var(b, 2 * x)), isolated(lib.up(c2)))),
    )


def _masterworker(p: dict, open_: bool = True) -> Action:
    def body(vs):
        b, c1, c2 = vs
        if open_:
            worker, master = atomic(_worker(b, c1, c2)), atomic(_master(b, c1, c2, p["request"]))
        else:
            worker = atomically(
                then(lib.down(c1), seq(read_var(b), lambda x: then(write_var(b, 2 * x), lib.up(c2))))
            )
            master = atomically(
                then(write_var(b, p["request"]), then(lib.up(c1), then(lib.down(c2), read_var(b))))
            )
        return then(fork_io(worker), seq(master, lambda answer: ret(VList((b, c1, c2)), Kind.IO)))

    return _alloc_all([atomically(new_var(0)), atomically(lib.new_semaphore(0)), atomically(lib.new_semaphore(0))], body)


# -- crowdfunding -----------------------------------------------------------------


def _crowdfunding(p: dict) -> Action:
    n = p["backers"]

    def body(vs):
        fundraiser, camp_acct, *backers = vs
        c = lib.Campaign(camp_acct, p["target"])
        threads = [
            atomic(then(isolated(lib.back_campaign(a, c, p["give"])), isolated(lib.await_campaign_closed(c))))
            for a in backers
        ]
        threads.append(atomically(lib.campaign_commit(fundraiser, c)))
        return then(_fork_all(threads), ret(VList(tuple(vs)), Kind.IO))

    allocs = [atomically(new_var(0)), atomically(new_var(0))]
    allocs += [atomically(new_var(p["balance"])) for _ in range(n)]
    return _alloc_all(allocs, body)


def _crowdfunding_blocks(p: dict) -> bool:
    return p["balance"] < p["give"] or p["backers"] * p["give"] < p["target"]


# -- barrier ---------------------------------------------------------------------


def _barrier(p: dict) -> Action:
    n = p["threads"]

    def body(vs):
        b, *done = vs
        threads = [atomic(then(lib.barrier_await(b), isolated(write_var(d, 1)))) for d in done]
        return then(_fork_all(threads), ret(VList(tuple(vs)), Kind.IO))

    setup = atomically(seq(lib.new_barrier(), lambda b: then(sequence_([lib.barrier_join(b)] * n, Kind.ITM), ret(b, Kind.ITM))))
    return _alloc_all([setup] + [atomically(new_var(0)) for _ in range(n)], body)


# -- futures ---------------------------------------------------------------------


def _futures(p: dict, fail: bool = False) -> Action:
    job = throw(Exc("job-failed", p["value"]), Kind.OTM) if fail else ret(p["value"], Kind.OTM)

    def body(out):
        txn = atomic(seq(lib.future_spawn(job), lambda f: seq(isolated(lib.future_get(f)), lambda v: isolated(write_var(out, v)))))
        return catch(then(txn, ret(VList((out,)), Kind.IO)), lambda e: ret(VList((out,)), Kind.IO))

    return seq(atomically(new_var(0)), body)


# -- Petri nets --------------------------------------------------------------------


def _petri_simple(p: dict) -> Action:
    rounds = p["rounds"] or None

    def body(ps):
        p1, p2, p3, p4 = ps
        return then(
            then(lib.petri_transition([p1], [p3, p4], rounds), lib.petri_transition([p1, p2], [p4], rounds)),
            ret(VList(tuple(ps)), Kind.IO),
        )

    return _alloc_all([atomically(lib.new_place(n)) for n in (1, 0, 0, 0)], body)


def _philosophers(p: dict) -> Action:
    n = p["n"]
    rounds = p["rounds"] or None

    def body(vs):
        forks, meals = vs[:n], vs[n:]
        transitions = [
            lib.petri_transition([forks[i], forks[(i + 1) % n]], [forks[i], forks[(i + 1) % n], meals[i]], rounds)
            for i in range(n)
        ]
        return then(sequence_(transitions, Kind.IO), ret(VList(tuple(vs)), Kind.IO))

    return _alloc_all([atomically(lib.new_place(1)) for _ in range(n)] + [atomically(lib.new_place(0)) for _ in range(n)], body)


SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in [
        Scenario(
            "semaphores",
            "one thread takes from either of two semaphores while another refills the first",
            _semaphores,
            {"tokens": 1},
            lambda p: ["s0", "s1"],
        ),
        Scenario(
            "masterworker",
            "master and worker exchange a request through semaphores inside open transactions",
            _masterworker,
            {"request": 21},
            lambda p: ["buffer", "c1", "c2"],
        ),
        Scenario(
            "masterworker-isolated",
            "the same exchange with fully isolated blocks, which can never complete",
            lambda p: _masterworker(p, open_=False),
            {"request": 21},
            lambda p: ["buffer", "c1", "c2"],
            lambda p: True,
        ),
        Scenario(
            "crowdfunding",
            "backers fund a campaign that a fundraiser closes once the target is met",
            _crowdfunding,
            {"backers": 2, "target": 60, "give": 30, "balance": 30},
            lambda p: ["fundraiser", "campaign"] + [f"backer{i}" for i in range(p["backers"])],
            _crowdfunding_blocks,
        ),
        Scenario(
            "barrier",
            "joined threads meet at a barrier before recording that they crossed",
            _barrier,
            {"threads": 3},
            lambda p: ["barrier"] + [f"crossed{i}" for i in range(p["threads"])],
        ),
        Scenario(
            "futures",
            "a transaction spawns a job and waits for its future",
            _futures,
            {"value": 42},
            lambda p: ["out"],
        ),
        Scenario(
            "futures-throw",
            "the spawned job throws, so the whole transaction aborts",
            lambda p: _futures(p, fail=True),
            {"value": 42},
            lambda p: ["out"],
        ),
        Scenario(
            "petri-simple",
            "two transitions compete for the single token of p1; only t1 can fire",
            _petri_simple,
            {"rounds": 1},
            lambda p: ["p1", "p2", "p3", "p4"],
            lambda p: True,
            lambda p: not p["rounds"],
        ),
        Scenario(
            "philosophers",
            "dining philosophers as a ring of Petri transitions, each counting its meals",
            _philosophers,
            {"n": 3, "rounds": 0},
            lambda p: [f"fork{i}" for i in range(p["n"])] + [f"meals{i}" for i in range(p["n"])],
            lambda p: False,
            lambda p: not p["rounds"],
        ),
    ]
}


def get(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(sorted(SCENARIOS))}") from None


# -- random programs ----------------------------------------------------------------


def _random_itm(rng: random.Random, vs: list, depth: int = 0) -> Action:
    ops = []
    for _ in range(rng.randint(1, 3)):
        r = rng.choice(vs)
        roll = rng.random()
        if roll < 0.3:
            ops.append(read_var(r))
        elif roll < 0.55:
            ops.append(write_var(r, rng.randint(0, 3)))
        elif roll < 0.75:
            ops.append(lib.modify_var(r, lambda x: x + 1))
        elif roll < 0.85:
            bound = rng.randint(1, 4)
            ops.append(lib.assert_var(r, lambda x, bound=bound: x < bound))
        elif roll < 0.92 and depth == 0:
            ops.append(or_else(_random_itm(rng, vs, depth + 1), _random_itm(rng, vs, depth + 1)))
        elif roll < 0.96:
            ops.append(seq(new_var(rng.randint(0, 3)), lambda nr, r=r: seq(read_var(nr), lambda x, r=r: write_var(r, x))))
        else:
            ops.append(throw(Exc("boom", rng.randint(0, 3)), Kind.ITM))
    return sequence_(ops, Kind.ITM)


def _random_otm(rng: random.Random, vs: list, allow_fork: bool = True) -> Action:
    parts = []
    for _ in range(rng.randint(1, 3)):
        if allow_fork and rng.random() < 0.15:
            parts.append(fork(_random_otm(rng, vs, allow_fork=False)))
        else:
            parts.append(isolated(_random_itm(rng, vs)))
    return sequence_(parts, Kind.OTM)


def _random_thread(rng: random.Random, vs: list) -> Action:
    blocks = []
    for _ in range(rng.randint(1, 2)):
        body = _random_otm(rng, vs)
        blk = atomic(body) if rng.random() < 0.8 else atomically(_random_itm(rng, vs))
        blocks.append(catch(blk, lambda e: ret((), Kind.IO)))
    return sequence_(blocks, Kind.IO)


def random_program(rng: random.Random, max_threads: int = 3, max_vars: int = 3) -> Action:
    """A small random program: a few shared integers and 1..max_threads threads
    running one or two transactions each. Thread exceptions are caught."""
    n_vars = rng.randint(1, max_vars)
    n_threads = rng.randint(1, max_threads)
    inits = [rng.randint(0, 2) for _ in range(n_vars)]
    # thread bodies are drawn from a private generator when the locations
    # exist, so replaying the continuation rebuilds the same threads
    seed = rng.getrandbits(64)

    def body(vs):
        local = random.Random(seed)
        threads = [_random_thread(local, vs) for _ in range(n_threads)]
        return then(_fork_all(threads), ret(VList(tuple(vs)), Kind.IO))

    return _alloc_all([atomically(new_var(v)) for v in inits], body)

import random

import pytest

from otm.memory import (
    ForestError,
    InvalidLocation,
    MemoryState,
    abort_apply,
    alloc_var,
    claim_read,
    claim_write,
    commit_apply,
    forest_add_child,
    forest_remove,
    forest_root,
    rename_tx,
)
from otm.values import IdSupply, ThreadId, TxId, VarId

r, s = VarId(0), VarId(1)
j, k = TxId(0), TxId(1)
t0, t1, t2 = ThreadId(0), ThreadId(1), ThreadId(2)
MISSING = object()


# -- point-wise oracle for the auxiliary functions --------------------------------


def _pointwise(state, f):
    dom = set(state.heap) | set(state.working)
    out = {x: f(x) for x in dom}
    return {x: v for x, v in out.items() if v is not MISSING}


def commit_fn(state, tx):
    def at(x):
        entry = state.working.get(x)
        if entry is not None and entry[1] == tx:
            return entry[0]
        return state.heap.get(x, MISSING)

    return _pointwise(state, at)


def cleanup_fn(state, tx):
    def at(x):
        entry = state.working.get(x, MISSING)
        if entry is not MISSING and entry[1] == tx:
            return MISSING
        return entry

    return _pointwise(state, at)


def leak_fn(state, tx):
    def at(x):
        entry = state.working.get(x)
        if entry is not None and entry[1] == tx and x not in state.heap:
            return entry[0]
        return state.heap.get(x, MISSING)

    return _pointwise(state, at)


def random_state(rng):
    txs = [TxId(i) for i in range(rng.randint(1, 3))]
    heap, working = {}, {}
    for i in range(rng.randint(0, 6)):
        x = VarId(i)
        where = rng.random()
        if where < 0.4:
            heap[x] = rng.randint(0, 9)
        elif where < 0.8:
            heap[x] = rng.randint(0, 9)
            working[x] = (rng.randint(0, 9), rng.choice(txs))
        else:
            working[x] = (rng.randint(0, 9), rng.choice(txs))
    return MemoryState(heap, working, {}), txs


def test_commit_and_abort_match_pointwise_oracle():
    rng = random.Random(7)
    for _ in range(1_500):
        state, txs = random_state(rng)
        tx = rng.choice(txs)
        before = state.copy()
        committed = commit_apply(state, tx)
        assert committed.heap == commit_fn(state, tx)
        assert committed.working == cleanup_fn(state, tx)
        aborted = abort_apply(state, tx, t0)
        assert aborted.heap == leak_fn(state, tx)
        assert aborted.working == cleanup_fn(state, tx)
        assert state == before


def test_commit_and_abort_of_disjoint_transactions_commute():
    rng = random.Random(11)
    for _ in range(1_000):
        state, _ = random_state(rng)
        a, b = TxId(0), TxId(1)
        one = abort_apply(commit_apply(state, a), b, t0)
        two = commit_apply(abort_apply(state, b, t0), a)
        assert (one.heap, one.working) == (two.heap, two.working)


def test_single_claimant_survives_random_operations():
    rng = random.Random(3)
    for _ in range(300):
        state, txs = random_state(rng)
        for _ in range(10):
            x = VarId(rng.randrange(6))
            if x not in state.heap and x not in state.working:
                continue
            tx = rng.choice(txs)
            if rng.random() < 0.5:
                state, _, merged = claim_read(state, x, tx)
            else:
                state, merged = claim_write(state, x, 1, tx)
            if merged is not None:
                assert tx not in {o for _, o in state.working.values()}
            assert state.owner(x) in txs


# -- examples ------------------------------------------------------------------------


def test_alloc_in_empty_state():
    state, x = alloc_var(MemoryState(), 0, k, IdSupply())
    assert state.working == {x: (0, k)} and state.heap == {}


def test_two_allocs_are_distinct():
    supply = IdSupply()
    state, a = alloc_var(MemoryState(), 0, k, supply)
    state, b = alloc_var(state, 0, k, supply)
    assert a != b and state.owner(a) == state.owner(b) == k


def test_alloc_then_commit_publishes():
    state, x = alloc_var(MemoryState(), 0, k, IdSupply())
    after = commit_apply(state, k)
    assert after.heap == commit_fn(state, k) == {x: 0}
    assert after.working == {}


def test_alloc_skips_ids_already_in_use():
    state = MemoryState(heap={VarId(0): 1})
    _, x = alloc_var(state, 0, k, IdSupply())
    assert x == VarId(1)


def test_read_claims_unclaimed_var():
    state, v, merged = claim_read(MemoryState(heap={r: 5}), r, k)
    assert (v, merged, state.working) == (5, None, {r: (5, k)})


def test_read_of_foreign_claim_merges():
    state = MemoryState(heap={s: 0}, working={r: (7, j), s: (1, k)})
    after, v, merged = claim_read(state, r, k)
    assert (v, merged) == (7, j)
    assert after.working == {r: (7, j), s: (1, j)}


def test_read_of_own_claim_changes_nothing():
    state = MemoryState(working={r: (7, k)})
    after, v, merged = claim_read(state, r, k)
    assert (after, v, merged) == (state, 7, None)


def test_write_claims_and_merges():
    after, merged = claim_write(MemoryState(heap={r: 5}), r, 9, k)
    assert (after.working, merged) == ({r: (9, k)}, None)
    after, merged = claim_write(MemoryState(heap={r: 5}, working={r: (5, j)}), r, 9, k)
    assert (after.working, merged) == ({r: (9, j)}, j)


def test_read_your_writes():
    state, _ = claim_write(MemoryState(heap={r: 5}), r, 9, k)
    assert claim_read(state, r, k)[1] == 9


def test_unknown_location_is_an_error():
    with pytest.raises(InvalidLocation):
        claim_read(MemoryState(), r, k)
    with pytest.raises(InvalidLocation):
        claim_write(MemoryState(), r, 1, k)


def test_commit_example():
    state = MemoryState(heap={r: 1}, working={r: (2, k), s: (3, j)})
    after = commit_apply(state, k)
    assert (after.heap, after.working) == ({r: 2}, {s: (3, j)})


def test_commit_without_claims_is_identity():
    state = MemoryState(heap={r: 1}, working={s: (3, j)})
    assert commit_apply(state, k) == state


def test_abort_restores_claimed_heap_value():
    after = abort_apply(MemoryState(heap={r: 1}, working={r: (2, k)}), k, t0)
    assert (after.heap, after.working) == ({r: 1}, {})


def test_abort_leaks_vars_created_inside():
    after = abort_apply(MemoryState(working={r: (9, k)}), k, t0)
    assert after.heap == {r: 9}


def test_abort_removes_the_raisers_tree():
    forest = forest_add_child(forest_add_child({}, t0, t1), t1, t2)
    after = abort_apply(MemoryState(forest=forest), k, t2)
    assert after.forest == {}


def test_merge_is_directional_and_idempotent():
    working = {r: (1, k), s: (2, j)}
    once = rename_tx(working, k, j)
    assert k not in {o for _, o in once.values()}
    assert rename_tx(once, k, j) == once


# -- fork forest ---------------------------------------------------------------------


def test_forest_roots():
    forest = forest_add_child({}, t0, t1)
    assert forest_root(forest, t1) == t0
    forest = forest_add_child(forest, t1, t2)
    assert forest_root(forest, t2) == t0
    assert forest_root(forest, ThreadId(9)) == ThreadId(9)


def test_forest_remove_matches_tree_walk():
    rng = random.Random(5)
    for _ in range(200):
        forest, threads = {}, [ThreadId(0)]
        for i in range(1, rng.randint(1, 8)):
            child = ThreadId(i)
            forest = forest_add_child(forest, rng.choice(threads), child)
            threads.append(child)
        victim = rng.choice(threads)
        root = forest_root(forest, victim)
        # walk parent links upward from every thread
        doomed = set()
        for t in threads:
            u = t
            while u in forest:
                u = forest[u]
            if u == root:
                doomed.add(t)
        assert set(forest_remove(forest, root)) == set(forest) - doomed


def test_duplicate_child_is_rejected():
    forest = forest_add_child({}, t0, t1)
    with pytest.raises(ForestError):
        forest_add_child(forest, t0, t1)

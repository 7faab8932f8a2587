import pytest
from hypothesis import given, strategies as st

from otm.action import (
    Kind,
    KindError,
    Retried,
    Returned,
    Threw,
    atomic,
    atomically,
    catch,
    check,
    eval_pure,
    evaluate,
    fork,
    fork_io,
    isolated,
    new_var,
    or_else,
    pure,
    put_char,
    read_var,
    reduce_step,
    ret,
    retry,
    seq,
    then,
    throw,
    write_var,
)
from otm.values import EVAL_ERROR, Exc, VarId


def test_bind_feeds_the_value_forward():
    assert evaluate(seq(ret(2), lambda x: ret(x * 3))) == Returned(6)


def test_throw_skips_the_continuation():
    seen = []
    assert evaluate(seq(throw("e"), lambda x: seen.append(x) or ret(1))) == Threw("e")
    assert seen == []


def test_catch_runs_handler_on_throw():
    assert evaluate(catch(throw(5), lambda e: ret(e + 1))) == Returned(6)


def test_catch_passes_values_and_retry_through():
    assert evaluate(catch(ret(1), lambda e: ret(99))) == Returned(1)
    assert evaluate(catch(retry(), lambda e: ret(99))) == Retried()


def test_retry_propagates_through_bind():
    assert evaluate(then(retry(), ret(1))) == Retried()


def test_check_is_return_or_retry():
    assert evaluate(check(True)) == Returned(())
    assert evaluate(check(False)) == Retried()


def test_eval_pure_reifies_host_failures():
    out = eval_pure(lambda x: 1 // x, 0)
    assert evaluate(out) == Threw(Exc(EVAL_ERROR, "ZeroDivisionError: integer division or modulo by zero"))
    assert evaluate(pure(lambda x: x + 1, 41)) == Returned(42)


@pytest.mark.parametrize(
    "term, rule",
    [
        (pure(abs, -1), "Eval"),
        (seq(ret(1), ret), "BindVal"),
        (seq(throw(1), ret), "BindEx"),
        (seq(retry(), ret), "BindEx"),
        (catch(ret(1), ret), "CatchVal"),
        (catch(retry(), ret), "CatchVal"),
        (catch(throw(1), ret), "CatchEx"),
    ],
)
def test_reduction_rule_table(term, rule):
    assert reduce_step(term)[0] == rule


def test_stuck_terms_do_not_reduce():
    assert reduce_step(ret(1)) is None
    assert reduce_step(seq(seq(ret(1), ret), ret)) is None


def test_effectful_nodes_are_not_pure():
    with pytest.raises(KindError):
        evaluate(read_var(VarId(0)))


def test_deeply_nested_binds_do_not_exhaust_the_stack():
    term = ret(0)
    for _ in range(5_000):
        term = seq(term, lambda x: ret(x + 1))
    assert evaluate(term) == Returned(5_000)


# -- monad laws, checked on outcomes --------------------------------------------

terms = st.one_of(
    st.integers(-5, 5).map(ret),
    st.integers(-5, 5).map(throw),
    st.just(None).map(lambda _: retry()),
)
funcs = st.sampled_from(
    [lambda x: ret(x + 1), lambda x: throw(x), lambda x: retry(), lambda x: ret(x * x)]
)


@given(st.integers(-5, 5), funcs)
def test_left_identity(x, f):
    assert evaluate(seq(ret(x), f)) == evaluate(f(x))


@given(terms)
def test_right_identity(m):
    assert evaluate(seq(m, ret)) == evaluate(m)


@given(terms, funcs, funcs)
def test_associativity(m, f, g):
    assert evaluate(seq(seq(m, f), g)) == evaluate(seq(m, lambda x: seq(f(x), g)))


# -- kinds ------------------------------------------------------------------


def test_kinds_of_constructors():
    assert new_var(0).kind is Kind.ITM
    assert isolated(new_var(0)).kind is Kind.OTM
    assert atomically(new_var(0)).kind is Kind.IO
    assert put_char("a").kind is Kind.IO


def test_fork_under_isolated_is_rejected():
    with pytest.raises(KindError):
        isolated(fork(isolated(new_var(0))))


def test_io_inside_atomic_is_rejected():
    with pytest.raises(KindError):
        atomic(put_char("x"))


def test_mixing_kinds_in_sequence_is_rejected():
    with pytest.raises(KindError):
        then(new_var(0), put_char("x"))


def test_or_else_needs_isolated_level_operands():
    with pytest.raises(KindError):
        or_else(isolated(new_var(0)), retry())


def test_fork_io_takes_io_bodies():
    assert fork_io(put_char("a")).kind is Kind.IO
    with pytest.raises(KindError):
        fork_io(new_var(0))


def test_neutral_return_adopts_surrounding_kind():
    assert then(ret(1), write_var(VarId(0), 1)).kind is Kind.ITM

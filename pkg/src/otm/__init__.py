"""Open transactional memory: an executable model of atomic, non-isolated
transactions that merge on shared access, with a scheduler, an exhaustive
explorer and an opacity checker for the histories they produce."""

from .action import (
    Kind,
    atomic,
    atomically,
    catch,
    check,
    fork,
    fork_io,
    get_char,
    isolated,
    new_var,
    or_else,
    put_char,
    read_var,
    ret,
    retry,
    seq,
    sequence_,
    then,
    throw,
    write_var,
)
from .opacity import opaque
from .scheduler import Exhaustive, RoundRobin, SeededRandom, explore, run
from .values import Exc, ThreadId, TxId, VarId, VList

__version__ = "0.1.0"

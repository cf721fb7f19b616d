"""Multi-party engine: transports, parties and the local runner."""

from starcert.mpc.engine import (
    AdditiveShare,
    BeaverTriple,
    DegenerateStatistic,
    Party,
    add_shares,
    const_add,
    const_mult,
    sub_shares,
    sum_shares,
)
from starcert.mpc.runner import run_local
from starcert.mpc.transport import LocalBus, ProtocolAbort, TcpTransport

__all__ = [
    "AdditiveShare",
    "BeaverTriple",
    "DegenerateStatistic",
    "LocalBus",
    "Party",
    "ProtocolAbort",
    "TcpTransport",
    "add_shares",
    "const_add",
    "const_mult",
    "run_local",
    "sub_shares",
    "sum_shares",
]

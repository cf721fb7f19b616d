from __future__ import annotations

import random
import socket
import threading
from fractions import Fraction

import pytest

from starcert import paillier
from starcert.fixedpoint import BudgetOverflow, MagnitudeBudget, from_ring
from starcert.mpc import (
    DegenerateStatistic,
    LocalBus,
    Party,
    ProtocolAbort,
    TcpTransport,
    run_local,
)
from starcert.mpc.runner import party_rng
from starcert.mpc.transport import Message, Tag, decode_message, encode_message

SMALL = MagnitudeBudget(2**70)


def encrypt_all(pk, values, seed=0):
    rng = random.Random(seed)
    return [paillier.encrypt(pk, v % pk.n, rng) for v in values]


def inputs(party, cts, budget=SMALL):
    return party.ct_to_shares(cts, 0, budget)


# -- transport -------------------------------------------------------------


def test_message_codec_round_trip():
    msg = Message(Tag.OPEN, 7, 2, (0, 1, 2**600, 12345))
    data = encode_message(msg)
    assert decode_message(data) == msg
    with pytest.raises(ValueError):
        decode_message(data[:-1])


def test_bus_exchange_and_round_check():
    bus = LocalBus(2, timeout=5)
    out = {}

    def worker(pid):
        ep = bus.endpoint(pid)
        out[pid] = ep.exchange(Tag.CONTROL, [pid * 10])

    ts = [threading.Thread(target=worker, args=(p,)) for p in (1, 2)]
    [t.start() for t in ts]
    [t.join() for t in ts]
    assert out[1] == out[2] == {1: (10,), 2: (20,)}


def test_bus_tag_mismatch_aborts():
    bus = LocalBus(2, timeout=5)
    errors = []

    def worker(pid, tag):
        try:
            bus.endpoint(pid).exchange(tag, [1])
        except ProtocolAbort as exc:
            errors.append(exc)

    ts = [threading.Thread(target=worker, args=(1, Tag.OPEN)), threading.Thread(target=worker, args=(2, Tag.REVEAL))]
    [t.start() for t in ts]
    [t.join() for t in ts]
    assert errors


def test_bus_timeout_when_peer_missing():
    bus = LocalBus(2, timeout=0.2)
    with pytest.raises(ProtocolAbort):
        bus.endpoint(1).exchange(Tag.CONTROL, [1])


# -- conversion, arithmetic, reveal -----------------------------------------


def test_ct_to_shares_masking_identity(mpc, pk):
    cts = encrypt_all(pk, [42, 0, 42])

    def prog(p):
        return [s.value for s in inputs(p, cts)]

    res = mpc(prog)
    sums = [sum(col) % pk.n for col in zip(*res)]
    assert sums == [42, 0, 42]
    # fresh masks: the two conversions of 42 use different share vectors
    assert [r[0] for r in res] != [r[2] for r in res]


def test_linear_ops_and_reveal(mpc, pk):
    cts = encrypt_all(pk, [5, 7, -17, 0])

    def prog(p):
        a, b, c, z = inputs(p, cts)
        return p.reveal([p.add(a, b), p.const_mult(a, -2), c, z, p.sub(a, b), p.const_add(a, 100),
                         p.sum([a, b, c])])

    res = mpc(prog)
    assert res[0] == res[1] == res[2] == [12, -10, -17, 0, -2, 105, -5]


def test_const_mult_budget_overflow(mpc, pk):
    cts = encrypt_all(pk, [5])

    def prog(p):
        (a,) = inputs(p, cts)
        p.const_mult(a, 2**4096)

    with pytest.raises(BudgetOverflow):
        mpc(prog)


def test_beaver_multiplication(mpc, pk):
    rng = random.Random(5)
    xs = [3, 7, 0] + [rng.randrange(-(2**63), 2**63) for _ in range(40)]
    ys = [4, 0, 9] + [rng.randrange(-(2**63), 2**63) for _ in range(40)]
    cx, cy = encrypt_all(pk, xs, 1), encrypt_all(pk, ys, 2)

    def prog(p):
        p.preprocess(len(xs))
        x = inputs(p, cx, MagnitudeBudget(2**64))
        y = inputs(p, cy, MagnitudeBudget(2**64))
        return p.reveal(p.mul(x, y))

    res = mpc(prog)
    assert res[0] == res[1] == res[2] == [a * b for a, b in zip(xs, ys)]


def test_triples_satisfy_identity(mpc, pk):
    def prog(p):
        return [(t.a, t.b, t.c) for t in p.triple_gen(100)]

    res = mpc(prog)
    n = pk.n
    a_vals = set()
    for k in range(100):
        a = sum(r[k][0] for r in res) % n
        b = sum(r[k][1] for r in res) % n
        c = sum(r[k][2] for r in res) % n
        assert c == a * b % n
        a_vals.add(a)
    assert len(a_vals) == 100


def test_triple_reuse_rejected(mpc, pk):
    cts = encrypt_all(pk, [2, 3])

    def prog(p):
        x, y = inputs(p, cts)
        ts = p.triple_gen(1)
        p.mul(x, y, ts)
        p.mul(x, y, ts)

    with pytest.raises(ValueError, match="consumed"):
        mpc(prog)


def test_ghost_value_trace_through_beaver(pk, shares):
    """Reconstruct every traced wire across parties: 3 * 4 must open as 12."""
    trace: dict[tuple[int, str], dict[int, list[int]]] = {}
    lock = threading.Lock()

    def tracer(pid, gate, label, wires):
        with lock:
            trace.setdefault((gate, label), {})[pid] = [w.value for w in wires]

    cts = encrypt_all(pk, [3, 4])

    def prog(p):
        x, y = inputs(p, cts)
        return p.reveal(p.mul(x, y))[0]

    assert run_local(pk, shares, prog, seed=3, tracer=tracer) == [12, 12, 12]
    ghosts = {label: [from_ring(sum(v) % pk.n, pk.n) for v in zip(*per.values())]
              for (_, label), per in trace.items()}
    assert ghosts["ct_to_shares"] == [3, 4]
    assert ghosts["mul"] == [12]
    a, b, c = (sum(v) % pk.n for v in zip(*trace[next(k for k in trace if k[1] == "triple_gen")].values()))
    assert c == a * b % pk.n


def test_masked_pair_reveal(mpc, pk):
    rng = random.Random(9)
    pairs = [(72, 30), (0, 5), (-40, 7)] + [(rng.randrange(-(2**60), 2**60), rng.randrange(1, 2**60))
                                           for _ in range(10)]
    flat = [v for pr in pairs for v in pr]
    cts = encrypt_all(pk, flat)

    def prog(p):
        w = inputs(p, cts, MagnitudeBudget(2**61))
        return [p.masked_pair_reveal(w[2 * i], w[2 * i + 1]) for i in range(len(pairs))]

    res = mpc(prog)
    for (num, den), (rn, rd) in zip(pairs, res[0]):
        assert Fraction(rn, rd) == Fraction(num, den)
        assert rd > 0 and rn % num == 0 if num else rn == 0
    assert Fraction(*res[0][0]) == Fraction(12, 5)
    assert res[0] == res[1] == res[2]


def test_masked_pair_zero_denominator(mpc, pk):
    cts = encrypt_all(pk, [3, 0])

    def prog(p):
        a, b = inputs(p, cts)
        return p.masked_pair_reveal(a, b)

    with pytest.raises(DegenerateStatistic):
        mpc(prog)


def test_sign_reveal_matches_plaintext(mpc, pk):
    rng = random.Random(4)
    xs = [-9, 0, 1] + [rng.randrange(-(2**40), 2**40) for _ in range(1000)]
    cts = encrypt_all(pk, xs)

    def prog(p):
        return p.sign_reveal(inputs(p, cts, MagnitudeBudget(2**41)))

    res = mpc(prog)
    assert res[0] == [(x > 0) - (x < 0) for x in xs]
    assert res[0][:3] == [-1, 0, 1]


# -- determinism, abort, networking --------------------------------------------


def _transcript(pk, shares, seed):
    bus = LocalBus(3, record=True)
    cts = encrypt_all(pk, [6, -2])

    def prog(p):
        x, y = inputs(p, cts)
        return p.reveal(p.mul(x, y))

    run_local(pk, shares, prog, seed=seed, bus=bus)
    return bus.transcript_digest()


def test_transcript_is_deterministic(pk, shares):
    assert _transcript(pk, shares, 11) == _transcript(pk, shares, 11)
    assert _transcript(pk, shares, 11) != _transcript(pk, shares, 12)


def test_party_rngs_differ():
    assert party_rng(1, 1).random() != party_rng(1, 2).random()


def test_bad_decryption_share_names_cheater(pk, shares, monkeypatch):
    honest = paillier.batch_decryption_share

    def cheat(pk_, keyshare, cts, rng=None):
        share = honest(pk_, keyshare, cts, rng)
        if keyshare.index == 2:
            vals = (share.values[0] * 4 % pk_.n_sq,) + share.values[1:]
            share = paillier.BatchDecryptionShare(share.index, vals, share.challenge, share.response)
        return share

    monkeypatch.setattr(paillier, "batch_decryption_share", cheat)
    cts = encrypt_all(pk, [1])
    with pytest.raises(ProtocolAbort) as info:
        run_local(pk, shares, lambda p: inputs(p, cts), seed=1)
    assert info.value.party == 2


def test_party_requires_matching_keyshare(pk, shares):
    bus = LocalBus(3)
    with pytest.raises(ValueError):
        Party(pk, shares[1], bus.endpoint(1))


def _free_ports(k):
    socks = [socket.socket() for _ in range(k)]
    for s in socks:
        s.bind(("127.0.0.1", 0))
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


def test_tcp_transport_runs_the_same_program(pk, shares):
    ports = _free_ports(3)
    addrs = {i + 1: ("127.0.0.1", port) for i, port in enumerate(ports)}
    cts = encrypt_all(pk, [21, -2, 1000])
    out, errors = {}, []

    def worker(pid):
        try:
            t = TcpTransport(pid, addrs, timeout=20).connect()
            try:
                p = Party(pk, shares[pid - 1], t, rng=party_rng(5, pid))
                x, y, z = inputs(p, cts)
                out[pid] = p.reveal(p.mul([x, z], [y, z])) + p.sign_reveal(y)
            finally:
                t.close()
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    ts = [threading.Thread(target=worker, args=(pid,)) for pid in (3, 2, 1)]
    [t.start() for t in ts]
    [t.join(60) for t in ts]
    assert not errors
    assert out[1] == out[2] == out[3] == [-42, 1_000_000, -1]

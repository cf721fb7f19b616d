"""Semi-honest additive secret sharing over Z_N for the computing servers.

Each server runs its own :class:`Party` (one thread or process per party);
all parties execute the same sequence of calls in lockstep and talk only
through a :class:`~starcert.mpc.transport.Transport`.  Ring elements are
shared additively: the per-party values of one wire sum to its plaintext
modulo ``N``.  Every wire carries its fixed-point scale and a proven bound on
its magnitude, so any result that could wrap around ``N/2`` is refused
before it is computed.
"""

from __future__ import annotations

import logging
import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from starcert import paillier
from starcert.fixedpoint import BudgetOverflow, MagnitudeBudget, from_ring
from starcert.mpc.transport import ProtocolAbort, Tag, Transport
from starcert.paillier import (
    BatchDecryptionShare,
    Ciphertext,
    PaillierKeyShare,
    PaillierPublicKey,
)

log = logging.getLogger(__name__)

Tracer = Callable[[int, int, str, Sequence["AdditiveShare"]], None]


class DegenerateStatistic(ZeroDivisionError):
    """The revealed denominator is zero (e.g. a constant column)."""


@dataclass(frozen=True)
class AdditiveShare:
    party: int
    value: int
    scale_exp: int
    budget: MagnitudeBudget


@dataclass
class BeaverTriple:
    """One party's shares of (a, b, c) with c = a*b mod N."""

    party: int
    a: int
    b: int
    c: int
    used: bool = field(default=False, compare=False)


def _as_list(x):
    return [x] if isinstance(x, AdditiveShare) else list(x)


# ---------------------------------------------------------------------------
# local (zero-communication) operations


def add_shares(x: AdditiveShare, y: AdditiveShare, modulus: int) -> AdditiveShare:
    if x.scale_exp != y.scale_exp:
        raise ValueError("scale mismatch: %d vs %d" % (x.scale_exp, y.scale_exp))
    budget = (x.budget + y.budget).check(modulus)
    return AdditiveShare(x.party, (x.value + y.value) % modulus, x.scale_exp, budget)


def sub_shares(x: AdditiveShare, y: AdditiveShare, modulus: int) -> AdditiveShare:
    if x.scale_exp != y.scale_exp:
        raise ValueError("scale mismatch: %d vs %d" % (x.scale_exp, y.scale_exp))
    budget = (x.budget + y.budget).check(modulus)
    return AdditiveShare(x.party, (x.value - y.value) % modulus, x.scale_exp, budget)


def const_mult(x: AdditiveShare, k: int, modulus: int, scale_bits: int = 0) -> AdditiveShare:
    """Multiply by a public integer; ``scale_bits`` is added to the wire's scale."""
    budget = x.budget.scaled(k).check(modulus)
    return AdditiveShare(x.party, x.value * k % modulus, x.scale_exp + scale_bits, budget)


def const_add(x: AdditiveShare, k: int, modulus: int) -> AdditiveShare:
    """Add a public raw integer (at the wire's scale); only party 1 touches its share."""
    budget = MagnitudeBudget(x.budget.bound + abs(k)).check(modulus)
    value = (x.value + k) % modulus if x.party == 1 else x.value
    return AdditiveShare(x.party, value, x.scale_exp, budget)


def sum_shares(xs: Sequence[AdditiveShare], modulus: int) -> AdditiveShare:
    if not xs:
        raise ValueError("empty sum")
    scale = xs[0].scale_exp
    if any(x.scale_exp != scale for x in xs):
        raise ValueError("scale mismatch in sum")
    budget = MagnitudeBudget(sum(x.budget.bound for x in xs)).check(modulus)
    return AdditiveShare(xs[0].party, sum(x.value for x in xs) % modulus, scale, budget)


# ---------------------------------------------------------------------------
# interactive protocols


class Party:
    """One computing server's view of the engine.

    Parties ``1..t`` contribute partial decryptions; every party checks the
    proofs of the others, so a bad partial decryption aborts the protocol
    and names its sender.
    """

    def __init__(self, pk: PaillierPublicKey, keyshare: PaillierKeyShare | None,
                 transport: Transport, *, rng: random.Random | None = None,
                 kappa: int = paillier.DEFAULT_KAPPA, tracer: Tracer | None = None) -> None:
        self.pk = pk
        self.keyshare = keyshare
        self.net = transport
        self.id = transport.party_id
        self.n_parties = transport.n_parties
        if self.n_parties != pk.n_parties:
            raise ValueError("transport has %d parties, key expects %d"
                             % (self.n_parties, pk.n_parties))
        self.decryptors = tuple(range(1, pk.threshold + 1))
        if self.id in self.decryptors:
            if keyshare is None or keyshare.index != self.id:
                raise ValueError("party %d needs its own key share" % self.id)
        self.rng = rng or random.SystemRandom()
        self.kappa = kappa
        self.tracer = tracer
        self.triples: deque[BeaverTriple] = deque()
        self._gate = 0

    @property
    def modulus(self) -> int:
        return self.pk.n

    # -- helpers --------------------------------------------------------

    def _trace(self, label: str, shares: Sequence[AdditiveShare]) -> None:
        self._gate += 1
        if self.tracer is not None:
            self.tracer(self.id, self._gate, label, shares)

    def _share(self, value: int, scale_exp: int, budget: MagnitudeBudget) -> AdditiveShare:
        return AdditiveShare(self.id, value % self.modulus, scale_exp, budget)

    def add(self, x: AdditiveShare, y: AdditiveShare) -> AdditiveShare:
        return add_shares(x, y, self.modulus)

    def sub(self, x: AdditiveShare, y: AdditiveShare) -> AdditiveShare:
        return sub_shares(x, y, self.modulus)

    def const_mult(self, x: AdditiveShare, k: int, scale_bits: int = 0) -> AdditiveShare:
        return const_mult(x, k, self.modulus, scale_bits)

    def const_add(self, x: AdditiveShare, k: int) -> AdditiveShare:
        return const_add(x, k, self.modulus)

    def sum(self, xs: Sequence[AdditiveShare]) -> AdditiveShare:
        return sum_shares(xs, self.modulus)

    def upscale(self, x: AdditiveShare, bits: int) -> AdditiveShare:
        """Same value at a scale ``bits`` higher (raw times 2**bits)."""
        return self.const_mult(x, 1 << bits, scale_bits=bits)

    def _check_ciphertexts(self, sender: int, values: Sequence[int], expected: int) -> list[Ciphertext]:
        if len(values) != expected:
            raise ProtocolAbort("expected %d ciphertexts, got %d" % (expected, len(values)), sender)
        cts = [Ciphertext(v) for v in values]
        for ct in cts:
            if not paillier.is_valid_ciphertext(self.pk, ct):
                raise ProtocolAbort("invalid ciphertext", sender)
        return cts

    def _broadcast_ciphertexts(self, tag: Tag, mine: Sequence[Ciphertext]) -> dict[int, list[Ciphertext]]:
        got = self.net.exchange(tag, [c.c for c in mine])
        return {j: self._check_ciphertexts(j, vals, len(mine)) for j, vals in sorted(got.items())}

    def _product(self, per_party: dict[int, list[Ciphertext]], base: Sequence[Ciphertext] | None = None
                 ) -> list[Ciphertext]:
        n_sq = self.pk.n_sq
        length = len(next(iter(per_party.values())))
        acc = [c.c for c in base] if base is not None else [1] * length
        for j in sorted(per_party):
            acc = [a * c.c % n_sq for a, c in zip(acc, per_party[j])]
        return [Ciphertext(a) for a in acc]

    # -- threshold decryption --------------------------------------------

    def threshold_decrypt(self, cts: Sequence[Ciphertext]) -> list[int]:
        """Jointly decrypt to public plaintexts (one round)."""
        cts = list(cts)
        if not cts:
            return []
        payload: list[int] = []
        if self.id in self.decryptors:
            share = paillier.batch_decryption_share(self.pk, self.keyshare, cts, self.rng)
            payload = [share.challenge, share.response, *share.values]
        got = self.net.exchange(Tag.DECRYPT, payload)
        partials: dict[int, tuple[int, ...]] = {}
        for j in self.decryptors:
            msg = got[j]
            if len(msg) != len(cts) + 2:
                raise ProtocolAbort("malformed decryption share", j)
            share = BatchDecryptionShare(j, tuple(msg[2:]), msg[0], msg[1])
            if j != self.id and not paillier.verify_batch(self.pk, cts, share):
                raise ProtocolAbort("decryption share failed verification", j)
            partials[j] = share.values
        return [
            paillier.combine_values(self.pk, {j: partials[j][k] for j in self.decryptors})
            for k in range(len(cts))
        ]

    def _masked_open(self, cts: Sequence[Ciphertext], masks: Sequence[int]) -> list[int]:
        # cts already carry every party's mask; turn the opened value into shares
        w = self.threshold_decrypt(cts)
        n = self.modulus
        if self.id == 1:
            return [(wk - r) % n for wk, r in zip(w, masks)]
        return [(-r) % n for r in masks]

    def ct_to_shares(self, cts: Sequence[Ciphertext] | Ciphertext, scale_exp: int,
                     budget: MagnitudeBudget | Sequence[MagnitudeBudget]) -> list[AdditiveShare]:
        """Convert ciphertexts into additive shares of their plaintexts."""
        if isinstance(cts, Ciphertext):
            cts = [cts]
        cts = list(cts)
        budgets = [budget] * len(cts) if isinstance(budget, MagnitudeBudget) else list(budget)
        if len(budgets) != len(cts):
            raise ValueError("one budget per ciphertext required")
        for b in budgets:
            b.check(self.modulus)
        if not cts:
            return []
        n = self.modulus
        masks = [self.rng.randrange(n) for _ in cts]
        enc = [paillier.encrypt(self.pk, r, self.rng) for r in masks]
        others = self._broadcast_ciphertexts(Tag.MASK, enc)
        masked = self._product(others, base=cts)
        values = self._masked_open(masked, masks)
        out = [self._share(v, scale_exp, b) for v, b in zip(values, budgets)]
        self._trace("ct_to_shares", out)
        return out

    # -- preprocessing ---------------------------------------------------

    def triple_gen(self, count: int) -> list[BeaverTriple]:
        """Generate ``count`` Beaver triples (three rounds regardless of count)."""
        if count <= 0:
            return []
        n, pk = self.modulus, self.pk
        a = [self.rng.randrange(n) for _ in range(count)]
        b = [self.rng.randrange(n) for _ in range(count)]
        enc_a = self._product(self._broadcast_ciphertexts(
            Tag.TRIPLE_A, [paillier.encrypt(pk, x, self.rng) for x in a]))
        # E(a)^{b_i} times E(r_i): the fresh mask also rerandomizes
        masks = [self.rng.randrange(n) for _ in range(count)]
        mine = [
            Ciphertext(paillier.cmult(pk, ea, bi).c * paillier.encrypt(pk, r, self.rng).c % pk.n_sq)
            for ea, bi, r in zip(enc_a, b, masks)
        ]
        enc_c = self._product(self._broadcast_ciphertexts(Tag.TRIPLE_B, mine))
        c = self._masked_open(enc_c, masks)
        triples = [BeaverTriple(self.id, ai, bi, ci) for ai, bi, ci in zip(a, b, c)]
        if self.tracer is not None:
            full = MagnitudeBudget(n // 2 - 1)
            self._trace("triple_gen", [self._share(t.a, 0, full) for t in triples]
                        + [self._share(t.b, 0, full) for t in triples]
                        + [self._share(t.c, 0, full) for t in triples])
        return triples

    def preprocess(self, count: int) -> None:
        self.triples.extend(self.triple_gen(count))

    def _take_triples(self, count: int, triples: Sequence[BeaverTriple] | None) -> list[BeaverTriple]:
        if triples is not None:
            triples = list(triples)
            if len(triples) < count:
                raise ValueError("need %d triples, got %d" % (count, len(triples)))
            return triples[:count]
        if len(self.triples) < count:
            self.preprocess(count - len(self.triples))
        return [self.triples.popleft() for _ in range(count)]

    # -- multiplication and reveal -----------------------------------------

    def mul(self, xs: Sequence[AdditiveShare] | AdditiveShare, ys: Sequence[AdditiveShare] | AdditiveShare,
            triples: Sequence[BeaverTriple] | None = None) -> list[AdditiveShare]:
        """Pairwise products via Beaver triples, all in one opening round."""
        xs, ys = _as_list(xs), _as_list(ys)
        if len(xs) != len(ys):
            raise ValueError("operand lists differ in length")
        if not xs:
            return []
        n = self.modulus
        budgets = [(x.budget * y.budget).check(n) for x, y in zip(xs, ys)]
        used = self._take_triples(len(xs), triples)
        for t in used:
            if t.used:
                raise ValueError("Beaver triple already consumed")
            if t.party != self.id:
                raise ValueError("triple belongs to party %d" % t.party)
            t.used = True
        d_mine = [(x.value - t.a) % n for x, t in zip(xs, used)]
        e_mine = [(y.value - t.b) % n for y, t in zip(ys, used)]
        got = self.net.exchange(Tag.OPEN, d_mine + e_mine)
        m = len(xs)
        d, e = [0] * m, [0] * m
        for j, vals in got.items():
            if len(vals) != 2 * m or any(v >= n for v in vals):
                raise ProtocolAbort("malformed opening", j)
            for k in range(m):
                d[k] += vals[k]
                e[k] += vals[m + k]
        out = []
        for k, (x, y, t) in enumerate(zip(xs, ys, used)):
            dk, ek = d[k] % n, e[k] % n
            z = t.c + dk * t.b + ek * t.a
            if self.id == 1:
                z += dk * ek
            out.append(self._share(z, x.scale_exp + y.scale_exp, budgets[k]))
        self._trace("mul", out)
        return out

    def reveal(self, xs: Sequence[AdditiveShare] | AdditiveShare) -> list[int]:
        """Open wires to their centered signed values."""
        xs = _as_list(xs)
        n = self.modulus
        for x in xs:
            x.budget.check(n)
        got = self.net.exchange(Tag.REVEAL, [x.value for x in xs])
        sums = [0] * len(xs)
        for j in range(1, self.n_parties + 1):
            vals = got.get(j)
            if vals is None or len(vals) != len(xs):
                raise ProtocolAbort("missing or malformed reveal share", j)
            for k, v in enumerate(vals):
                if v >= n:
                    raise ProtocolAbort("reveal share out of range", j)
                sums[k] += v
        return [from_ring(s % n, n) for s in sums]

    def _random_positive(self) -> AdditiveShare:
        # r = sum of r_i with r_i in [1, 2^kappa]
        bound = MagnitudeBudget(self.n_parties << self.kappa)
        return self._share(self.rng.randint(1, 1 << self.kappa), 0, bound)

    def masked_pair_reveal(self, num: AdditiveShare, den: AdditiveShare,
                           triples: Sequence[BeaverTriple] | None = None) -> tuple[int, int]:
        """Reveal (r*num, r*den) for a joint secret r > 0; the quotient is exact."""
        r = self._random_positive()
        for w in (num, den):
            if not (w.budget * r.budget).fits(self.modulus):
                raise BudgetOverflow("masked reveal would overflow N/2")
        rn, rd = self.mul([r, r], [num, den], triples)
        r_num, r_den = self.reveal([rn, rd])
        if r_den == 0:
            raise DegenerateStatistic("denominator is zero")
        return r_num, r_den

    def sign_reveal(self, xs: Sequence[AdditiveShare] | AdditiveShare,
                    triples: Sequence[BeaverTriple] | None = None) -> list[int]:
        """Reveal only the signs of the wires (as -1, 0 or +1)."""
        xs = _as_list(xs)
        rs = [self._random_positive() for _ in xs]
        for x, r in zip(xs, rs):
            if not (x.budget * r.budget).fits(self.modulus):
                raise BudgetOverflow("sign reveal would overflow N/2")
        masked = self.reveal(self.mul(rs, xs, triples))
        return [(v > 0) - (v < 0) for v in masked]


def quotient(r_num: int, r_den: int) -> Fraction:
    return Fraction(r_num, r_den)

"""Threshold Paillier: dealer key generation, homomorphic operations and
t-of-n decryption with Fiat-Shamir proofs of correct partial decryption.

The decryption exponent ``d`` (``d = 1 mod N^2``, ``d = 0 mod M``) is shared
with a degree ``t-1`` polynomial over Z_{N^2 M}.  Party ``i`` holds
``s_i = f(i)`` and publishes ``v_i = v^(s_i * Delta)`` so anyone can check
its partial decryptions ``c_i = c^(2 Delta s_i)``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import secrets
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import gmpy2

DEFAULT_KAPPA = 40
MR_ROUNDS = 64
MIN_MODULUS_BITS = 512

_SMALL_PRIMES = [p for p in range(3, 2000) if all(p % q for q in range(2, int(p**0.5) + 1))]


class PrimeGenerationTimeout(RuntimeError):
    """Safe-prime search gave up before finding a candidate."""


class ShareVerificationError(ValueError):
    def __init__(self, index: int, message: str = "") -> None:
        self.index = index
        super().__init__(message or "decryption share from party %d failed verification" % index)


def _default_rng() -> random.Random:
    return secrets.SystemRandom()


@dataclass(frozen=True)
class PaillierParams:
    modulus_bits: int
    n_parties: int
    threshold: int

    def __post_init__(self) -> None:
        if self.n_parties < 2:
            raise ValueError("need at least two parties")
        if self.threshold < 1:
            raise ValueError("threshold must be at least 1")
        if 2 * self.threshold - 1 > self.n_parties:
            raise ValueError(
                "threshold %d violates 2t-1 <= n_parties (%d)" % (self.threshold, self.n_parties)
            )
        if self.modulus_bits < 8 or self.modulus_bits % 2:
            raise ValueError("modulus_bits must be an even number")

    @property
    def delta(self) -> int:
        return math.factorial(self.n_parties)


@dataclass(frozen=True)
class PaillierPublicKey:
    n: int
    v: int
    verification_keys: tuple[int, ...]
    threshold: int
    kappa: int = DEFAULT_KAPPA
    n_sq: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_sq", self.n * self.n)

    @property
    def n_parties(self) -> int:
        return len(self.verification_keys)

    @property
    def delta(self) -> int:
        return math.factorial(self.n_parties)

    def fingerprint(self) -> str:
        return hashlib.sha256(_lp(self.n, self.v, *self.verification_keys)).hexdigest()


@dataclass(frozen=True)
class PaillierKeyShare:
    index: int
    s: int
    n: int  # binds the share to its public key

    def __repr__(self) -> str:
        return "PaillierKeyShare(index=%d, s=<secret>)" % self.index


@dataclass(frozen=True)
class OwnerSecret:
    """Factorisation kept by the data owner; used only for fast CRT encryption."""

    p: int
    q: int

    def __repr__(self) -> str:
        return "OwnerSecret(<secret>)"


@dataclass(frozen=True)
class Ciphertext:
    c: int


@dataclass(frozen=True)
class DecryptionShare:
    index: int
    c_i: int
    challenge: int
    response: int

    def to_json(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "c_i": _hex(self.c_i),
            "challenge": _hex(self.challenge),
            "response": _hex(self.response),
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> DecryptionShare:
        return cls(int(obj["index"]), _unhex(obj["c_i"]), _unhex(obj["challenge"]), _unhex(obj["response"]))


@dataclass(frozen=True)
class BatchDecryptionShare:
    """Partial decryptions of many ciphertexts under one aggregated proof."""

    index: int
    values: tuple[int, ...]
    challenge: int
    response: int


@dataclass(frozen=True)
class Dealing:
    public_key: PaillierPublicKey
    shares: tuple[PaillierKeyShare, ...]
    secret: OwnerSecret


# ---------------------------------------------------------------------------
# encoding helpers


def _hex(x: int) -> str:
    return format(x, "x")


def _unhex(s: str) -> int:
    if not isinstance(s, str) or not s or s != s.lower():
        raise ValueError("expected lowercase hex string")
    return int(s, 16)


def _lp(*values: int) -> bytes:
    """Length-prefixed big-endian encoding used for every Fiat-Shamir hash."""
    out = bytearray()
    for x in values:
        b = int(x).to_bytes((int(x).bit_length() + 7) // 8 or 1, "big")
        out += len(b).to_bytes(4, "big") + b
    return bytes(out)


def _powmod(b: int, e: int, m: int) -> int:
    return int(gmpy2.powmod(b, e, m))


# ---------------------------------------------------------------------------
# key generation


def _passes_sieve(x: int) -> bool:
    for p in _SMALL_PRIMES:
        if x % p == 0:
            return x == p
    return True


def _is_probable_prime(x: int) -> bool:
    return bool(gmpy2.is_prime(x, MR_ROUNDS))


def generate_safe_prime(bits: int, rng: random.Random, deadline: float | None = None) -> int:
    """Random safe prime p = 2p' + 1 of exactly ``bits`` bits with the top two bits set."""
    top = (1 << (bits - 2)) | (1 << (bits - 3))
    while True:
        if deadline is not None and time.monotonic() > deadline:
            raise PrimeGenerationTimeout("no %d-bit safe prime found before the deadline" % bits)
        pp = rng.getrandbits(bits - 1) | top | 1
        p = 2 * pp + 1
        if not (_passes_sieve(pp) and _passes_sieve(p)):
            continue
        if _is_probable_prime(pp) and _is_probable_prime(p):
            return p


def modulus_structure(p: int, q: int) -> tuple[int, int]:
    """(N, M) = (pq, p'q') for safe primes p = 2p'+1, q = 2q'+1."""
    if p % 2 == 0 or q % 2 == 0:
        raise ValueError("safe primes are odd")
    return p * q, ((p - 1) // 2) * ((q - 1) // 2)


def deal(params: PaillierParams, rng: random.Random | None = None, *,
         kappa: int = DEFAULT_KAPPA, timeout: float | None = None,
         primes: tuple[int, int] | None = None) -> Dealing:
    """Trusted-dealer key generation.

    ``primes`` lets callers supply (p, q) directly; they must be distinct safe
    primes.  Otherwise both are searched for with random candidates plus
    Miller-Rabin on p and p'.
    """
    rng = rng or _default_rng()
    deadline = time.monotonic() + timeout if timeout is not None else None
    half = params.modulus_bits // 2
    if primes is None:
        if params.modulus_bits < MIN_MODULUS_BITS:
            raise ValueError("modulus_bits must be >= %d" % MIN_MODULUS_BITS)
        p = generate_safe_prime(half, rng, deadline)
        while True:
            q = generate_safe_prime(half, rng, deadline)
            if q != p:
                break
    else:
        p, q = primes
        for x in (p, q):
            if not (_is_probable_prime(x) and _is_probable_prime((x - 1) // 2)):
                raise ValueError("%d is not a safe prime" % x)
        if p == q:
            raise ValueError("p and q must differ")
    n, m = modulus_structure(p, q)
    n_sq = n * n
    if math.gcd(n, m) != 1 or math.gcd(n, params.delta) != 1:
        raise ValueError("degenerate safe primes: N shares a factor with M or Delta")
    modulus = n_sq * m
    # d = 1 mod N^2, d = 0 mod M
    d = (m * pow(m, -1, n_sq)) % modulus
    coeffs = [d] + [rng.randrange(modulus) for _ in range(params.threshold - 1)]
    delta = params.delta

    def f(x: int) -> int:
        acc = 0
        for a in reversed(coeffs):
            acc = (acc * x + a) % modulus
        return acc

    shares = tuple(PaillierKeyShare(i, f(i), n) for i in range(1, params.n_parties + 1))
    v = _powmod(_random_unit(n, n_sq, rng), 2, n_sq)
    vks = tuple(_powmod(v, sh.s * delta, n_sq) for sh in shares)
    pk = PaillierPublicKey(n=n, v=v, verification_keys=vks, threshold=params.threshold, kappa=kappa)
    return Dealing(pk, shares, OwnerSecret(p, q))


def keygen(params: PaillierParams, seed: int | None = None, **kwargs: Any
           ) -> tuple[PaillierPublicKey, list[PaillierKeyShare]]:
    rng = random.Random(seed) if seed is not None else None
    dealing = deal(params, rng, **kwargs)
    return dealing.public_key, list(dealing.shares)


# ---------------------------------------------------------------------------
# encryption and homomorphic operations


def _random_unit(n: int, n_sq: int, rng: random.Random) -> int:
    while True:
        r = rng.randrange(1, n_sq)
        if math.gcd(r, n) == 1:
            return r


def randomizer(pk: PaillierPublicKey, rng: random.Random | None = None) -> int:
    """Fresh r^(N^2) mod N^2."""
    rng = rng or _default_rng()
    return _powmod(_random_unit(pk.n, pk.n_sq, rng), pk.n_sq, pk.n_sq)


def encrypt(pk: PaillierPublicKey, m: int, rng: random.Random | None = None) -> Ciphertext:
    if not 0 <= m < pk.n:
        raise ValueError("plaintext must lie in [0, N)")
    # (N+1)^m = 1 + mN mod N^2
    g_m = (1 + m * pk.n) % pk.n_sq
    return Ciphertext(g_m * randomizer(pk, rng) % pk.n_sq)


def encrypt_with_secret(pk: PaillierPublicKey, secret: OwnerSecret, m: int,
                        rng: random.Random | None = None) -> Ciphertext:
    """Same distribution as :func:`encrypt`, computed via CRT by the key owner."""
    if not 0 <= m < pk.n:
        raise ValueError("plaintext must lie in [0, N)")
    rng = rng or _default_rng()
    p, q = secret.p, secret.q
    p2, q2 = p * p, q * q
    r = _random_unit(pk.n, pk.n_sq, rng)
    rp = _powmod(r % p2, pk.n_sq % (p * (p - 1)), p2)
    rq = _powmod(r % q2, pk.n_sq % (q * (q - 1)), q2)
    rn = (rp + p2 * ((rq - rp) * pow(p2, -1, q2) % q2)) % pk.n_sq
    return Ciphertext((1 + m * pk.n) * rn % pk.n_sq)


def add(pk: PaillierPublicKey, c1: Ciphertext, c2: Ciphertext, rerandomize: bool = False,
        rng: random.Random | None = None) -> Ciphertext:
    c = c1.c * c2.c % pk.n_sq
    if rerandomize:
        c = c * randomizer(pk, rng) % pk.n_sq
    return Ciphertext(c)


def sub(pk: PaillierPublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    return Ciphertext(c1.c * pow(c2.c, -1, pk.n_sq) % pk.n_sq)


def add_all(pk: PaillierPublicKey, cts: Iterable[Ciphertext]) -> Ciphertext:
    acc = 1
    for ct in cts:
        acc = acc * ct.c % pk.n_sq
    return Ciphertext(acc)


def cmult(pk: PaillierPublicKey, c: Ciphertext, s: int, rerandomize: bool = False,
          rng: random.Random | None = None) -> Ciphertext:
    out = _powmod(c.c, s % pk.n, pk.n_sq)
    if rerandomize:
        out = out * randomizer(pk, rng) % pk.n_sq
    return Ciphertext(out)


def is_valid_ciphertext(pk: PaillierPublicKey, c: Ciphertext) -> bool:
    return isinstance(c.c, int) and 0 < c.c < pk.n_sq and math.gcd(c.c, pk.n) == 1


# ---------------------------------------------------------------------------
# threshold decryption


def _witness_bits(pk: PaillierPublicKey) -> int:
    # w must hide e * Delta * s_i with s_i < N^2 M < N^3; leave |e| bits of slack on top
    challenge_bits = 2 * pk.kappa
    return (pk.delta * pk.n_sq * pk.n).bit_length() + 2 * challenge_bits


def _challenge(pk: PaillierPublicKey, *elements: int) -> int:
    digest = hashlib.sha256(_lp(*elements)).digest()
    return int.from_bytes(digest, "big") >> (256 - 2 * pk.kappa)


def _prove_dleq(pk: PaillierPublicKey, g1: int, h1: int, h2: int, x: int,
                rng: random.Random) -> tuple[int, int]:
    """Prove log_g1(h1) = log_v(h2) = x."""
    w = rng.getrandbits(_witness_bits(pk))
    a = _powmod(g1, w, pk.n_sq)
    b = _powmod(pk.v, w, pk.n_sq)
    e = _challenge(pk, g1, pk.v, h1, h2, a, b)
    return e, w + e * x


def _verify_dleq(pk: PaillierPublicKey, g1: int, h1: int, h2: int, e: int, z: int) -> bool:
    if not (0 <= e < (1 << (2 * pk.kappa)) and 0 <= z < (1 << (_witness_bits(pk) + 1))):
        return False
    n_sq = pk.n_sq
    a = _powmod(g1, z, n_sq) * _powmod(h1, -e, n_sq) % n_sq
    b = _powmod(pk.v, z, n_sq) * _powmod(h2, -e, n_sq) % n_sq
    return e == _challenge(pk, g1, pk.v, h1, h2, a, b)


def _check_keyshare(pk: PaillierPublicKey, keyshare: PaillierKeyShare) -> None:
    if keyshare.n != pk.n or not 1 <= keyshare.index <= pk.n_parties:
        raise ValueError("key share does not belong to this public key")


def decryption_share(pk: PaillierPublicKey, keyshare: PaillierKeyShare, c: Ciphertext,
                     rng: random.Random | None = None) -> DecryptionShare:
    _check_keyshare(pk, keyshare)
    rng = rng or _default_rng()
    n_sq = pk.n_sq
    x = pk.delta * keyshare.s
    c_i = _powmod(c.c, 2 * x, n_sq)
    e, z = _prove_dleq(pk, _powmod(c.c, 4, n_sq), c_i * c_i % n_sq,
                       pk.verification_keys[keyshare.index - 1], x, rng)
    return DecryptionShare(keyshare.index, c_i, e, z)


def _unit(pk: PaillierPublicKey, x: Any) -> bool:
    return isinstance(x, int) and 0 < x < pk.n_sq and math.gcd(x, pk.n) == 1


def verify_share(pk: PaillierPublicKey, c: Ciphertext, share: DecryptionShare) -> bool:
    """Check one partial decryption; malformed input yields False."""
    try:
        if not (isinstance(share.index, int) and 1 <= share.index <= pk.n_parties):
            return False
        if not (_unit(pk, c.c) and _unit(pk, share.c_i)):
            return False
        if not isinstance(share.challenge, int) or not isinstance(share.response, int):
            return False
        n_sq = pk.n_sq
        return _verify_dleq(pk, _powmod(c.c, 4, n_sq), share.c_i * share.c_i % n_sq,
                            pk.verification_keys[share.index - 1], share.challenge, share.response)
    except (ValueError, ZeroDivisionError, TypeError, AttributeError, IndexError):
        return False


def lagrange_at_zero(indices: Sequence[int], delta: int) -> dict[int, int]:
    """Integer coefficients Delta * prod_{j != i} j / (j - i)."""
    coeffs = {}
    for i in indices:
        num, den = delta, 1
        for j in indices:
            if j != i:
                num *= j
                den *= j - i
        if num % den:
            raise ArithmeticError("Lagrange coefficient is not integral")
        coeffs[i] = num // den
    return coeffs


def combine_values(pk: PaillierPublicKey, partials: dict[int, int]) -> int:
    """Combine exactly ``t`` partial decryptions {index: c_i} of one ciphertext."""
    if len(partials) != pk.threshold:
        raise ValueError("need exactly %d partial decryptions" % pk.threshold)
    n, n_sq = pk.n, pk.n_sq
    lam = lagrange_at_zero(sorted(partials), pk.delta)
    acc = 1
    for i, c_i in partials.items():
        acc = acc * _powmod(c_i, 2 * lam[i], n_sq) % n_sq
    delta = pk.delta
    return (acc - 1) // n * pow(4 * delta * delta, -1, n) % n


def combine(pk: PaillierPublicKey, c: Ciphertext, shares: Sequence[DecryptionShare],
            verify: bool = True) -> int:
    if len(shares) < pk.threshold:
        raise ValueError("need %d decryption shares, got %d" % (pk.threshold, len(shares)))
    indices = [s.index for s in shares]
    if len(set(indices)) != len(indices):
        raise ValueError("duplicate share indices")
    chosen = list(shares)[: pk.threshold]
    if verify:
        for s in chosen:
            if not verify_share(pk, c, s):
                raise ShareVerificationError(s.index)
    return combine_values(pk, {s.index: s.c_i for s in chosen})


def decrypt(pk: PaillierPublicKey, keyshares: Sequence[PaillierKeyShare], c: Ciphertext,
            rng: random.Random | None = None) -> int:
    """Convenience: threshold-decrypt with the first ``t`` of the given key shares."""
    if len(keyshares) < pk.threshold:
        raise ValueError("need %d key shares" % pk.threshold)
    shares = [decryption_share(pk, ks, c, rng) for ks in keyshares[: pk.threshold]]
    return combine(pk, c, shares)


# ---------------------------------------------------------------------------
# batched partial decryption: one proof over a random linear combination


def _batch_weights(pk: PaillierPublicKey, index: int, cts: Sequence[int],
                   values: Sequence[int]) -> list[int]:
    seed = hashlib.sha256(b"batch" + _lp(pk.n, index, len(cts), *cts, *values)).digest()
    nbytes = (2 * pk.kappa + 7) // 8
    return [
        int.from_bytes(hashlib.sha256(seed + j.to_bytes(4, "big")).digest()[:nbytes], "big") | 1
        for j in range(len(cts))
    ]


def _batch_bases(pk: PaillierPublicKey, index: int, cts: Sequence[int],
                 values: Sequence[int]) -> tuple[int, int]:
    n_sq = pk.n_sq
    weights = _batch_weights(pk, index, cts, values)
    g, h = 1, 1
    for c, c_i, rho in zip(cts, values, weights):
        g = g * _powmod(c, 4 * rho, n_sq) % n_sq
        h = h * _powmod(c_i, 2 * rho, n_sq) % n_sq
    return g, h


def batch_decryption_share(pk: PaillierPublicKey, keyshare: PaillierKeyShare,
                           cts: Sequence[Ciphertext], rng: random.Random | None = None
                           ) -> BatchDecryptionShare:
    _check_keyshare(pk, keyshare)
    rng = rng or _default_rng()
    x = pk.delta * keyshare.s
    raw = [ct.c for ct in cts]
    values = tuple(_powmod(c, 2 * x, pk.n_sq) for c in raw)
    g, h = _batch_bases(pk, keyshare.index, raw, values)
    e, z = _prove_dleq(pk, g, h, pk.verification_keys[keyshare.index - 1], x, rng)
    return BatchDecryptionShare(keyshare.index, values, e, z)


def verify_batch(pk: PaillierPublicKey, cts: Sequence[Ciphertext], share: BatchDecryptionShare) -> bool:
    try:
        if not (isinstance(share.index, int) and 1 <= share.index <= pk.n_parties):
            return False
        if len(share.values) != len(cts) or not cts:
            return False
        raw = [ct.c for ct in cts]
        if not all(_unit(pk, c) for c in raw) or not all(_unit(pk, c) for c in share.values):
            return False
        g, h = _batch_bases(pk, share.index, raw, share.values)
        return _verify_dleq(pk, g, h, pk.verification_keys[share.index - 1],
                            share.challenge, share.response)
    except (ValueError, ZeroDivisionError, TypeError, AttributeError, IndexError):
        return False


# ---------------------------------------------------------------------------
# key files


def public_key_to_json(pk: PaillierPublicKey) -> dict[str, Any]:
    return {
        "scheme": "threshold-paillier",
        "n": _hex(pk.n),
        "v": _hex(pk.v),
        "verification_keys": [_hex(x) for x in pk.verification_keys],
        "threshold": pk.threshold,
        "kappa": pk.kappa,
    }


def public_key_from_json(obj: dict[str, Any]) -> PaillierPublicKey:
    if obj.get("scheme") != "threshold-paillier":
        raise ValueError("not a threshold-paillier public key")
    return PaillierPublicKey(
        n=_unhex(obj["n"]),
        v=_unhex(obj["v"]),
        verification_keys=tuple(_unhex(x) for x in obj["verification_keys"]),
        threshold=int(obj["threshold"]),
        kappa=int(obj.get("kappa", DEFAULT_KAPPA)),
    )


def keyshare_to_json(share: PaillierKeyShare) -> dict[str, Any]:
    return {"scheme": "threshold-paillier-share", "index": share.index,
            "s": _hex(share.s), "n": _hex(share.n)}


def keyshare_from_json(obj: dict[str, Any]) -> PaillierKeyShare:
    if obj.get("scheme") != "threshold-paillier-share":
        raise ValueError("not a threshold-paillier key share")
    return PaillierKeyShare(int(obj["index"]), _unhex(obj["s"]), _unhex(obj["n"]))


def owner_secret_to_json(secret: OwnerSecret) -> dict[str, Any]:
    return {"scheme": "threshold-paillier-owner", "p": _hex(secret.p), "q": _hex(secret.q)}


def owner_secret_from_json(obj: dict[str, Any]) -> OwnerSecret:
    if obj.get("scheme") != "threshold-paillier-owner":
        raise ValueError("not an owner secret")
    return OwnerSecret(_unhex(obj["p"]), _unhex(obj["q"]))


def write_secret_json(path: str | os.PathLike[str], obj: dict[str, Any]) -> None:
    """Write JSON readable by the owner only (mode 0600)."""
    path = Path(path)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "w") as fh:
        json.dump(obj, fh, indent=1)
    os.chmod(path, 0o600)


def save_public_key(path: str | os.PathLike[str], pk: PaillierPublicKey) -> None:
    Path(path).write_text(json.dumps(public_key_to_json(pk), indent=1))


def load_public_key(path: str | os.PathLike[str]) -> PaillierPublicKey:
    return public_key_from_json(json.loads(Path(path).read_text()))


def save_keyshare(path: str | os.PathLike[str], share: PaillierKeyShare) -> None:
    write_secret_json(path, keyshare_to_json(share))


def load_keyshare(path: str | os.PathLike[str]) -> PaillierKeyShare:
    return keyshare_from_json(json.loads(Path(path).read_text()))

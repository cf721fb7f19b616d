"""The public test log: hash-chained, quorum-signed certificates.

The log is a JSON Lines file.  Entry 0 is the genesis record, which fixes
the alpha-investing parameters, the server verification keys, the quorum
and the reveal policy.  Entry rho >= 1 certifies the rho-th test.  Each line
must equal its own canonical serialization (sorted keys, no whitespace,
lowercase hex), so any change to the file bytes is detectable.

Hashed bytes of an entry::

    rho|sigma_hex|tau|p|decision|researcher_key_hex|timestamp|prev_hash

with the literal ``BOT`` standing for an empty field in the genesis entry.
The genesis ``prev_hash`` is the SHA-256 of the canonical genesis config.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

from starcert.alpha import AlphaParams, AlphaState, apply_decision, is_rejection, next_alpha
from starcert.circuits import SpecError, TestSpec

BOT = "BOT"
BIT = "BIT"
REJECT = "reject"
ACCEPT = "accept"
SIG_SCHEME = "ed25519"

MODE_FULL = "full-statistic"
MODE_BIT = "significance-bit"

_DEC12 = re.compile(r"^-?(0|[1-9][0-9]*)\.[0-9]{12}$")
_HEX64 = re.compile(r"^[0-9a-f]{64}$")
_HEX = re.compile(r"^(?:[0-9a-f]{2})+$")
_TIMESTAMP = re.compile(r"^[0-9]{4}-[0-9]{2}-[0-9]{2}T[0-9]{2}:[0-9]{2}:[0-9]{2}(\.[0-9]{1,6})?Z$")


class LedgerError(Exception):
    """Base class for log errors."""


class LedgerFormatError(LedgerError):
    """The log file cannot be parsed."""


class RhoGapError(LedgerError):
    pass


class DuplicateRhoError(LedgerError):
    pass


class QuorumError(LedgerError):
    pass


class SignatureError(LedgerError):
    pass


class EntryNotFound(LedgerError, LookupError):
    pass


# ---------------------------------------------------------------------------
# formatting helpers


def fmt12(x: float) -> str:
    """Fixed 12-decimal rendering used for tau and p on the log."""
    s = format(float(x), ".12f")
    return "0.000000000000" if s == "-0.000000000000" else s


def utc_timestamp(when: datetime | None = None) -> str:
    when = when or datetime.now(timezone.utc)
    return when.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False).encode("utf-8")


def public_key_hex(key: Ed25519PublicKey) -> str:
    return key.public_bytes(Encoding.Raw, PublicFormat.Raw).hex()


def load_public_key_hex(key_hex: str) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(bytes.fromhex(key_hex))


def signing_key(seed: int | bytes | None = None) -> Ed25519PrivateKey:
    """Ed25519 key; deterministic when ``seed`` is given (tests, simulations)."""
    if seed is None:
        return Ed25519PrivateKey.generate()
    if isinstance(seed, int):
        seed = random.Random(seed).randbytes(32)
    return Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed).digest())


def private_key_hex(key: Ed25519PrivateKey) -> str:
    return key.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption()).hex()


def load_private_key_hex(key_hex: str) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(bytes.fromhex(key_hex))


def quorum_size(k: int) -> int:
    """Simple majority ceil((k+1)/2)."""
    return (k + 2) // 2


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class GenesisConfig:
    alpha: AlphaParams
    server_keys: dict[int, str]
    quorum: int
    policy: dict[str, Any]
    dataset: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.server_keys:
            raise ValueError("at least one server key required")
        if not 1 <= self.quorum <= len(self.server_keys):
            raise ValueError("quorum out of range")
        if self.quorum < quorum_size(len(self.server_keys)):
            raise ValueError("quorum below a simple majority")
        if self.policy.get("mode", MODE_FULL) not in (MODE_FULL, MODE_BIT):
            raise ValueError("unknown reveal mode %r" % self.policy.get("mode"))

    @property
    def mode(self) -> str:
        return self.policy.get("mode", MODE_FULL)

    def to_json(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha.to_json(),
            "dataset": self.dataset,
            "policy": self.policy,
            "quorum": self.quorum,
            "servers": [{"id": i, "key": self.server_keys[i], "scheme": SIG_SCHEME}
                        for i in sorted(self.server_keys)],
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> GenesisConfig:
        keys = {}
        for s in obj["servers"]:
            if s.get("scheme") != SIG_SCHEME:
                raise ValueError("unsupported signature scheme %r" % s.get("scheme"))
            keys[int(s["id"])] = s["key"]
        return cls(AlphaParams.from_json(obj["alpha"]), keys, int(obj["quorum"]),
                   dict(obj["policy"]), dict(obj.get("dataset", {})))

    def digest(self) -> str:
        return sha256_hex(canonical_json(self.to_json()))


@dataclass(frozen=True)
class Certificate:
    rho: int
    sigma: str
    tau: str
    p_value: str
    decision: str
    researcher_key: str
    timestamp: str

    @classmethod
    def genesis(cls, timestamp: str) -> Certificate:
        return cls(0, BOT, BOT, BOT, BOT, BOT, timestamp)

    @property
    def is_bit(self) -> bool:
        return self.tau == BIT

    @property
    def rejected(self) -> bool:
        return self.decision == REJECT

    def hash_bytes(self, prev_hash: str) -> bytes:
        sigma_hex = BOT if self.sigma == BOT else self.sigma.encode("utf-8").hex()
        fields = [str(self.rho), sigma_hex, self.tau, self.p_value, self.decision,
                  self.researcher_key, self.timestamp, prev_hash]
        return "|".join(fields).encode("utf-8")

    def entry_hash(self, prev_hash: str) -> str:
        return sha256_hex(self.hash_bytes(prev_hash))


@dataclass(frozen=True)
class Signature:
    server: int
    signature: str


@dataclass(frozen=True)
class LogEntry:
    certificate: Certificate
    prev_hash: str
    entry_hash: str
    signatures: tuple[Signature, ...]
    spec: dict[str, Any] | None = None
    request: dict[str, Any] | None = None
    config: dict[str, Any] | None = None

    @property
    def rho(self) -> int:
        return self.certificate.rho

    def to_json(self) -> dict[str, Any]:
        c = self.certificate
        obj: dict[str, Any] = {
            "decision": c.decision,
            "entry_hash": self.entry_hash,
            "p": c.p_value,
            "prev_hash": self.prev_hash,
            "researcher_key": c.researcher_key,
            "rho": c.rho,
            "sigma": c.sigma,
            "signatures": [{"server": s.server, "signature": s.signature}
                           for s in sorted(self.signatures, key=lambda s: s.server)],
            "tau": c.tau,
            "timestamp": c.timestamp,
        }
        if self.spec is not None:
            obj["spec"] = self.spec
        if self.request is not None:
            obj["request"] = self.request
        if self.config is not None:
            obj["config"] = self.config
        return obj

    def to_line(self) -> str:
        return canonical_json(self.to_json()).decode("utf-8")

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> LogEntry:
        required = {"decision", "entry_hash", "p", "prev_hash", "researcher_key", "rho",
                    "sigma", "signatures", "tau", "timestamp"}
        optional = {"spec", "request", "config"}
        keys = set(obj)
        if not required <= keys or not keys <= required | optional:
            raise LedgerFormatError("unexpected entry fields")
        if not isinstance(obj["rho"], int) or isinstance(obj["rho"], bool):
            raise LedgerFormatError("rho must be an integer")
        for name in ("decision", "entry_hash", "p", "prev_hash", "researcher_key", "sigma",
                     "tau", "timestamp"):
            if not isinstance(obj[name], str):
                raise LedgerFormatError("%s must be a string" % name)
        sigs = []
        for s in obj["signatures"]:
            if set(s) != {"server", "signature"} or not isinstance(s["server"], int) \
                    or not isinstance(s["signature"], str):
                raise LedgerFormatError("malformed signature record")
            sigs.append(Signature(s["server"], s["signature"]))
        cert = Certificate(obj["rho"], obj["sigma"], obj["tau"], obj["p"], obj["decision"],
                           obj["researcher_key"], obj["timestamp"])
        return cls(cert, obj["prev_hash"], obj["entry_hash"], tuple(sigs),
                   obj.get("spec"), obj.get("request"), obj.get("config"))


def request_bytes(spec: TestSpec | dict[str, Any], nonce: str) -> bytes:
    """Bytes a researcher signs to request a test."""
    spec_json = spec.to_json() if isinstance(spec, TestSpec) else spec
    return canonical_json({"nonce": nonce, "spec": spec_json})


def sign_request(key: Ed25519PrivateKey, spec: TestSpec, nonce: str) -> str:
    return key.sign(request_bytes(spec, nonce)).hex()


def verify_request(researcher_key: str, spec: TestSpec | dict[str, Any], nonce: str,
                   signature: str) -> bool:
    try:
        load_public_key_hex(researcher_key).verify(bytes.fromhex(signature),
                                                   request_bytes(spec, nonce))
        return True
    except (InvalidSignature, ValueError):
        return False


class ServerSigner:
    """A computing server's ledger signing key."""

    def __init__(self, server_id: int, key: Ed25519PrivateKey) -> None:
        self.server_id = server_id
        self.key = key

    @property
    def public_hex(self) -> str:
        return public_key_hex(self.key.public_key())

    def sign(self, entry_hash: str) -> Signature:
        return Signature(self.server_id, self.key.sign(bytes.fromhex(entry_hash)).hex())


def verify_signature(config: GenesisConfig, entry_hash: str, sig: Signature) -> bool:
    key_hex = config.server_keys.get(sig.server)
    if key_hex is None or not _HEX.match(sig.signature):
        return False
    try:
        load_public_key_hex(key_hex).verify(bytes.fromhex(sig.signature), bytes.fromhex(entry_hash))
        return True
    except (InvalidSignature, ValueError):
        return False


def check_signatures(config: GenesisConfig, entry_hash: str, sigs: Sequence[Signature]) -> None:
    servers = [s.server for s in sigs]
    if len(set(servers)) != len(servers):
        raise SignatureError("duplicate server signature")
    for s in sigs:
        if not verify_signature(config, entry_hash, s):
            raise SignatureError("signature of server %d does not verify" % s.server)
    if len(sigs) < config.quorum:
        raise QuorumError("%d signatures, quorum is %d" % (len(sigs), config.quorum))


# ---------------------------------------------------------------------------
# the log


class TestLog:
    """In-memory view of a log, optionally backed by a JSONL file."""

    __test__ = False

    def __init__(self, entries: Sequence[LogEntry], path: str | os.PathLike[str] | None = None) -> None:
        if not entries:
            raise LedgerFormatError("a log needs its genesis entry")
        self.entries = list(entries)
        self.path = Path(path) if path is not None else None
        self.config = GenesisConfig.from_json(self.entries[0].config or {})

    @classmethod
    def create(cls, config: GenesisConfig, signers: Sequence[ServerSigner],
               path: str | os.PathLike[str] | None = None, timestamp: str | None = None) -> TestLog:
        cert = Certificate.genesis(timestamp or utc_timestamp())
        prev = config.digest()
        h = cert.entry_hash(prev)
        sigs = tuple(s.sign(h) for s in signers)
        check_signatures(config, h, sigs)
        entry = LogEntry(cert, prev, h, sigs, config=config.to_json())
        log = cls([entry], path)
        if log.path is not None:
            if log.path.exists() and log.path.stat().st_size:
                raise LedgerError("refusing to overwrite existing log %s" % log.path)
            log._write_line(entry, mode="w")
        return log

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> TestLog:
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise LedgerFormatError("cannot read log: %s" % exc) from exc
        return cls(parse_log_bytes(data), path)

    @property
    def last(self) -> LogEntry:
        return self.entries[-1]

    @property
    def next_rho(self) -> int:
        return self.last.rho + 1

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, rho: int) -> LogEntry:
        if not 0 <= rho < len(self.entries):
            raise EntryNotFound("no entry with rho=%d (log ends at %d)" % (rho, self.last.rho))
        return self.entries[rho]

    def nonces(self) -> set[str]:
        return {e.request["nonce"] for e in self.entries[1:] if e.request}

    def alpha_state(self) -> AlphaState:
        """Wealth after replaying every certified decision."""
        return replay_log(self.entries, self.config.alpha)[-1]

    def prepare(self, cert: Certificate) -> str:
        """Entry hash the servers must sign for ``cert``."""
        return cert.entry_hash(self.last.entry_hash)

    def append_entry(self, cert: Certificate, signatures: Sequence[Signature],
                     spec: TestSpec | None = None, request: dict[str, Any] | None = None) -> LogEntry:
        if cert.rho <= self.last.rho:
            raise DuplicateRhoError("rho %d already on the log" % cert.rho)
        if cert.rho != self.next_rho:
            raise RhoGapError("expected rho %d, got %d" % (self.next_rho, cert.rho))
        h = self.prepare(cert)
        check_signatures(self.config, h, list(signatures))
        entry = LogEntry(cert, self.last.entry_hash, h, tuple(signatures),
                         spec.to_json() if spec is not None else None, request)
        problem = _check_entry_body(entry, self.config, self.nonces())
        if problem:
            raise LedgerFormatError(problem)
        if self.path is not None:
            self._write_line(entry, mode="a")
        self.entries.append(entry)
        return entry

    def _write_line(self, entry: LogEntry, mode: str) -> None:
        assert self.path is not None
        with open(self.path, mode, encoding="utf-8", newline="\n") as fh:
            fh.write(entry.to_line() + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def to_bytes(self) -> bytes:
        return "".join(e.to_line() + "\n" for e in self.entries).encode("utf-8")


def _reject_duplicate_keys(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for k, v in pairs:
        if k in out:
            raise LedgerFormatError("duplicate key %r" % k)
        out[k] = v
    return out


def _parse_line(line: str) -> LogEntry:
    try:
        obj = json.loads(line, object_pairs_hook=_reject_duplicate_keys)
    except (json.JSONDecodeError, RecursionError) as exc:
        raise LedgerFormatError("invalid JSON: %s" % exc) from exc
    if not isinstance(obj, dict):
        raise LedgerFormatError("entry is not an object")
    entry = LogEntry.from_json(obj)
    if entry.to_line() != line:
        raise LedgerFormatError("entry is not in canonical form")
    return entry


def parse_log_bytes(data: bytes) -> list[LogEntry]:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise LedgerFormatError("log is not UTF-8") from exc
    if not text.endswith("\n"):
        raise LedgerFormatError("log must end with a newline")
    lines = text[:-1].split("\n")
    return [_parse_line(line) for line in lines]


# ---------------------------------------------------------------------------
# verification and audit


@dataclass(frozen=True)
class LogVerification:
    ok: bool
    failed_index: int | None = None
    reason: str = ""
    entries: int = 0

    def __bool__(self) -> bool:
        return self.ok


def _check_entry_body(entry: LogEntry, config: GenesisConfig, seen_nonces: set[str]) -> str:
    """Field-level checks for a non-genesis entry; returns a problem or ''."""
    c = entry.certificate
    if c.decision not in (REJECT, ACCEPT):
        return "decision must be reject or accept"
    if not _HEX64.match(c.researcher_key):
        return "researcher key must be 32 lowercase hex bytes"
    if not _TIMESTAMP.match(c.timestamp):
        return "timestamp is not RFC 3339 UTC"
    if config.mode == MODE_BIT:
        if c.tau != BIT or c.p_value != BIT:
            return "significance-bit log must carry BIT for tau and p"
    else:
        if not (_DEC12.match(c.tau) and _DEC12.match(c.p_value)):
            return "tau and p must be 12-decimal strings"
        if not 0.0 <= float(c.p_value) <= 1.0:
            return "p outside [0, 1]"
    if entry.spec is None or entry.request is None:
        return "entry lacks its test spec or request"
    try:
        spec = TestSpec.from_json(entry.spec)
    except (SpecError, KeyError, TypeError, ValueError) as exc:
        return "invalid spec: %s" % exc
    if spec.to_json() != entry.spec or spec.sigma != c.sigma:
        return "sigma does not match the recorded spec"
    req = entry.request
    if set(req) != {"nonce", "signature"} or not all(isinstance(v, str) for v in req.values()):
        return "malformed request record"
    if not _HEX.match(req["nonce"]) or not _HEX.match(req["signature"]):
        return "request fields must be lowercase hex"
    if req["nonce"] in seen_nonces:
        return "replayed request nonce"
    if not verify_request(c.researcher_key, spec, req["nonce"], req["signature"]):
        return "researcher signature does not verify"
    return ""


def verify_entries(entries: Sequence[LogEntry]) -> LogVerification:
    if not entries:
        return LogVerification(False, 0, "empty log")
    g = entries[0]
    try:
        config = GenesisConfig.from_json(g.config or {})
    except (KeyError, TypeError, ValueError) as exc:
        return LogVerification(False, 0, "bad genesis config: %s" % exc)
    if g.config != config.to_json():
        return LogVerification(False, 0, "genesis config not canonical")
    gc = g.certificate
    if (gc.rho, gc.sigma, gc.tau, gc.p_value, gc.decision, gc.researcher_key) != (0, BOT, BOT, BOT, BOT, BOT):
        return LogVerification(False, 0, "genesis is not (0, BOT, BOT)")
    if not _TIMESTAMP.match(gc.timestamp):
        return LogVerification(False, 0, "bad genesis timestamp")
    if g.spec is not None or g.request is not None:
        return LogVerification(False, 0, "genesis carries a test")
    if g.prev_hash != config.digest():
        return LogVerification(False, 0, "genesis does not anchor its config")
    seen: set[str] = set()
    for i, e in enumerate(entries):
        if e.rho != i:
            return LogVerification(False, i, "rho %d at position %d" % (e.rho, i))
        if i > 0:
            if e.config is not None:
                return LogVerification(False, i, "config outside genesis")
            if e.prev_hash != entries[i - 1].entry_hash:
                return LogVerification(False, i, "broken hash link")
            problem = _check_entry_body(e, config, seen)
            if problem:
                return LogVerification(False, i, problem)
            seen.add(e.request["nonce"])
        if e.entry_hash != e.certificate.entry_hash(e.prev_hash):
            return LogVerification(False, i, "entry hash mismatch")
        try:
            check_signatures(config, e.entry_hash, e.signatures)
        except LedgerError as exc:
            return LogVerification(False, i, str(exc))
    return LogVerification(True, None, "", len(entries))


def verify_log(source: TestLog | bytes | str | os.PathLike[str]) -> LogVerification:
    """Check genesis, every hash link, hash, signature and quorum."""
    try:
        if isinstance(source, TestLog):
            data = source.to_bytes()
        elif isinstance(source, bytes):
            data = source
        else:
            data = Path(source).read_bytes()
        entries = parse_log_bytes(data)
    except (LedgerError, OSError) as exc:
        return LogVerification(False, 0, str(exc))
    return verify_entries(entries)


def _p_of(entry: LogEntry) -> float | None:
    return None if entry.certificate.is_bit else float(entry.certificate.p_value)


def replay_log(entries: Sequence[LogEntry], params: AlphaParams) -> list[AlphaState]:
    """Wealth states before entry 1, after entry 1, ... after the last entry."""
    state = AlphaState.initial(params)
    states = [state]
    for e in entries[1:]:
        a = next_alpha(state, params)
        p = _p_of(e)
        reject = e.certificate.rejected if p is None else is_rejection(p, a)
        state = apply_decision(state, reject, a, params)
        states.append(state)
    return states


@dataclass
class AuditReport:
    rho: int
    valid: bool
    reason: str = ""
    alpha_rho: float | None = None
    p_value: float | None = None
    recorded_decision: str | None = None
    recomputed_decision: str | None = None
    wealth: list[float] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)


def _load_entries(source: TestLog | bytes | str | os.PathLike[str]) -> list[LogEntry]:
    if isinstance(source, TestLog):
        return source.entries
    if isinstance(source, bytes):
        return parse_log_bytes(source)
    try:
        data = Path(source).read_bytes()
    except OSError as exc:
        raise LedgerFormatError("cannot read log: %s" % exc) from exc
    return parse_log_bytes(data)


def perform_audit(source: TestLog | bytes | str | os.PathLike[str], rho: int,
                  params: AlphaParams | None = None) -> AuditReport:
    """Offline check that entry ``rho``'s decision follows from the log prefix.

    Raises :class:`LedgerFormatError` for an unreadable log and
    :class:`EntryNotFound` if ``rho`` is past its end.
    """
    entries = _load_entries(source)
    if rho < 1:
        raise EntryNotFound("rho must be >= 1 (entry 0 is the genesis record)")
    if rho >= len(entries):
        raise EntryNotFound("no entry with rho=%d (log ends at %d)" % (rho, len(entries) - 1))
    prefix = entries[: rho + 1]
    check = verify_entries(prefix)
    if not check:
        return AuditReport(rho, False, "log verification failed at entry %s: %s"
                           % (check.failed_index, check.reason))
    params = params or GenesisConfig.from_json(entries[0].config or {}).alpha
    states = replay_log(prefix[:-1], params)
    wealth = [s.wealth for s in states]
    alphas = []
    state = states[0]
    for s in states[1:]:
        alphas.append(next_alpha(state, params))
        state = s
    a_rho = next_alpha(states[-1], params)
    alphas.append(a_rho)
    entry = prefix[-1]
    recorded = entry.certificate.decision
    p = _p_of(entry)
    report = AuditReport(rho, True, "", a_rho, p, recorded, None, wealth, alphas)
    if p is None:
        report.reason = "significance bit: decision attested by server quorum"
        return report
    recomputed = REJECT if is_rejection(p, a_rho) else ACCEPT
    report.recomputed_decision = recomputed
    if recomputed != recorded:
        report.valid = False
        report.reason = "recorded %s but p=%s vs alpha=%.12g gives %s" % (
            recorded, entry.certificate.p_value, a_rho, recomputed)
    return report


def audit_all(source: TestLog | bytes | str | os.PathLike[str]) -> list[AuditReport]:
    entries = _load_entries(source)
    return [perform_audit(TestLog(entries), rho) for rho in range(1, len(entries))]


def decision_for(p: float, state: AlphaState, params: AlphaParams) -> tuple[float, str]:
    """(alpha_j, decision) for a p-value already rounded to its logged form."""
    a = next_alpha(state, params)
    return a, REJECT if is_rejection(p, a) else ACCEPT

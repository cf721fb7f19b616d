"""End-to-end protocol driver: owner setup, test execution and auditing.

A *deployment* is a directory produced by :func:`owner_setup`::

    deployment.json      servers, threshold, policy, relative paths
    exploration.csv      the released part of the data
    dataset/             the encrypted validation part
    ledger.jsonl         the public test log
    attempts.jsonl       every request, including failed ones (quota input)
    keys/server-<i>.json Paillier key share + ledger signing key (mode 0600)

Every computing server runs :func:`server_program` in lockstep; party 1
also acts as coordinator (quota, attempt log, appending to the ledger).
"""

from __future__ import annotations

import json
import logging
import os
import random
import secrets
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

from starcert import paillier
from starcert.alpha import AlphaParams
from starcert.circuits import (
    CHISQ,
    FTEST,
    PEARSON,
    TTEST,
    Moments,
    SpecError,
    TestSpec,
    TestStatisticPair,
    chisq_circuit,
    columns_moments,
    ftest_from_moments,
    pearson_from_moments,
    reveal_statistic,
    significance_circuit,
    triples_needed,
    ttest_from_moments,
)
from starcert.dataset import (
    CATEGORICAL,
    CONTINUOUS,
    AttributeMeta,
    DatasetMetadata,
    EncryptedDataset,
    cell_budget,
    read_csv,
    split_rows,
    square_budget,
    write_csv,
)
from starcert.fixedpoint import DEFAULT_PRECISION, MagnitudeBudget
from starcert.ledger import (
    ACCEPT,
    BIT,
    MODE_BIT,
    MODE_FULL,
    REJECT,
    AuditReport,
    Certificate,
    GenesisConfig,
    ServerSigner,
    Signature,
    TestLog,
    canonical_json,
    check_signatures,
    fmt12,
    load_private_key_hex,
    next_alpha,
    perform_audit,
    private_key_hex,
    public_key_hex,
    quorum_size,
    sha256_hex,
    sign_request,
    signing_key,
    utc_timestamp,
    verify_request,
)
from starcert.mpc.engine import AdditiveShare, Party
from starcert.mpc.runner import run_local
from starcert.mpc.transport import LocalBus, Tag, Transport
from starcert.paillier import PaillierKeyShare, PaillierParams
from starcert.pvalues import test_critical_value, test_p_value

log = logging.getLogger(__name__)

KEY_DIR_ENV = "STARCERT_KEY_DIR"
DEFAULT_QUOTA = 20
DAY_SECONDS = 86_400


class RequestRejected(ValueError):
    """The request failed validation before any computation."""


class QuotaExceeded(RequestRejected):
    pass


class TestAborted(RuntimeError):
    """The computation started but produced no certificate."""

    __test__ = False


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RevealPolicy:
    mode: str = MODE_FULL
    quota: int = DEFAULT_QUOTA
    window_seconds: int = DAY_SECONDS

    def __post_init__(self) -> None:
        if self.mode not in (MODE_FULL, MODE_BIT):
            raise ValueError("unknown reveal mode %r" % self.mode)
        if self.quota < 1 or self.window_seconds < 1:
            raise ValueError("quota and window must be positive")

    def to_json(self) -> dict[str, Any]:
        return {"mode": self.mode, "quota": self.quota, "window_seconds": self.window_seconds}

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> RevealPolicy:
        return cls(obj.get("mode", MODE_FULL), int(obj.get("quota", DEFAULT_QUOTA)),
                   int(obj.get("window_seconds", DAY_SECONDS)))


@dataclass
class SetupConfig:
    n_servers: int = 3
    threshold: int = 2
    modulus_bits: int = 2048
    alpha: AlphaParams = field(default_factory=lambda: AlphaParams(0.05, 0.5, 0.0125))
    precision: int = DEFAULT_PRECISION
    policy: RevealPolicy = field(default_factory=RevealPolicy)
    exploration_fraction: float = 0.75
    owner_squares: bool = False
    seed: int | None = None
    primes: tuple[int, int] | None = None
    keygen_timeout: float | None = None

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> SetupConfig:
        a = obj.get("alpha", {})
        return cls(
            n_servers=int(obj.get("n_servers", 3)),
            threshold=int(obj.get("threshold", 2)),
            modulus_bits=int(obj.get("modulus_bits", 2048)),
            alpha=AlphaParams(float(a.get("alpha", 0.05)), float(a.get("beta", 0.5)),
                              float(a.get("gamma", 0.0125))),
            precision=int(obj.get("precision", DEFAULT_PRECISION)),
            policy=RevealPolicy.from_json(obj.get("policy", {})),
            exploration_fraction=float(obj.get("exploration_fraction", 0.75)),
            owner_squares=bool(obj.get("owner_squares", False)),
            seed=obj.get("seed"),
            primes=tuple(obj["primes"]) if obj.get("primes") else None,
            keygen_timeout=obj.get("keygen_timeout"),
        )


@dataclass
class ServerKeys:
    index: int
    keyshare: PaillierKeyShare
    signer: ServerSigner

    def to_json(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "paillier_share": paillier.keyshare_to_json(self.keyshare),
            "signing_key": private_key_hex(self.signer.key),
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> ServerKeys:
        idx = int(obj["index"])
        return cls(idx, paillier.keyshare_from_json(obj["paillier_share"]),
                   ServerSigner(idx, load_private_key_hex(obj["signing_key"])))


def key_dir(deployment: str | os.PathLike[str]) -> Path:
    override = os.environ.get(KEY_DIR_ENV)
    return Path(override) if override else Path(deployment) / "keys"


def load_server_keys(deployment: str | os.PathLike[str], index: int) -> ServerKeys:
    path = key_dir(deployment) / ("server-%d.json" % index)
    return ServerKeys.from_json(json.loads(path.read_text()))


# ---------------------------------------------------------------------------
# owner setup


@dataclass
class Deployment:
    root: Path
    dataset: EncryptedDataset
    ledger: TestLog
    servers: list[ServerKeys]
    policy: RevealPolicy

    @property
    def metadata(self) -> DatasetMetadata:
        return self.dataset.metadata

    @classmethod
    def load(cls, root: str | os.PathLike[str]) -> Deployment:
        root = Path(root)
        info = json.loads((root / "deployment.json").read_text())
        dataset = EncryptedDataset.load(root / info["dataset"])
        ledger = TestLog.load(root / info["ledger"])
        servers = [load_server_keys(root, i) for i in range(1, int(info["n_servers"]) + 1)]
        return cls(root, dataset, ledger, servers, RevealPolicy.from_json(info["policy"]))

    def service(self, **kwargs: Any) -> StarService:
        return StarService(self.dataset, self.ledger, self.servers, self.policy,
                           attempts_path=self.root / "attempts.jsonl", **kwargs)


def metadata_digest(meta: DatasetMetadata) -> str:
    return sha256_hex(canonical_json(meta.to_json()))


def owner_setup(csv_path: str | os.PathLike[str], attributes: Sequence[AttributeMeta],
                out_dir: str | os.PathLike[str], config: SetupConfig,
                timestamp: str | None = None) -> Deployment:
    """Split, encrypt, deal keys and write the genesis entry."""
    out = Path(out_dir)
    if (out / "ledger.jsonl").exists():
        raise FileExistsError("%s already holds a deployment" % out)
    rows = read_csv(csv_path, attributes)
    if not rows:
        raise SpecError("CSV has no data rows")
    rng = random.Random(config.seed) if config.seed is not None else random.SystemRandom()
    exploration, validation = split_rows(rows, config.exploration_fraction,
                                         seed=rng.randrange(2**63))
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "exploration.csv", attributes, exploration)

    params = PaillierParams(config.modulus_bits, config.n_servers, config.threshold)
    dealing = paillier.deal(params, rng, timeout=config.keygen_timeout, primes=config.primes)
    meta = DatasetMetadata(list(attributes), len(validation), len(exploration),
                           config.precision, config.owner_squares)
    dataset = EncryptedDataset.encrypt(meta, dealing.public_key, validation, rng, dealing.secret)
    dataset.save(out / "dataset")

    servers = []
    keys_path = out / "keys"
    keys_path.mkdir(exist_ok=True)
    for share in dealing.shares:
        seed = rng.randbytes(32) if config.seed is not None else None
        sk = ServerKeys(share.index, share, ServerSigner(share.index, signing_key(seed)))
        paillier.write_secret_json(keys_path / ("server-%d.json" % share.index), sk.to_json())
        servers.append(sk)
    paillier.save_public_key(keys_path / "public_key.json", dealing.public_key)

    genesis = GenesisConfig(
        config.alpha,
        {s.index: s.signer.public_hex for s in servers},
        quorum_size(len(servers)),
        config.policy.to_json(),
        {"metadata_sha256": metadata_digest(meta),
         "public_key_sha256": dealing.public_key.fingerprint()},
    )
    ledger = TestLog.create(genesis, [s.signer for s in servers], out / "ledger.jsonl", timestamp)
    info = {
        "attempts": "attempts.jsonl",
        "dataset": "dataset",
        "ledger": "ledger.jsonl",
        "n_servers": config.n_servers,
        "policy": config.policy.to_json(),
        "threshold": config.threshold,
    }
    (out / "deployment.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    return Deployment(out, dataset, ledger, servers, config.policy)


# ---------------------------------------------------------------------------
# requests and attempts


@dataclass(frozen=True)
class TestRequest:
    __test__ = False

    spec: TestSpec
    researcher_key: str
    nonce: str
    signature: str

    @classmethod
    def create(cls, spec: TestSpec, key, nonce: str | None = None) -> TestRequest:
        nonce = nonce or secrets.token_hex(16)
        return cls(spec, public_key_hex(key.public_key()), nonce, sign_request(key, spec, nonce))

    def verify(self) -> bool:
        return verify_request(self.researcher_key, self.spec, self.nonce, self.signature)

    def to_json(self) -> dict[str, Any]:
        return {"nonce": self.nonce, "researcher_key": self.researcher_key,
                "signature": self.signature, "spec": self.spec.to_json()}

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> TestRequest:
        return cls(TestSpec.from_json(obj["spec"]), obj["researcher_key"], obj["nonce"], obj["signature"])


class AttemptLog:
    """Append-only record of every request; feeds the quota check."""

    def __init__(self, path: str | os.PathLike[str] | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self.records: list[dict[str, Any]] = []
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                self.records = [json.loads(line) for line in fh if line.strip()]

    def record(self, **fields: Any) -> None:
        self.records.append(fields)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(fields, sort_keys=True) + "\n")

    def count_since(self, researcher: str, since: datetime) -> int:
        cutoff = since.timestamp()
        return sum(1 for r in self.records
                   if r.get("researcher") == researcher and r.get("epoch", 0) >= cutoff
                   and r.get("outcome") != "quota-exceeded")


# ---------------------------------------------------------------------------
# the per-server program


@dataclass(frozen=True)
class TestContext:
    __test__ = False

    request: TestRequest
    rho: int
    prev_hash: str
    alpha_j: float
    mode: str
    epoch: int
    critical: float | None = None


@dataclass
class PartyOutcome:
    certificate: Certificate
    signatures: list[Signature]
    statistic: float | None = None
    p_value: float | None = None


def _sig_to_int(sig: Signature) -> int:
    return int.from_bytes(b"\x01" + bytes.fromhex(sig.signature), "big")


def _sig_from_int(server: int, value: int) -> Signature:
    raw = value.to_bytes((value.bit_length() + 7) // 8, "big")
    return Signature(server, raw[1:].hex())


def validate_spec(spec: TestSpec, meta: DatasetMetadata) -> None:
    for name in spec.columns:
        try:
            attr = meta.attribute(name)
        except KeyError:
            raise SpecError("unknown column %r" % name) from None
        want = CATEGORICAL if spec.test_id == CHISQ else CONTINUOUS
        if attr.kind != want:
            raise SpecError("%s needs %s columns; %r is %s" % (spec.test_id, want, name, attr.kind))
    n = meta.n_rows
    if spec.test_id == CHISQ:
        attr = meta.attribute(spec.columns[0])
        if len(spec.probabilities or ()) != len(attr.categories):
            raise SpecError("need one null probability per category of %r" % attr.name)
    elif spec.test_id == TTEST and n < 2:
        raise SpecError("t-test needs n >= 2")
    elif spec.test_id == PEARSON and n < 3:
        raise SpecError("correlation needs n >= 3")
    elif spec.test_id == FTEST and n <= len(spec.columns):
        raise SpecError("F-test needs more rows than groups")


def test_dims(spec: TestSpec, meta: DatasetMetadata) -> tuple[int, int]:
    if spec.test_id == CHISQ:
        return meta.n_rows, len(meta.attribute(spec.columns[0]).categories)
    if spec.test_id == FTEST:
        return meta.n_rows, len(spec.columns)
    return meta.n_rows, 2


def _aggregate_moments(party: Party, ds: EncryptedDataset, names: Sequence[str]) -> list[Moments]:
    pk, phi = ds.public_key, ds.precision
    meta = ds.metadata
    cts, budgets, scales = [], [], []
    for name in names:
        attr = meta.attribute(name)
        cts += [paillier.add_all(pk, ds.column(name)), paillier.add_all(pk, ds.squares[name])]
        budgets += [cell_budget(attr, phi).scaled(ds.n_rows), square_budget(attr, phi).scaled(ds.n_rows)]
        scales += [phi, 2 * phi]
    shares = _convert(party, cts, scales, budgets)
    return [Moments(ds.n_rows, shares[2 * i], shares[2 * i + 1]) for i in range(len(names))]


def _convert(party: Party, cts, scales: Sequence[int], budgets: Sequence[MagnitudeBudget]
             ) -> list[AdditiveShare]:
    out = party.ct_to_shares(cts, 0, budgets)
    return [AdditiveShare(s.party, s.value, e, s.budget) for s, e in zip(out, scales)]


def _cells(party: Party, ds: EncryptedDataset, names: Sequence[str]) -> list[list[AdditiveShare]]:
    phi = ds.precision
    cts, budgets = [], []
    for name in names:
        cts += ds.column(name)
        budgets += [cell_budget(ds.metadata.attribute(name), phi)] * ds.n_rows
    flat = party.ct_to_shares(cts, phi, budgets)
    n = ds.n_rows
    return [flat[i * n:(i + 1) * n] for i in range(len(names))]


def build_pair(party: Party, ds: EncryptedDataset, spec: TestSpec) -> TestStatisticPair:
    """Load the spec's columns as shares and run its circuit."""
    names = list(spec.columns)
    fast = all(ds.has_squares(c) for c in names) and spec.test_id != CHISQ
    if spec.test_id == CHISQ:
        attr = ds.metadata.attribute(names[0])
        groups = ds.one_hot[attr.name]
        cts = [paillier.add_all(ds.public_key, groups[c]) for c in attr.categories]
        counts = party.ct_to_shares(cts, 0, MagnitudeBudget(ds.n_rows))
        return chisq_circuit(party, counts, spec.probabilities, ds.n_rows, ds.precision)
    if spec.test_id == TTEST:
        if fast:
            mx, my = _aggregate_moments(party, ds, names)
        else:
            mx, my = columns_moments(party, _cells(party, ds, names))
        return ttest_from_moments(party, mx, my)
    if spec.test_id == PEARSON:
        x, y = _cells(party, ds, names)
        if fast:
            mx, my = _aggregate_moments(party, ds, names)
            cross = party.sum(party.mul(x, y))
        else:
            prods = party.mul(x + y + x, x + y + y)
            n = len(x)
            mx = Moments(n, party.sum(x), party.sum(prods[:n]))
            my = Moments(n, party.sum(y), party.sum(prods[n:2 * n]))
            cross = party.sum(prods[2 * n:])
        return pearson_from_moments(party, mx, my, cross)
    if spec.test_id == FTEST:
        if fast:
            moments = _aggregate_moments(party, ds, names)
        else:
            moments = columns_moments(party, _cells(party, ds, names))
        return ftest_from_moments(party, moments)
    raise SpecError("unknown test id %r" % spec.test_id)


def server_program(party: Party, ds: EncryptedDataset, ctx: TestContext, signer: ServerSigner,
                   go: bool = True) -> PartyOutcome:
    """What every server runs for one request, in lockstep with the others."""
    # party 1 decides go/no-go and fixes the timestamp
    got = party.net.exchange(Tag.CONTROL, [int(go), ctx.epoch] if party.id == 1 else [0, 0])
    lead_go, epoch = got[1]
    if not lead_go:
        raise TestAborted("coordinator declined the request")
    spec = ctx.request.spec
    if not ctx.request.verify():
        raise RequestRejected("researcher signature does not verify")
    validate_spec(spec, ds.metadata)
    n, k = test_dims(spec, ds.metadata)
    fast = all(ds.has_squares(c) for c in spec.columns)
    party.preprocess(triples_needed(spec.test_id, n, k, owner_squares=fast,
                                    bit_mode=ctx.mode == MODE_BIT))
    pair = build_pair(party, ds, spec)
    stat = p = None
    if ctx.mode == MODE_BIT:
        assert ctx.critical is not None
        bit = significance_circuit(party, pair, ctx.critical, ds.precision, spec.sidedness)
        tau = p_str = BIT
        decision = REJECT if bit else ACCEPT
    else:
        result = reveal_statistic(party, pair)
        stat = result.value
        p = test_p_value(spec.test_id, stat, n, k, spec.sidedness)
        tau, p_str = fmt12(stat), fmt12(p)
        decision = REJECT if float(p_str) <= ctx.alpha_j else ACCEPT
    ts = utc_timestamp(datetime.fromtimestamp(epoch, timezone.utc))
    cert = Certificate(ctx.rho, spec.sigma, tau, p_str, decision, ctx.request.researcher_key, ts)
    mine = signer.sign(cert.entry_hash(ctx.prev_hash))
    got = party.net.exchange(Tag.CONTROL, [_sig_to_int(mine)])
    sigs = [_sig_from_int(j, vals[0]) for j, vals in sorted(got.items())]
    return PartyOutcome(cert, sigs, stat, p)


# ---------------------------------------------------------------------------
# the service


class StarService:
    """Runs requests against a deployment with all servers in this process."""

    def __init__(self, dataset: EncryptedDataset, ledger: TestLog, servers: Sequence[ServerKeys],
                 policy: RevealPolicy, *, attempts_path: str | os.PathLike[str] | None = None,
                 clock: Callable[[], datetime] | None = None, seed: int | None = None,
                 timeout: float = 600.0) -> None:
        self.dataset = dataset
        self.ledger = ledger
        self.servers = sorted(servers, key=lambda s: s.index)
        self.policy = policy
        self.attempts = AttemptLog(attempts_path)
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.seed = seed
        self.timeout = timeout
        self._lock = threading.Lock()
        self._runs = 0
        if policy.mode != ledger.config.mode:
            raise ValueError("policy mode differs from the genesis entry")

    def context(self, request: TestRequest, now: datetime) -> TestContext:
        state = self.ledger.alpha_state()
        a = next_alpha(state, self.ledger.config.alpha)
        critical = None
        if self.policy.mode == MODE_BIT:
            n, k = test_dims(request.spec, self.dataset.metadata)
            critical = test_critical_value(request.spec.test_id, a, n, k, request.spec.sidedness)
        return TestContext(request, self.ledger.next_rho, self.ledger.last.entry_hash, a,
                           self.policy.mode, int(now.timestamp()), critical)

    def _record(self, request: TestRequest, now: datetime, outcome: str, detail: str = "",
                rho: int | None = None) -> None:
        self.attempts.record(researcher=request.researcher_key, nonce=request.nonce,
                             test=request.spec.sigma, time=utc_timestamp(now), epoch=now.timestamp(),
                             outcome=outcome, detail=detail, rho=rho)

    def check_request(self, request: TestRequest, now: datetime) -> None:
        since = now - timedelta(seconds=self.policy.window_seconds)
        if self.attempts.count_since(request.researcher_key, since) >= self.policy.quota:
            raise QuotaExceeded("quota of %d tests per %ds exhausted"
                                % (self.policy.quota, self.policy.window_seconds))
        if not request.verify():
            raise RequestRejected("researcher signature does not verify")
        if request.nonce in self.ledger.nonces():
            raise RequestRejected("request nonce already used")
        validate_spec(request.spec, self.dataset.metadata)
        if self.policy.mode == MODE_BIT and request.spec.test_id in (TTEST, PEARSON) \
                and request.spec.sidedness != "two-sided":
            raise RequestRejected("significance-bit mode supports two-sided t and correlation only")

    def compute_test(self, request: TestRequest) -> Certificate:
        """Run one request end to end and append its certificate."""
        with self._lock:
            now = self.clock()
            try:
                self.check_request(request, now)
            except QuotaExceeded as exc:
                self._record(request, now, "quota-exceeded", str(exc))
                raise
            except (RequestRejected, SpecError) as exc:
                self._record(request, now, "rejected", str(exc))
                raise
            ctx = self.context(request, now)
            self._runs += 1
            seed = None if self.seed is None else self.seed * 1_000_003 + self._runs
            by_index = {s.index: s for s in self.servers}
            try:
                outcomes = run_local(
                    self.dataset.public_key, [s.keyshare for s in self.servers],
                    lambda party: server_program(party, self.dataset, ctx, by_index[party.id].signer),
                    seed=seed, bus=LocalBus(len(self.servers), timeout=self.timeout),
                )
                cert = outcomes[0].certificate
                if any(o.certificate != cert for o in outcomes):
                    raise TestAborted("servers disagree on the certificate")
                sigs = outcomes[0].signatures
                check_signatures(self.ledger.config, self.ledger.prepare(cert), sigs)
                self.ledger.append_entry(cert, sigs, request.spec,
                                         {"nonce": request.nonce, "signature": request.signature})
            except Exception as exc:
                kind = type(exc).__name__
                self._record(request, now, "failed", "%s: %s" % (kind, exc))
                if isinstance(exc, (TestAborted, RequestRejected)):
                    raise
                raise TestAborted("%s: %s" % (kind, exc)) from exc
            self._record(request, now, "ok", rho=cert.rho)
            return cert


def run_tcp_server(deployment: str | os.PathLike[str], party_id: int, request: TestRequest,
                   transport: Transport, epoch: int | None = None) -> PartyOutcome:
    """One server's side of a request over a network transport.

    Every server needs the dataset and a current copy of the ledger; party 1
    additionally enforces the quota and appends the certificate.
    """
    dep = Deployment.load(deployment)
    keys = load_server_keys(deployment, party_id)
    svc = dep.service()
    now = datetime.fromtimestamp(epoch, timezone.utc) if epoch is not None else svc.clock()
    go = True
    if party_id == 1:
        try:
            svc.check_request(request, now)
        except (RequestRejected, SpecError) as exc:
            svc._record(request, now, "rejected", str(exc))
            go = False
    ctx = svc.context(request, now)
    party = Party(dep.dataset.public_key, keys.keyshare, transport)
    outcome = server_program(party, dep.dataset, ctx, keys.signer, go)
    if party_id == 1:
        dep.ledger.append_entry(outcome.certificate, outcome.signatures, request.spec,
                                {"nonce": request.nonce, "signature": request.signature})
        svc._record(request, now, "ok", rho=outcome.certificate.rho)
    return outcome


def audit(ledger_path: str | os.PathLike[str], rho: int, params: AlphaParams | None = None) -> AuditReport:
    return perform_audit(ledger_path, rho, params)


def format_audit(report: AuditReport) -> str:
    lines = ["rho %d" % report.rho]
    for j, (w, a) in enumerate(zip(report.wealth, report.alphas), start=1):
        lines.append("  test %3d  wealth %.12f  alpha %.12f" % (j, w, a))
    if report.alpha_rho is not None:
        lines.append("alpha_rho  %.12f" % report.alpha_rho)
    if report.p_value is not None:
        lines.append("p_rho      %.12f" % report.p_value)
    if report.recorded_decision is not None:
        lines.append("decision   %s" % report.recorded_decision)
    if report.recomputed_decision is not None:
        lines.append("replayed   %s" % report.recomputed_decision)
    lines.append("verdict    %s" % ("VALID" if report.valid else "INVALID"))
    if report.reason:
        lines.append("note       %s" % report.reason)
    return "\n".join(lines)

from __future__ import annotations

import dataclasses
import json

import pytest

from starcert.alpha import AlphaParams
from starcert.circuits import TTEST, TestSpec
from starcert.ledger import (
    ACCEPT,
    BIT,
    MODE_BIT,
    REJECT,
    Certificate,
    DuplicateRhoError,
    EntryNotFound,
    GenesisConfig,
    LedgerError,
    LedgerFormatError,
    RhoGapError,
    ServerSigner,
    TestLog,
    canonical_json,
    decision_for,
    fmt12,
    perform_audit,
    public_key_hex,
    quorum_size,
    sign_request,
    signing_key,
    verify_log,
)

PARAMS = AlphaParams(0.05, 0.25, 0.0125)
TS = "2026-10-19T12:00:00Z"
SPEC = TestSpec(TTEST, ("a", "b"))


def make_log(path=None, mode="full-statistic", n_servers=3):
    signers = [ServerSigner(i, signing_key(100 + i)) for i in range(1, n_servers + 1)]
    config = GenesisConfig(PARAMS, {s.server_id: s.public_hex for s in signers}, quorum_size(n_servers),
                           {"mode": mode})
    return TestLog.create(config, signers, path, timestamp=TS), signers


RESEARCHER = signing_key(7)


def append(log, signers, p=None, decision=None, nonce=None, sign_with=None, tau="1.000000000000"):
    rho = log.next_rho
    nonce = nonce or ("%02x" % rho) * 16
    if p is None:
        cert = Certificate(rho, SPEC.sigma, BIT, BIT, decision, public_key_hex(RESEARCHER.public_key()), TS)
    else:
        p_str = fmt12(p)
        if decision is None:
            _, decision = decision_for(float(p_str), log.alpha_state(), PARAMS)
        cert = Certificate(rho, SPEC.sigma, tau, p_str, decision, public_key_hex(RESEARCHER.public_key()), TS)
    h = log.prepare(cert)
    sigs = [s.sign(h) for s in (sign_with or signers)]
    req = {"nonce": nonce, "signature": sign_request(RESEARCHER, SPEC, nonce)}
    return log.append_entry(cert, sigs, SPEC, req)


def example_log(tmp_path):
    log, signers = make_log(tmp_path / "ledger.jsonl")
    for p in (0.0012, 0.2331, 0.0049):
        append(log, signers, p)
    return log, signers


def lines(path):
    return path.read_text().splitlines()


def rewrite(path, rows):
    path.write_text("".join(r + "\n" for r in rows))


# -- format and basics ------------------------------------------------------------


def test_fmt12_and_quorum():
    assert fmt12(0.0012) == "0.001200000000"
    assert fmt12(1.0) == "1.000000000000"
    assert [quorum_size(k) for k in (1, 2, 3, 4, 5)] == [1, 2, 2, 3, 3]


def test_canonical_json_sorted_and_compact():
    assert canonical_json({"b": 1, "a": [1, 2]}) == b'{"a":[1,2],"b":1}'


def test_genesis_entry(tmp_path):
    log, _ = make_log(tmp_path / "l.jsonl")
    g = log.entries[0]
    assert g.rho == 0 and g.certificate.sigma == "BOT" and g.prev_hash == log.config.digest()
    assert verify_log(tmp_path / "l.jsonl").ok
    with pytest.raises(LedgerError):
        make_log(tmp_path / "l.jsonl")


def test_config_quorum_below_majority():
    with pytest.raises(ValueError):
        GenesisConfig(PARAMS, {1: "00" * 32, 2: "11" * 32, 3: "22" * 32}, 1, {"mode": "full-statistic"})


# -- the worked example --------------------------------------------------------------


def test_worked_example_decisions_and_audit(tmp_path):
    log, _ = example_log(tmp_path)
    assert [e.certificate.decision for e in log.entries[1:]] == [REJECT, ACCEPT, REJECT]
    reloaded = TestLog.load(tmp_path / "ledger.jsonl")
    assert reloaded.alpha_state().wealth == pytest.approx(9 / 320, abs=1e-15)
    rep = perform_audit(tmp_path / "ledger.jsonl", 3)
    assert rep.valid and rep.recomputed_decision == REJECT
    assert rep.alphas[1] == pytest.approx(3 / 67, abs=1e-15)
    assert rep.wealth == pytest.approx([0.05, 0.0625, 1 / 64], abs=1e-15)
    with pytest.raises(EntryNotFound):
        perform_audit(tmp_path / "ledger.jsonl", 4)
    with pytest.raises(EntryNotFound):
        perform_audit(tmp_path / "ledger.jsonl", 0)


def test_forged_decision_fails_audit(tmp_path):
    log, signers = make_log()
    append(log, signers, 0.0012)
    append(log, signers, 0.2331, decision=REJECT)  # a colluding quorum signs a wrong call
    assert verify_log(log).ok
    rep = perform_audit(log, 2)
    assert not rep.valid and "accept" in rep.reason


def test_boundary_p_equal_alpha_rejects():
    log, _ = make_log()
    a, _ = decision_for(0.5, log.alpha_state(), PARAMS)
    assert decision_for(a, log.alpha_state(), PARAMS)[1] == REJECT
    assert decision_for(a * (1 + 1e-12), log.alpha_state(), PARAMS)[1] == ACCEPT


# -- append-time guards ----------------------------------------------------------------


def test_append_guards(tmp_path):
    log, signers = example_log(tmp_path)
    with pytest.raises(LedgerError):
        append(log, signers, 0.5, sign_with=signers[:1])
    outsider = ServerSigner(2, signing_key(999))
    with pytest.raises(LedgerError):
        append(log, signers, 0.5, sign_with=[signers[0], outsider])
    with pytest.raises(LedgerFormatError, match="nonce"):
        append(log, signers, 0.5, nonce=log.entries[1].request["nonce"])
    cert = Certificate(2, SPEC.sigma, "1.000000000000", "0.500000000000", ACCEPT,
                       public_key_hex(RESEARCHER.public_key()), TS)
    with pytest.raises(DuplicateRhoError):
        log.append_entry(cert, [], SPEC, {})
    cert = dataclasses.replace(cert, rho=9)
    with pytest.raises(RhoGapError):
        log.append_entry(cert, [], SPEC, {})
    assert len(lines(tmp_path / "ledger.jsonl")) == 4


def test_bit_mode_log(tmp_path):
    log, signers = make_log(tmp_path / "bit.jsonl", mode=MODE_BIT)
    append(log, signers, None, REJECT)
    append(log, signers, None, ACCEPT)
    assert verify_log(tmp_path / "bit.jsonl").ok
    rep = perform_audit(tmp_path / "bit.jsonl", 2)
    assert rep.valid and rep.p_value is None and rep.recomputed_decision is None
    with pytest.raises(LedgerFormatError):
        append(log, signers, 0.01)


# -- tamper evidence -----------------------------------------------------------------


def test_tampered_p_value_detected(tmp_path):
    log, _ = example_log(tmp_path)
    path = tmp_path / "ledger.jsonl"
    rows = lines(path)
    rows[2] = rows[2].replace("0.233100000000", "0.003100000000")
    rewrite(path, rows)
    res = verify_log(path)
    assert not res.ok and res.failed_index == 2


def test_reordered_entries_detected(tmp_path):
    example_log(tmp_path)
    path = tmp_path / "ledger.jsonl"
    rows = lines(path)
    rows[2], rows[3] = rows[3], rows[2]
    rewrite(path, rows)
    assert verify_log(path).failed_index == 2


def test_dropped_entry_detected(tmp_path):
    example_log(tmp_path)
    path = tmp_path / "ledger.jsonl"
    rows = lines(path)
    rewrite(path, rows[:2] + rows[3:])
    assert verify_log(path).failed_index == 2


def test_truncated_tail_is_a_valid_prefix(tmp_path):
    example_log(tmp_path)
    path = tmp_path / "ledger.jsonl"
    rewrite(path, lines(path)[:2])
    assert verify_log(path).ok


def test_torn_write_detected(tmp_path):
    example_log(tmp_path)
    path = tmp_path / "ledger.jsonl"
    path.write_text(path.read_text()[:-20])
    assert not verify_log(path).ok


def test_stripped_signature_detected(tmp_path):
    example_log(tmp_path)
    path = tmp_path / "ledger.jsonl"
    rows = lines(path)
    obj = json.loads(rows[1])
    obj["signatures"] = obj["signatures"][:1]
    rows[1] = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    rewrite(path, rows)
    res = verify_log(path)
    assert not res.ok and res.failed_index == 1


def test_config_swap_detected(tmp_path):
    example_log(tmp_path)
    path = tmp_path / "ledger.jsonl"
    rows = lines(path)
    obj = json.loads(rows[0])
    obj["config"]["alpha"]["gamma"] = 0.05
    rows[0] = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    rewrite(path, rows)
    res = verify_log(path)
    assert not res.ok and res.failed_index == 0


def test_audit_on_tampered_prefix_is_invalid(tmp_path):
    example_log(tmp_path)
    path = tmp_path / "ledger.jsonl"
    rows = lines(path)
    rows[1] = rows[1].replace("0.001200000000", "0.001300000000")
    rewrite(path, rows)
    rep = perform_audit(path, 3)
    assert not rep.valid and "entry 1" in rep.reason

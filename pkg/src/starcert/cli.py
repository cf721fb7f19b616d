"""Command-line entry point: ``starcert <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Sequence

from starcert.alpha import AlphaParams
from starcert.circuits import SpecError, TestSpec
from starcert.dataset import AttributeMeta, DatasetError
from starcert.ledger import (
    EntryNotFound,
    LedgerError,
    load_private_key_hex,
    private_key_hex,
    signing_key,
    verify_log,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2
EXIT_CORRUPT = 3
EXIT_NOT_FOUND = 4
EXIT_REFUSED = 5


def _load_json(path: str) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _researcher_key(path: str):
    p = Path(path)
    if p.exists():
        return load_private_key_hex(p.read_text().strip())
    key = signing_key()
    fd = os.open(p, os.O_WRONLY | os.O_CREAT | os.O_EXCL, 0o600)
    with os.fdopen(fd, "w") as fh:
        fh.write(private_key_hex(key) + "\n")
    print("created researcher key %s" % p, file=sys.stderr)
    return key


def _spec_from_args(args: argparse.Namespace) -> TestSpec:
    if args.spec:
        return TestSpec.from_json(_load_json(args.spec))
    if not (args.test_id and args.columns):
        raise SpecError("give --spec FILE or both --test and --columns")
    probs = tuple(float(x) for x in args.probabilities.split(",")) if args.probabilities else None
    return TestSpec(args.test_id.upper(), tuple(args.columns.split(",")), probs, args.sidedness)


def _print_cert(cert) -> None:
    print(json.dumps({
        "rho": cert.rho, "sigma": cert.sigma, "tau": cert.tau, "p": cert.p_value,
        "decision": cert.decision, "researcher_key": cert.researcher_key, "timestamp": cert.timestamp,
    }, indent=2))


# ---------------------------------------------------------------------------
# subcommands


def cmd_setup(args: argparse.Namespace) -> int:
    from starcert.orchestrator import SetupConfig, owner_setup

    cfg_obj = _load_json(args.config)
    attrs = [AttributeMeta.from_json(a) for a in cfg_obj["attributes"]]
    cfg = SetupConfig.from_json(cfg_obj)
    if args.seed is not None:
        cfg.seed = args.seed
    dep = owner_setup(args.csv, attrs, args.out, cfg)
    print("deployment written to %s: %d validation rows, %d exploration rows, %d servers"
          % (dep.root, dep.metadata.n_rows, dep.metadata.exploration_rows, len(dep.servers)))
    return EXIT_OK


def cmd_test(args: argparse.Namespace) -> int:
    from starcert.orchestrator import Deployment, QuotaExceeded, RequestRejected, TestAborted, TestRequest

    spec = _spec_from_args(args)
    request = TestRequest.create(spec, _researcher_key(args.key))
    if args.emit_request:
        Path(args.emit_request).write_text(json.dumps(request.to_json(), indent=2, sort_keys=True) + "\n")
        print("request written to %s" % args.emit_request)
        return EXIT_OK
    dep = Deployment.load(args.deployment)
    svc = dep.service()
    try:
        cert = svc.compute_test(request)
    except QuotaExceeded as exc:
        print("refused: %s" % exc, file=sys.stderr)
        return EXIT_REFUSED
    except (RequestRejected, SpecError) as exc:
        print("rejected: %s" % exc, file=sys.stderr)
        return EXIT_REFUSED
    except TestAborted as exc:
        print("aborted: %s" % exc, file=sys.stderr)
        return EXIT_INVALID
    _print_cert(cert)
    return EXIT_OK


def _parse_addresses(text: str) -> dict[int, tuple[str, int]]:
    out = {}
    for i, item in enumerate(text.split(","), start=1):
        host, _, port = item.strip().rpartition(":")
        out[i] = (host or "127.0.0.1", int(port))
    return out


def cmd_serve(args: argparse.Namespace) -> int:
    from starcert.mpc.transport import TcpTransport
    from starcert.orchestrator import TestRequest, run_tcp_server

    request = TestRequest.from_json(_load_json(args.request))
    transport = TcpTransport(args.party, _parse_addresses(args.peers), timeout=args.timeout).connect()
    try:
        outcome = run_tcp_server(args.deployment, args.party, request, transport, epoch=args.epoch)
    finally:
        transport.close()
    if args.party == 1:
        _print_cert(outcome.certificate)
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    from starcert.orchestrator import audit, format_audit

    params = AlphaParams(args.alpha, args.beta, args.gamma) if args.alpha is not None else None
    try:
        report = audit(args.ledger, args.rho, params)
    except EntryNotFound as exc:
        print("not found: %s" % exc, file=sys.stderr)
        return EXIT_NOT_FOUND
    except (LedgerError, OSError, ValueError) as exc:
        print("corrupt or unreadable ledger: %s" % exc, file=sys.stderr)
        return EXIT_CORRUPT
    print(format_audit(report))
    return EXIT_OK if report.valid else EXIT_INVALID


def cmd_verify_log(args: argparse.Namespace) -> int:
    try:
        result = verify_log(args.ledger)
    except (LedgerError, OSError) as exc:
        print("unreadable ledger: %s" % exc, file=sys.stderr)
        return EXIT_CORRUPT
    if result.ok:
        print("ok: %d entries" % result.entries)
        return EXIT_OK
    print("FAILED at entry %s: %s" % (result.failed_index, result.reason))
    return EXIT_INVALID


def cmd_fdr_sim(args: argparse.Namespace) -> int:
    from starcert.fdrsim import SimConfig, fdr_sim, write_report

    cfg = SimConfig(
        null_fractions=tuple(float(x) for x in args.null_fractions.split(",")),
        datasets=args.datasets, attrs=args.attrs, rows=args.rows, tests=args.tests,
        params=AlphaParams(args.alpha, args.beta, args.gamma), effect=args.effect, seed=args.seed,
    )
    t0 = time.perf_counter()
    report = fdr_sim(cfg)
    paths = write_report(report, args.out, plots=not args.no_plots)
    for row in report.summary_rows():
        print("null %5.2f  FDR alpha-investing %.4f  uncorrected %.4f"
              % (row["null_fraction"], row["mean_fdr_alpha_investing"], row["mean_fdr_uncorrected"]))
    print("wrote %s (%.1fs)" % (", ".join(str(p) for p in paths), time.perf_counter() - t0))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="starcert", description="Certified statistical testing over an encrypted holdout.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("setup", help="split, encrypt and deal keys for a CSV dataset")
    p.add_argument("--config", required=True, help="JSON with attributes and setup parameters")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True, help="deployment directory to create")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("test", help="submit a test; all servers run in this process")
    p.add_argument("--deployment", default=".")
    p.add_argument("--key", required=True, help="researcher Ed25519 key (hex); created if missing")
    p.add_argument("--spec", help="test spec JSON")
    p.add_argument("--test", dest="test_id", help="TTEST, PEARSON, CHISQ or FTEST")
    p.add_argument("--columns", help="comma-separated column names")
    p.add_argument("--probabilities", help="comma-separated null probabilities (CHISQ)")
    p.add_argument("--sidedness", default="two-sided", choices=["two-sided", "greater", "less"])
    p.add_argument("--emit-request", metavar="FILE", help="only write the signed request for 'serve'")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("serve", help="run one server's side of a request over TCP")
    p.add_argument("--deployment", default=".")
    p.add_argument("--party", type=int, required=True)
    p.add_argument("--peers", required=True, help="host:port of every server, in party order")
    p.add_argument("--request", required=True, help="signed request JSON from 'test --emit-request'")
    p.add_argument("--epoch", type=int, help="shared UNIX timestamp for the certificate")
    p.add_argument("--timeout", type=float, default=120.0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("audit", help="replay the ledger and check certificate rho")
    p.add_argument("ledger")
    p.add_argument("rho", type=int)
    p.add_argument("--alpha", type=float, help="override alpha-investing parameters")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.0125)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("verify-log", help="check hash chain, signatures and indices")
    p.add_argument("ledger")
    p.set_defaults(func=cmd_verify_log)

    p = sub.add_parser("fdr-sim", help="plaintext FDR experiment; writes CSV and PNG")
    p.add_argument("--out", default="fdr-report")
    p.add_argument("--null-fractions", default="0.25,0.5,0.75,1.0")
    p.add_argument("--datasets", type=int, default=100)
    p.add_argument("--attrs", type=int, default=64)
    p.add_argument("--rows", type=int, default=1000)
    p.add_argument("--tests", type=int, default=64)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.0125)
    p.add_argument("--effect", type=float, default=0.5, help="non-null shift in uniform-column SDs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_fdr_sim)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (SpecError, DatasetError, FileExistsError, FileNotFoundError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

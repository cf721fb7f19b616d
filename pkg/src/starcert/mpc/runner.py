"""Run all parties of a protocol in one process, one thread per party."""

from __future__ import annotations

import random
import threading
from typing import Any, Callable, Sequence

from starcert.mpc.engine import Party, Tracer
from starcert.mpc.transport import LocalBus, ProtocolAbort
from starcert.paillier import PaillierKeyShare, PaillierPublicKey


def party_rng(seed: int | None, party_id: int) -> random.Random:
    if seed is None:
        return random.SystemRandom()
    return random.Random("%d/party-%d" % (seed, party_id))


def run_local(pk: PaillierPublicKey, keyshares: Sequence[PaillierKeyShare],
              program: Callable[[Party], Any], *, seed: int | None = None,
              tracer: Tracer | None = None, bus: LocalBus | None = None,
              timeout: float = 600.0) -> list[Any]:
    """Execute ``program(party)`` at every party and return the per-party results.

    If any party raises, the bus is aborted so the others unblock, and the
    first root-cause exception is re-raised (follow-on ``ProtocolAbort``
    errors from the unblocked parties are suppressed).
    """
    k = pk.n_parties
    by_index = {s.index: s for s in keyshares}
    bus = bus or LocalBus(k, timeout=timeout)
    results: list[Any] = [None] * k
    errors: list[tuple[int, BaseException]] = []
    lock = threading.Lock()

    def worker(pid: int) -> None:
        try:
            party = Party(pk, by_index.get(pid), bus.endpoint(pid),
                          rng=party_rng(seed, pid), tracer=tracer)
            results[pid - 1] = program(party)
        except BaseException as exc:  # noqa: BLE001 - re-raised in the caller
            with lock:
                errors.append((pid, exc))
            bus.abort("party %d failed: %s" % (pid, exc),
                      exc.party if isinstance(exc, ProtocolAbort) else None)

    threads = [threading.Thread(target=worker, args=(pid,), name="party-%d" % pid, daemon=True)
               for pid in range(1, k + 1)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        root = [e for _, e in errors if not (isinstance(e, ProtocolAbort) and "bus aborted" in str(e))]
        raise (root or [e for _, e in errors])[0]
    return results

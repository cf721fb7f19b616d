from __future__ import annotations

import csv
import json
import random
from pathlib import Path

import pytest

from starcert import paillier
from starcert.dataset import AttributeMeta
from starcert.mpc import run_local
from starcert.paillier import PaillierParams

DATA = Path(__file__).parent / "data"


def fixture_primes() -> tuple[int, int]:
    obj = json.loads((DATA / "safe_primes_512.json").read_text())
    return int(obj["p"]), int(obj["q"])


def make_dealing(n_parties: int = 3, threshold: int = 2, seed: int = 7):
    return paillier.deal(PaillierParams(512, n_parties, threshold), random.Random(seed),
                         primes=fixture_primes())


@pytest.fixture(scope="session")
def dealing():
    return make_dealing()


@pytest.fixture(scope="session")
def pk(dealing):
    return dealing.public_key


@pytest.fixture(scope="session")
def shares(dealing):
    return list(dealing.shares)


@pytest.fixture
def rng():
    return random.Random(12345)


@pytest.fixture
def mpc(dealing):
    """run(program) executes ``program(party)`` at all three parties."""

    def run(program, seed=1, **kwargs):
        return run_local(dealing.public_key, list(dealing.shares), program, seed=seed, **kwargs)

    return run


TOY_ATTRS = [
    AttributeMeta("a", lower=0, upper=100),
    AttributeMeta("b", lower=0, upper=100),
    AttributeMeta("c", lower=0, upper=100),
    AttributeMeta("grade", "categorical", categories=("x", "y", "z")),
]


def write_toy_csv(path: Path, rows: int = 60, seed: int = 3) -> list[list]:
    rng = random.Random(seed)
    out = []
    for _ in range(rows):
        a = rng.randint(0, 100)
        b = min(100, max(0, a + rng.randint(-25, 35)))
        out.append([a, b, rng.randint(0, 100), rng.choice("xyzx")])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([a.name for a in TOY_ATTRS])
        w.writerows(out)
    return out


def toy_deployment(root: Path, rows: int = 60, owner_squares: bool = True, **config):
    """A 512-bit deployment over the toy CSV, built with fixed seeds."""
    from starcert.orchestrator import SetupConfig, owner_setup

    root.mkdir(parents=True, exist_ok=True)
    plain = write_toy_csv(root / "owner.csv", rows=rows)
    cfg = SetupConfig(modulus_bits=512, precision=config.pop("precision", 20), owner_squares=owner_squares,
                      seed=config.pop("seed", 5), primes=fixture_primes(), **config)
    return owner_setup(root / "owner.csv", TOY_ATTRS, root / "deploy", cfg,
                       timestamp="2026-10-19T09:00:00Z"), plain

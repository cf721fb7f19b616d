"""Dataset metadata, CSV ingestion and the on-disk encrypted dataset.

An encrypted dataset is a directory::

    header.json          metadata, public key, precision, column index
    columns/c000.ct      one ciphertext per line, lowercase hex
    ...

Continuous attributes are stored as fixed-point encodings; categorical
attributes as one-hot indicator columns, one per declared category, so that
category counts are plain homomorphic sums.  Optionally the owner also
stores encrypted squares of continuous cells.
"""

from __future__ import annotations

import csv
import json
import math
import os
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from starcert import paillier
from starcert.fixedpoint import DEFAULT_PRECISION, MagnitudeBudget, encode_int
from starcert.paillier import Ciphertext, OwnerSecret, PaillierPublicKey

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
DEFAULT_BOUND = 2**31


class DatasetError(ValueError):
    pass


class SchemaMismatch(DatasetError):
    pass


class OutOfDomain(DatasetError):
    pass


class NonFiniteCell(DatasetError):
    pass


@dataclass(frozen=True)
class AttributeMeta:
    name: str
    kind: str = CONTINUOUS
    lower: float = -DEFAULT_BOUND
    upper: float = DEFAULT_BOUND
    categories: tuple[str, ...] = ()
    independence_set: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "categories", tuple(self.categories))
        if not self.name:
            raise DatasetError("attribute needs a name")
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise DatasetError("unknown attribute kind %r" % self.kind)
        if self.kind == CATEGORICAL and len(self.categories) < 2:
            raise DatasetError("categorical attribute %r needs >= 2 categories" % self.name)
        if self.kind == CATEGORICAL and len(set(self.categories)) != len(self.categories):
            raise DatasetError("duplicate categories for %r" % self.name)
        if self.kind == CONTINUOUS and not self.lower <= self.upper:
            raise DatasetError("empty domain for %r" % self.name)

    @property
    def magnitude(self) -> float:
        return max(abs(self.lower), abs(self.upper))

    def to_json(self) -> dict[str, Any]:
        obj: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.kind == CONTINUOUS:
            obj["lower"], obj["upper"] = self.lower, self.upper
        else:
            obj["categories"] = list(self.categories)
        if self.independence_set is not None:
            obj["independence_set"] = self.independence_set
        return obj

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> AttributeMeta:
        return cls(obj["name"], obj.get("kind", CONTINUOUS),
                   obj.get("lower", -DEFAULT_BOUND), obj.get("upper", DEFAULT_BOUND),
                   tuple(obj.get("categories", ())), obj.get("independence_set"))


@dataclass
class DatasetMetadata:
    """What the data owner publishes: shape, attribute kinds and domains."""

    attributes: list[AttributeMeta]
    n_rows: int = 0
    exploration_rows: int = 0
    precision: int = DEFAULT_PRECISION
    owner_squares: bool = False

    def __post_init__(self) -> None:
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise DatasetError("duplicate attribute names")

    @property
    def n_attrs(self) -> int:
        return len(self.attributes)

    def attribute(self, name: str) -> AttributeMeta:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)

    def to_json(self) -> dict[str, Any]:
        return {
            "attributes": [a.to_json() for a in self.attributes],
            "exploration_rows": self.exploration_rows,
            "n_attrs": self.n_attrs,
            "n_rows": self.n_rows,
            "owner_squares": self.owner_squares,
            "precision": self.precision,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> DatasetMetadata:
        return cls([AttributeMeta.from_json(a) for a in obj["attributes"]],
                   int(obj.get("n_rows", 0)), int(obj.get("exploration_rows", 0)),
                   int(obj.get("precision", DEFAULT_PRECISION)), bool(obj.get("owner_squares", False)))


# ---------------------------------------------------------------------------
# plaintext ingestion


def read_csv(path: str | os.PathLike[str], attributes: Sequence[AttributeMeta]) -> list[list[Any]]:
    """Parse and validate a CSV whose header names exactly the declared attributes."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch("CSV is empty") from None
        names = [a.name for a in attributes]
        if header != names:
            raise SchemaMismatch("CSV header %r does not match attributes %r" % (header, names))
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(attributes):
                raise SchemaMismatch("line %d has %d fields, expected %d" % (lineno, len(raw), len(attributes)))
            rows.append([parse_cell(a, v, lineno) for a, v in zip(attributes, raw)])
    return rows


def parse_cell(attr: AttributeMeta, value: str, lineno: int = 0) -> Any:
    if attr.kind == CATEGORICAL:
        if value not in attr.categories:
            raise OutOfDomain("line %d: %r is not a category of %s" % (lineno, value, attr.name))
        return value
    try:
        x = float(value)
    except ValueError:
        raise SchemaMismatch("line %d: %s=%r is not numeric" % (lineno, attr.name, value)) from None
    if not math.isfinite(x):
        raise NonFiniteCell("line %d: %s is not finite" % (lineno, attr.name))
    if not attr.lower <= x <= attr.upper:
        raise OutOfDomain("line %d: %s=%r outside [%r, %r]" % (lineno, attr.name, x, attr.lower, attr.upper))
    return int(x) if x.is_integer() and abs(x) < 2**53 else x


def write_csv(path: str | os.PathLike[str], attributes: Sequence[AttributeMeta], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([a.name for a in attributes])
        w.writerows(rows)


def split_rows(rows: Sequence[Any], exploration_fraction: float, seed: int | None = None
               ) -> tuple[list[Any], list[Any]]:
    """Seeded shuffle into disjoint (exploration, validation) parts."""
    if not 0.0 <= exploration_fraction < 1.0:
        raise DatasetError("exploration fraction must lie in [0, 1); the validation part cannot be empty")
    order = list(range(len(rows)))
    random.Random(seed).shuffle(order)
    cut = round(len(rows) * exploration_fraction)
    if cut >= len(rows):
        raise DatasetError("validation part would be empty")
    return [rows[i] for i in order[:cut]], [rows[i] for i in order[cut:]]


# ---------------------------------------------------------------------------
# encrypted dataset


def cell_budget(attr: AttributeMeta, precision: int) -> MagnitudeBudget:
    if attr.kind == CATEGORICAL:
        return MagnitudeBudget(1)
    return MagnitudeBudget(encode_int(attr.magnitude, precision) + 1)


def square_budget(attr: AttributeMeta, precision: int) -> MagnitudeBudget:
    b = cell_budget(attr, precision).bound
    return MagnitudeBudget(b * b)


@dataclass
class EncryptedDataset:
    metadata: DatasetMetadata
    public_key: PaillierPublicKey
    columns: dict[str, list[Ciphertext]] = field(default_factory=dict)
    squares: dict[str, list[Ciphertext]] = field(default_factory=dict)
    one_hot: dict[str, dict[str, list[Ciphertext]]] = field(default_factory=dict)

    @property
    def precision(self) -> int:
        return self.metadata.precision

    @property
    def n_rows(self) -> int:
        return self.metadata.n_rows

    def column(self, name: str) -> list[Ciphertext]:
        if name not in self.columns:
            raise KeyError("no continuous column %r" % name)
        return self.columns[name]

    def has_squares(self, name: str) -> bool:
        return name in self.squares

    @classmethod
    def encrypt(cls, metadata: DatasetMetadata, pk: PaillierPublicKey, rows: Sequence[Sequence[Any]],
                rng: random.Random | None = None, secret: OwnerSecret | None = None) -> EncryptedDataset:
        rng = rng or random.SystemRandom()
        n = pk.n
        phi = metadata.precision

        def enc(m: int) -> Ciphertext:
            if secret is not None:
                return paillier.encrypt_with_secret(pk, secret, m % n, rng)
            return paillier.encrypt(pk, m % n, rng)

        ds = cls(metadata, pk)
        for j, attr in enumerate(metadata.attributes):
            values = [row[j] for row in rows]
            if attr.kind == CATEGORICAL:
                ds.one_hot[attr.name] = {
                    cat: [enc(int(v == cat)) for v in values] for cat in attr.categories
                }
            else:
                raw = [encode_int(v, phi) for v in values]
                ds.columns[attr.name] = [enc(x) for x in raw]
                if metadata.owner_squares:
                    ds.squares[attr.name] = [enc(x * x) for x in raw]
        metadata.n_rows = len(rows)
        return ds

    # -- directory I/O ----------------------------------------------------

    def save(self, directory: str | os.PathLike[str]) -> None:
        root = Path(directory)
        (root / "columns").mkdir(parents=True, exist_ok=True)
        index: list[dict[str, Any]] = []

        def dump(cts: list[Ciphertext], entry: dict[str, Any]) -> None:
            fname = "c%03d.ct" % len(index)
            entry["file"] = fname
            index.append(entry)
            with open(root / "columns" / fname, "w", encoding="ascii") as fh:
                for ct in cts:
                    fh.write(format(ct.c, "x") + "\n")

        for name, cts in self.columns.items():
            dump(cts, {"attribute": name, "kind": "cells"})
        for name, cts in self.squares.items():
            dump(cts, {"attribute": name, "kind": "squares"})
        for name, groups in self.one_hot.items():
            for cat, cts in groups.items():
                dump(cts, {"attribute": name, "kind": "one-hot", "category": cat})
        header = {
            "columns": index,
            "metadata": self.metadata.to_json(),
            "public_key": paillier.public_key_to_json(self.public_key),
        }
        (root / "header.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory: str | os.PathLike[str], validate: bool = True) -> EncryptedDataset:
        root = Path(directory)
        header = json.loads((root / "header.json").read_text())
        meta = DatasetMetadata.from_json(header["metadata"])
        pk = paillier.public_key_from_json(header["public_key"])
        ds = cls(meta, pk)
        for entry in header["columns"]:
            with open(root / "columns" / entry["file"], encoding="ascii") as fh:
                cts = [Ciphertext(int(line, 16)) for line in fh if line.strip()]
            if len(cts) != meta.n_rows:
                raise DatasetError("column file %s has %d rows, header says %d"
                                   % (entry["file"], len(cts), meta.n_rows))
            if validate and not all(paillier.is_valid_ciphertext(pk, c) for c in cts):
                raise DatasetError("invalid ciphertext in %s" % entry["file"])
            name = entry["attribute"]
            if entry["kind"] == "cells":
                ds.columns[name] = cts
            elif entry["kind"] == "squares":
                ds.squares[name] = cts
            elif entry["kind"] == "one-hot":
                ds.one_hot.setdefault(name, {})[entry["category"]] = cts
            else:
                raise DatasetError("unknown column kind %r" % entry["kind"])
        return ds

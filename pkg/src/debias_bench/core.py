"""Shared domain types, seeded stream derivation and file formats."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent rating data."""


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RatingMatrix:
    """Dense ground-truth ratings on the unit interval."""

    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"rating matrix must be 2-D and nonempty, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("rating matrix contains non-finite values")
        if values.min() < 0.0 or values.max() > 1.0:
            raise DataError("rating matrix values must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    @property
    def num_users(self) -> int:
        return self.values.shape[0]

    @property
    def num_items(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class QuantizationSpec:
    levels: int

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 2:
            raise ValueError(f"quantization needs at least 2 levels, got {self.levels}")

    @property
    def level_set(self) -> np.ndarray:
        return np.arange(self.levels) / (self.levels - 1)

    def contains(self, values) -> np.ndarray:
        """Elementwise exact membership in the level set."""
        values = np.asarray(values, dtype=np.float64)
        idx = np.rint(values * (self.levels - 1))
        return (idx >= 0) & (idx <= self.levels - 1) & (idx / (self.levels - 1) == values)


@dataclass(frozen=True)
class ObservedDataset:
    """Sparse (user, item, value) triples over a ``num_users x num_items`` grid.

    Entries are stored in row-major (user, item) order so two datasets built
    from the same triples compare equal regardless of insertion order.
    """

    num_users: int
    num_items: int
    users: np.ndarray
    items: np.ndarray
    values: np.ndarray
    quantization: QuantizationSpec

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64).ravel()
        items = np.asarray(self.items, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if not (len(users) == len(items) == len(values)):
            raise DataError("users, items and values must have equal length")
        if self.num_users < 1 or self.num_items < 1:
            raise DataError("dataset dimensions must be positive")
        if len(users) and (users.min() < 0 or users.max() >= self.num_users):
            raise DataError("user index out of range")
        if len(items) and (items.min() < 0 or items.max() >= self.num_items):
            raise DataError("item index out of range")
        flat = users * self.num_items + items
        order = np.argsort(flat, kind="stable")
        flat = flat[order]
        if len(flat) > 1 and np.any(flat[1:] == flat[:-1]):
            raise DataError("duplicate (user, item) entry")
        if not np.all(self.quantization.contains(values)):
            raise DataError(f"value outside the {self.quantization.levels}-level set")
        object.__setattr__(self, "users", _frozen(users[order], np.int64))
        object.__setattr__(self, "items", _frozen(items[order], np.int64))
        object.__setattr__(self, "values", _frozen(values[order], np.float64))

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, ObservedDataset):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.quantization == other.quantization
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_users, self.num_items)

    @property
    def flat_index(self) -> np.ndarray:
        return self.users * self.num_items + self.items

    def mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[self.users, self.items] = True
        return m

    def dense(self, fill: float = 0.0) -> np.ndarray:
        out = np.full(self.shape, fill, dtype=np.float64)
        out[self.users, self.items] = self.values
        return out


# -- random streams ---------------------------------------------------------

@dataclass(frozen=True)
class SeedSpec:
    """Master seed from which every per-trial, per-stage stream is derived.

    A stream's entropy is the word list ``[master_seed, trial, tag_hash]`` fed
    to :class:`numpy.random.SeedSequence`, where ``tag_hash`` is the first 8
    bytes (little endian) of the BLAKE2b digest of the UTF-8 stage tag.
    SeedSequence hashes the words together, so nearby seeds and trial indices
    still give unrelated PCG64 states.
    """

    master_seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master seed must be a 64-bit unsigned integer")


def stage_hash(stage: str) -> int:
    return int.from_bytes(hashlib.blake2b(stage.encode("utf-8"), digest_size=8).digest(), "little")


def derive_stream(seed: SeedSpec | int, trial: int, stage: str) -> np.random.Generator:
    if not stage:
        raise ValueError("stage tag must be nonempty")
    if trial < 0:
        raise ValueError("trial index must be nonnegative")
    master = seed.master_seed if isinstance(seed, SeedSpec) else int(seed)
    ss = np.random.SeedSequence([master, int(trial), stage_hash(stage)])
    return np.random.Generator(np.random.PCG64(ss))


# -- serialization ----------------------------------------------------------
# Values are written with repr(), which round-trips float64 exactly.

def write_dataset(dataset: ObservedDataset, path) -> None:
    """Write ``dataset`` as ``user,item,value`` CSV with 0-based indices.

    The grid size and quantization are kept in a leading comment line so the
    file alone is enough to rebuild the dataset.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# num_users={dataset.num_users} num_items={dataset.num_items} "
                 f"levels={dataset.quantization.levels}\n")
        writer = csv.writer(fh)
        writer.writerow(["user", "item", "value"])
        for u, i, v in zip(dataset.users.tolist(), dataset.items.tolist(), dataset.values.tolist()):
            writer.writerow([u, i, repr(v)])


def read_dataset(path, num_users: int | None = None, num_items: int | None = None,
                 levels: int | None = None) -> ObservedDataset:
    path = Path(path)
    meta = {}
    users, items, values = [], [], []
    with path.open(newline="") as fh:
        first = fh.readline()
        if first.startswith("#"):
            for tok in first[1:].split():
                key, _, val = tok.partition("=")
                meta[key] = int(val)
            header = fh.readline()
        else:
            header = first
        if header.strip().replace(" ", "") != "user,item,value":
            raise DataError(f"{path}: expected header 'user,item,value'")
        for lineno, row in enumerate(csv.reader(fh), start=3 if meta else 2):
            if not row:
                continue
            try:
                u, i, v = row
                users.append(int(u))
                items.append(int(i))
                values.append(float(v))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed row {row!r}") from exc
    num_users = num_users or meta.get("num_users") or (max(users) + 1 if users else None)
    num_items = num_items or meta.get("num_items") or (max(items) + 1 if items else None)
    levels = levels or meta.get("levels")
    if num_users is None or num_items is None or levels is None:
        raise DataError(f"{path}: dimensions or quantization levels unknown")
    return ObservedDataset(num_users, num_items, np.array(users, dtype=np.int64),
                           np.array(items, dtype=np.int64), np.array(values), QuantizationSpec(levels))


def write_matrix(matrix: RatingMatrix | np.ndarray, path) -> None:
    """Dense CSV dump: a ``num_users,num_items`` header line, then one row per user."""
    values = matrix.values if isinstance(matrix, RatingMatrix) else np.asarray(matrix)
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{values.shape[0]},{values.shape[1]}\n")
        np.savetxt(fh, values, delimiter=",", fmt="%.17g")


def read_matrix(path) -> RatingMatrix:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        try:
            nu, ni = (int(x) for x in header.split(","))
        except ValueError as exc:
            raise DataError(f"{path}: bad header {header!r}") from exc
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    if values.shape != (nu, ni):
        raise DataError(f"{path}: header says {(nu, ni)} but body is {values.shape}")
    return RatingMatrix(values)

"""Categorical domain description and datasets of category indices."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

UINT64_MAX = 2**64 - 1


class SchemaError(ValueError):
    """Malformed or inconsistent schema."""


class DataError(ValueError):
    """Data that does not fit its schema."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    categories: tuple[str, ...]
    ordinal: bool = False

    @property
    def q(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class Schema:
    """Ordered features, each with an ordered list of category labels.

    Ordinal features list their categories in natural order; the flag only
    affects which splits and merges the tree search may propose.
    """

    features: tuple[FeatureSpec, ...]

    def __post_init__(self):
        if not self.features:
            raise SchemaError("schema has no features")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate feature names in {names}")
        for f in self.features:
            if len(f.categories) < 2:
                raise SchemaError(f"feature {f.name!r} needs at least 2 categories")
            if len(set(f.categories)) != len(f.categories):
                raise SchemaError(f"duplicate category labels in feature {f.name!r}")
        if self.domain_size > UINT64_MAX:
            raise SchemaError(
                f"domain size {self.domain_size} overflows a 64-bit unsigned integer"
            )

    @classmethod
    def from_dict(cls, obj: dict) -> Schema:
        try:
            feats = tuple(
                FeatureSpec(
                    name=str(f["name"]),
                    categories=tuple(str(c) for c in f["categories"]),
                    ordinal=bool(f.get("ordinal", False)),
                )
                for f in obj["features"]
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from exc
        return cls(feats)

    def to_dict(self) -> dict:
        return {
            "features": [
                {"name": f.name, "categories": list(f.categories), "ordinal": f.ordinal}
                for f in self.features
            ]
        }

    @property
    def p(self) -> int:
        return len(self.features)

    @cached_property
    def q(self) -> np.ndarray:
        return np.array([f.q for f in self.features], dtype=np.int64)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @cached_property
    def domain_size(self) -> int:
        return math.prod(f.q for f in self.features)

    def index_of(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise KeyError(name)

    def domain_points(self, limit: int = 2**22) -> np.ndarray:
        """Every configuration of the domain as a (D, p) index matrix."""
        if self.domain_size > limit:
            raise DataError(f"domain of size {self.domain_size} is too large to enumerate")
        grids = np.indices(tuple(int(v) for v in self.q)).reshape(self.p, -1).T
        return np.ascontiguousarray(grids, dtype=np.int64)

    def labels(self, point) -> tuple[str, ...]:
        return tuple(f.categories[int(v)] for f, v in zip(self.features, point))

    def encode(self, labels) -> np.ndarray:
        labels = list(labels)
        if len(labels) != self.p:
            raise DataError(f"expected {self.p} labels, got {len(labels)}")
        out = []
        for f, v in zip(self.features, labels):
            try:
                out.append(f.categories.index(str(v)))
            except ValueError:
                raise DataError(f"{v!r} is not a category of {f.name!r}") from None
        return np.array(out, dtype=np.int64)


class Dataset:
    """Rows of category indices over a schema. Immutable after construction."""

    def __init__(self, schema: Schema, rows):
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            rows = rows.reshape(0, schema.p)
        if rows.ndim != 2 or rows.shape[1] != schema.p:
            raise DataError(f"rows must have shape (n, {schema.p}), got {rows.shape}")
        if rows.shape[0] and ((rows < 0).any() or (rows >= schema.q[None, :]).any()):
            raise DataError("category index out of range for schema")
        rows = np.ascontiguousarray(rows)
        rows.flags.writeable = False
        self.schema = schema
        self.rows = rows

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, p={self.schema.p})"

    @cached_property
    def _compressed(self):
        if self.n == 0:
            return self.rows, np.zeros(0, dtype=np.int64)
        uniq, counts = np.unique(self.rows, axis=0, return_counts=True)
        uniq = np.ascontiguousarray(uniq, dtype=np.int64)
        uniq.flags.writeable = False
        return uniq, counts.astype(np.int64)

    @property
    def unique_rows(self) -> np.ndarray:
        """Distinct configurations, sorted lexicographically."""
        return self._compressed[0]

    @property
    def weights(self) -> np.ndarray:
        """Multiplicity of each row of :attr:`unique_rows`."""
        return self._compressed[1]

    def subset(self, index) -> Dataset:
        return Dataset(self.schema, self.rows[np.asarray(index, dtype=np.int64)])


def load_schema(path) -> Schema:
    """Read and validate a schema JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return Schema.from_dict(obj)


def save_schema(schema: Schema, path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


def ingest_csv(path, schema: Schema, ignore_extra: bool = False) -> Dataset:
    """Read a header-row CSV and map each cell to its category index.

    Column order may differ from the schema. Columns not named in the
    schema are an error unless ``ignore_extra`` is set. Row numbers in
    error messages count data rows from 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty dataset")
        header = [h.strip() for h in header]
        unknown = [h for h in header if h not in schema.names]
        if unknown and not ignore_extra:
            raise DataError(f"{path}: unknown column(s) {unknown}")
        missing = [nm for nm in schema.names if nm not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate columns in header")
        order = [header.index(nm) for nm in schema.names]
        lookups = [{c: k for k, c in enumerate(f.categories)} for f in schema.features]
        rows = []
        for r, raw in enumerate(reader, start=1):
            if not raw:
                continue
            if len(raw) != len(header):
                raise DataError(f"{path}: row {r} has {len(raw)} fields, expected {len(header)}")
            point = []
            for j, col in enumerate(order):
                value = raw[col]
                try:
                    point.append(lookups[j][value])
                except KeyError:
                    raise DataError(
                        f"{path}: row {r}, column {schema.names[j]!r}: "
                        f"value {value!r} is not a category"
                    ) from None
            rows.append(point)
    if not rows:
        raise DataError(f"{path}: empty dataset")
    return Dataset(schema, rows)


def write_csv(data: Dataset, path) -> None:
    """Write labels (not indices) with a header in schema order."""
    schema = data.schema
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema.names)
        for row in data.rows:
            w.writerow(schema.labels(row))


def split_dataset(data: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random disjoint split; the first part gets ``floor(fraction * n)`` rows."""
    if data.n < 2:
        raise DataError("need at least 2 rows to split")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(data.n)
    k = math.floor(fraction * data.n)
    return data.subset(np.sort(perm[:k])), data.subset(np.sort(perm[k:]))
